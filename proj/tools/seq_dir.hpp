#pragma once

#include <string>
#include <vector>

#include "edsc/datagen.hpp"

// On-disk layout for synthetic sequences: <data>/seqNNN/frame_K.ppm for
// K = 0..frames-1 plus flow_0_to_<frames-1>.flo1 when ground-truth flow is
// available. Times are implied by the frame count.
namespace edsc::tools {

std::string seq_dir_name(int index);

void write_sequence_dir(const std::string& dir, const SyntheticSequence& s);

// Reads frame_0.ppm, frame_1.ppm, ... until the numbering stops, plus the
// flow file when present. occ_alpha is not persisted and stays empty.
SyntheticSequence load_sequence_dir(const std::string& dir);

// Sorted seqNNN subdirectories of a dataset directory.
std::vector<std::string> list_sequence_dirs(const std::string& data_dir);

}  // namespace edsc::tools
