#pragma once

namespace edsc::threading {

// Global worker-thread setting. 1 selects the serial reference kernels and is
// the bit-reproducible mode; >1 dispatches to the OpenMP kernels.
int threads();
void set_threads(int n);

// True when the OpenMP kernel variants will actually be used.
bool parallel_enabled();

// Number of OpenMP threads the parallel variants will run with.
int effective_threads();

}  // namespace edsc::threading
