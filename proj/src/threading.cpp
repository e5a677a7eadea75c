#include "edsc/threading.hpp"

#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace edsc::threading {

namespace {
int g_threads = 1;
}

int threads() { return g_threads; }

void set_threads(int n) {
    if (n < 1) throw std::invalid_argument("thread count must be >= 1");
    g_threads = n;
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
}

bool parallel_enabled() {
#ifdef _OPENMP
    return g_threads > 1;
#else
    return false;
#endif
}

int effective_threads() {
#ifdef _OPENMP
    return g_threads;
#else
    return 1;
#endif
}

}  // namespace edsc::threading
