#include "ffloor/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace ffloor {

namespace {

int default_threads() {
  if (const char* env = std::getenv("FF_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  return omp_get_num_procs();
}

int g_threads = 0;

}  // namespace

void set_thread_count(int n) {
  g_threads = n > 0 ? n : 0;
  omp_set_num_threads(thread_count());
}

int thread_count() { return g_threads > 0 ? g_threads : default_threads(); }

}  // namespace ffloor
