#pragma once

namespace ffloor {

// Every data-parallel kernel has a serial reference path and an OpenMP path.
// Both must produce bit-identical results; the serial path is what the tests
// compare against.
enum class Exec { serial, parallel };

// Caps the OpenMP worker count for parallel kernels. n <= 0 restores the
// default (FF_THREADS if set, else all available cores).
void set_thread_count(int n);
int thread_count();

}  // namespace ffloor
