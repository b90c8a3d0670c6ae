#pragma once

namespace rekd::parallel {

/// Worker count used by the OpenMP kernels. Reads REKD_THREADS on first use;
/// deterministic mode forces 1.
int thread_count();

void set_thread_count(int n);

/// Single-threaded numerics, fixed accumulation order.
void set_deterministic(bool on);
bool deterministic();

} // namespace rekd::parallel
