#pragma once

namespace scarr {

/// Execution path for batch kernels. `serial` is the reference
/// implementation the OpenMP path is tested against.
enum class Exec { serial, parallel };

/// Caps OpenMP worker threads; n <= 0 leaves the runtime default.
void set_worker_count(int n);
int worker_count();

} // namespace scarr
