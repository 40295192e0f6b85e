#pragma once

namespace wrt {

/// Upper bound on worker threads used by parallel loops. Zero or negative
/// restores the default (all available cores). Results never depend on it.
void set_worker_count(int workers);
int worker_count();

}  // namespace wrt
