#pragma once

#include <functional>

namespace rcalign {

// Worker count resolution: explicit argument > RCALIGN_NUM_WORKERS env
// var > hardware default. Used for dataset generation and evaluation
// fan-out only; training steps stay sequential.
int resolve_num_workers(int requested);

// Runs fn(0..n-1) across workers. Results must be written to per-index
// slots by the callee; completion order is unspecified but the work
// partition is deterministic.
void parallel_for(int n, int num_workers, const std::function<void(int)>& fn);

}  // namespace rcalign
