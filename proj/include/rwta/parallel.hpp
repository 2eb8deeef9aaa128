#pragma once

#include <functional>

namespace rwta {

// Worker streams for embarrassingly parallel loops. RWTA_THREADS caps the
// count (default 1); deterministic mode always runs a single stream.
int worker_count(bool deterministic);

// Runs fn(i) for i in [0, n). With workers > 1 the index space is split
// into contiguous shards, one thread each; results must be written to
// disjoint slots so the output is identical either way.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

}  // namespace rwta
