// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace artic {

/// Worker count: ARTIC_THREADS if set, otherwise the hardware concurrency.
int worker_count();
void set_worker_count(int n);

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Work items must be independent;
/// callers that reduce results do so afterwards in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace artic
