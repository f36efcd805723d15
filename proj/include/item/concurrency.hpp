#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace item {

/// Runs fn(0) .. fn(count - 1) on up to `threads` workers. Each index is
/// handled exactly once; results must not depend on which worker ran it.
/// The first exception thrown by any call is rethrown after all workers join.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

/// splitmix64 finalizer, used to derive independent per-task seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace item
