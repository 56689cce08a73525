#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace forkjoin {

// --threads, then FORKJOIN_THREADS, then the hardware concurrency.
inline unsigned resolve_threads(std::optional<int> requested) {
  if (requested) {
    if (*requested < 1) throw std::invalid_argument("--threads must be >= 1");
    return static_cast<unsigned>(*requested);
  }
  if (const char* env = std::getenv("FORKJOIN_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(std::string("FORKJOIN_THREADS must be a positive integer, got '") +
                                env + "'");
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

// Runs fn(0) .. fn(count - 1) on a bounded pool of workers and returns the
// results in replication order, so any reduction over them is independent of
// scheduling. The first exception thrown by any replication is rethrown.
template <class Fn>
auto run_replications(std::size_t count, unsigned threads, Fn&& fn)
    -> std::vector<std::invoke_result_t<Fn&, std::size_t>> {
  using Result = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<std::optional<Result>> slots(count);
  const unsigned workers = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<Result> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace forkjoin
