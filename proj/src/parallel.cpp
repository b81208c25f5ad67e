#include "raca/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace raca {

namespace {

std::atomic<std::size_t> g_threads{0};

}  // namespace

std::size_t thread_count() {
  const std::size_t configured = g_threads.load();
  if (configured > 0) return configured;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void set_thread_count(std::size_t threads) { g_threads.store(threads); }

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(thread_count(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  // Lowest failing index wins so the reported error does not depend on scheduling.
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace raca
