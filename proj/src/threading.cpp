#include "sleb/threading.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace sleb {

size_t worker_count() {
  static const size_t cached = [] {
    size_t n = std::thread::hardware_concurrency();
    if (n == 0) {
      n = 1;
    }
    if (const char* env = std::getenv("SLEB_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end != env && *end == '\0' && v >= 1) {
        n = std::min(n, static_cast<size_t>(v));
      }
    }
    return n;
  }();
  return cached;
}

void parallel_for(size_t n, const std::function<void(size_t)>& f) {
  const size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) {
      f(i);
    }
    return;
  }

  std::atomic<size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;

  auto body = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) {
        return;
      }
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) {
          first_error = std::current_exception();
        }
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (size_t w = 1; w < workers; ++w) {
    pool.emplace_back(body);
  }
  body();
  for (auto& t : pool) {
    t.join();
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }
}

}  // namespace sleb
