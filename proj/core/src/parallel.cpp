#include "tsmpc/parallel.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace tsmpc {

int default_thread_count() {
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for_blocks(std::int64_t count, int threads,
                         const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (count <= 0) return;
  if (threads < 1) throw std::invalid_argument("parallel_for_blocks: threads must be >= 1");

  const int workers = static_cast<int>(std::min<std::int64_t>(threads, count));
  if (workers == 1) {
    body(0, count);
    return;
  }

  // Static partition: worker w owns [w*chunk + min(w, rem), ...) so block
  // boundaries depend only on (count, workers).
  const std::int64_t chunk = count / workers;
  const std::int64_t rem = count % workers;

  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);

  auto run_block = [&](int w) {
    const std::int64_t begin = w * chunk + std::min<std::int64_t>(w, rem);
    const std::int64_t end = begin + chunk + (w < rem ? 1 : 0);
    try {
      if (begin < end) body(begin, end);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  for (int w = 1; w < workers; ++w) pool.emplace_back(run_block, w);
  run_block(0);
  for (auto& t : pool) t.join();

  if (first_error) std::rethrow_exception(first_error);
}

void parallel_for(std::int64_t count, int threads,
                  const std::function<void(std::int64_t)>& body) {
  parallel_for_blocks(count, threads, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t i = begin; i < end; ++i) body(i);
  });
}

}  // namespace tsmpc
