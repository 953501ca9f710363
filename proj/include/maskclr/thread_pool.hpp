// Copyright 2026 The maskclr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace maskclr {

// Static-partition parallel_for over [0, n). Each index is processed by
// exactly one worker in ascending order within its chunk, so results are
// bit-identical for any thread count as long as chunks write disjoint data.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  // Number of workers used for subsequent parallel_for calls (1 = inline).
  void set_threads(int n) {
    std::lock_guard<std::mutex> lk(config_mutex_);
    threads_ = n < 1 ? 1 : n;
  }

  int threads() {
    std::lock_guard<std::mutex> lk(config_mutex_);
    return threads_;
  }

  template <typename Fn>  // Fn(int64_t begin, int64_t end)
  void parallel_for(std::int64_t n, std::int64_t grain, Fn&& fn) {
    int nthreads = threads();
    if (n <= 0) return;
    if (nthreads <= 1 || n < 2 * grain) {
      fn(0, n);
      return;
    }
    std::int64_t chunks = std::min<std::int64_t>(nthreads, (n + grain - 1) / grain);
    std::vector<std::thread> workers;
    workers.reserve(std::size_t(chunks - 1));
    const std::int64_t per = (n + chunks - 1) / chunks;
    for (std::int64_t c = 1; c < chunks; ++c) {
      const std::int64_t b = c * per;
      const std::int64_t e = std::min(n, b + per);
      if (b >= e) break;
      workers.emplace_back([&fn, b, e] { fn(b, e); });
    }
    fn(0, std::min(per, n));
    for (auto& t : workers) t.join();
  }

 private:
  ThreadPool() : threads_(int(std::thread::hardware_concurrency())) {
    if (threads_ < 1) threads_ = 1;
  }
  std::mutex config_mutex_;
  int threads_;
};

template <typename Fn>
inline void parallel_for(std::int64_t n, std::int64_t grain, Fn&& fn) {
  ThreadPool::instance().parallel_for(n, grain, std::forward<Fn>(fn));
}

}  // namespace maskclr
