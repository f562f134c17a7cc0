#pragma once

// Fixed-chunk data parallelism.
//
// Work is always split into the same chunks regardless of how many threads
// run them, and every chunk writes to its own output slots. Reductions are
// done by the caller afterwards in index order, so results never depend on
// the thread count or on scheduling.

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace patchot {

class ThreadPool {
 public:
  explicit ThreadPool(unsigned num_threads) : num_threads_(std::max(1u, num_threads)) {
    for (unsigned t = 1; t < num_threads_; ++t) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    wake_.notify_all();
    for (auto& w : workers_) w.join();
  }

  unsigned size() const { return num_threads_; }

  // Runs task(i) for i in [0, num_tasks). The calling thread participates.
  void run(std::size_t num_tasks, const std::function<void(std::size_t)>& task) {
    if (num_tasks == 0) return;
    if (num_threads_ == 1 || num_tasks == 1 || inside_task()) {
      for (std::size_t i = 0; i < num_tasks; ++i) task(i);
      return;
    }
    std::unique_lock run_lock(run_mutex_);
    {
      std::lock_guard lock(mutex_);
      task_ = &task;
      num_tasks_ = num_tasks;
      next_.store(0);
      pending_workers_ = workers_.size();
      error_ = nullptr;
      ++generation_;
    }
    wake_.notify_all();
    drain();
    std::unique_lock lock(mutex_);
    done_.wait(lock, [this] { return pending_workers_ == 0; });
    task_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  // Nested parallel sections run serially on the current thread.
  static bool& inside_task() {
    thread_local bool flag = false;
    return flag;
  }

  void drain() {
    inside_task() = true;
    for (;;) {
      const std::size_t i = next_.fetch_add(1);
      if (i >= num_tasks_) break;
      try {
        (*task_)(i);
      } catch (...) {
        std::lock_guard lock(mutex_);
        if (!error_) error_ = std::current_exception();
      }
    }
    inside_task() = false;
  }

  void worker_loop() {
    std::size_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) return;
        seen = generation_;
      }
      drain();
      {
        std::lock_guard lock(mutex_);
        --pending_workers_;
      }
      done_.notify_one();
    }
  }

  unsigned num_threads_;
  std::vector<std::thread> workers_;
  std::mutex run_mutex_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::size_t num_tasks_ = 0;
  std::atomic<std::size_t> next_{0};
  std::size_t pending_workers_ = 0;
  std::size_t generation_ = 0;
  bool stopping_ = false;
  std::exception_ptr error_;
};

namespace detail {

inline unsigned default_thread_count() {
  if (const char* env = std::getenv("PATCHOT_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::unique_ptr<ThreadPool>& global_pool() {
  static std::unique_ptr<ThreadPool> pool = std::make_unique<ThreadPool>(default_thread_count());
  return pool;
}

}  // namespace detail

/// Caps internal data parallelism. Not safe to call while parallel work is running.
inline void set_num_threads(unsigned n) {
  detail::global_pool() = std::make_unique<ThreadPool>(std::max(1u, n));
}

inline unsigned num_threads() { return detail::global_pool()->size(); }

/// Calls body(lo, hi) over [begin, end) split into chunks of `grain` items.
/// Chunk boundaries depend only on begin, end and grain.
template <class Body>
void parallel_for(std::size_t begin, std::size_t end, std::size_t grain, Body&& body) {
  if (end <= begin) return;
  grain = std::max<std::size_t>(1, grain);
  const std::size_t num_chunks = (end - begin + grain - 1) / grain;
  const std::function<void(std::size_t)> task = [&](std::size_t c) {
    const std::size_t lo = begin + c * grain;
    body(lo, std::min(end, lo + grain));
  };
  detail::global_pool()->run(num_chunks, task);
}

}  // namespace patchot
