#include "tcvsr/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace tcvsr {
namespace {

int initial_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("TCVSR_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return std::min(v, hw);
  }
  return hw;
}

std::atomic<int>& thread_setting() {
  static std::atomic<int> n{initial_threads()};
  return n;
}

// Fixed pool; tasks are chunk indices pulled from a shared counter.
class Pool {
 public:
  static Pool& instance() {
    static Pool pool;
    return pool;
  }

  void run(int chunks, const std::function<void(int)>& task) {
    std::unique_lock lock(mu_);
    ensure_workers(chunks - 1);
    task_ = &task;
    total_ = chunks;
    next_.store(1);
    done_ = 1;
    ++generation_;
    lock.unlock();
    cv_.notify_all();
    task(0);
    drain();
    lock.lock();
    done_cv_.wait(lock, [&] { return done_ == total_; });
    task_ = nullptr;
  }

  ~Pool() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

 private:
  void ensure_workers(int n) {
    while (static_cast<int>(workers_.size()) < n) {
      workers_.emplace_back([this] { loop(); });
    }
  }

  void drain() {
    for (;;) {
      const int k = next_.fetch_add(1);
      if (k >= total_) return;
      (*task_)(k);
      std::lock_guard lock(mu_);
      if (++done_ == total_) done_cv_.notify_all();
    }
  }

  void loop() {
    std::uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      drain();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> workers_;
  const std::function<void(int)>* task_ = nullptr;
  std::atomic<int> next_{0};
  int total_ = 0;
  int done_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

std::mutex& run_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

int num_threads() { return thread_setting().load(); }

void set_num_threads(int n) { thread_setting().store(std::max(1, n)); }

void parallel_for(std::int64_t n, std::int64_t min_chunk,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (n <= 0) return;
  min_chunk = std::max<std::int64_t>(1, min_chunk);
  const std::int64_t max_chunks = std::max<std::int64_t>(1, n / min_chunk);
  const int chunks = static_cast<int>(std::min<std::int64_t>(num_threads(), max_chunks));
  if (chunks <= 1) {
    fn(0, n);
    return;
  }
  // Nested or concurrent callers fall back to serial execution.
  std::unique_lock lock(run_mutex(), std::try_to_lock);
  if (!lock.owns_lock()) {
    fn(0, n);
    return;
  }
  const std::int64_t step = (n + chunks - 1) / chunks;
  Pool::instance().run(chunks, [&](int k) {
    const std::int64_t b = k * step;
    const std::int64_t e = std::min(n, b + step);
    if (b < e) fn(b, e);
  });
}

}  // namespace tcvsr
