#include "ssldetect/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace ssldetect {

namespace {

int env_thread_cap() {
    const char* v = std::getenv("SSLDETECT_THREADS");
    if (!v) return 0;
    int n = std::atoi(v);
    return n > 0 ? n : 0;
}

int default_thread_count() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    int cap = env_thread_cap();
    if (cap > 0) hw = std::min(hw, cap);
    return hw;
}

int g_threads = 0; // 0 = uninitialized

thread_local bool t_in_parallel = false;

// Persistent pool: spawning threads per parallel_for call would dominate the
// cost of small kernels. Each run() gets its own heap-allocated job, so a
// worker that wakes late only ever touches the job it copied under the lock,
// never a reused counter.
class Pool {
public:
    explicit Pool(int workers) {
        for (int i = 0; i < workers; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::lock_guard lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(int64_t n, const std::function<void(int64_t, int64_t)>& fn, int parts) {
        auto job = std::make_shared<Job>();
        job->fn = &fn;
        job->n = n;
        job->parts = parts;
        job->chunk = (n + parts - 1) / parts;
        job->remaining = parts;
        {
            std::lock_guard lk(mu_);
            current_ = job;
            ++generation_;
        }
        cv_.notify_all();
        work_on(*job);
        std::unique_lock lk(mu_);
        done_cv_.wait(lk, [&] { return job->remaining == 0; });
        if (current_ == job) current_.reset();
    }

private:
    struct Job {
        const std::function<void(int64_t, int64_t)>* fn = nullptr;
        int64_t n = 0;
        int parts = 0;
        int64_t chunk = 0;
        std::atomic<int> next{0};
        int remaining = 0; // guarded by mu_
    };

    void work_on(Job& job) {
        bool saved = t_in_parallel;
        t_in_parallel = true;
        for (;;) {
            int part = job.next.fetch_add(1, std::memory_order_relaxed);
            if (part >= job.parts) break;
            int64_t b = part * job.chunk;
            int64_t e = std::min<int64_t>(job.n, b + job.chunk);
            if (b < e) (*job.fn)(b, e);
            {
                std::lock_guard lk(mu_);
                if (--job.remaining == 0) done_cv_.notify_all();
            }
        }
        t_in_parallel = saved;
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            std::shared_ptr<Job> job;
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                job = current_;
            }
            if (job) work_on(*job);
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::shared_ptr<Job> current_;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

Pool& pool() {
    static Pool p(thread_count() - 1);
    return p;
}

} // namespace

int thread_count() {
    if (g_threads == 0) g_threads = default_thread_count();
    return g_threads;
}

void set_thread_count(int n) {
    if (n > 0) g_threads = n;
}

void parallel_for_chunked(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    int workers = thread_count();
    if (workers <= 1 || n == 1 || t_in_parallel) {
        fn(0, n);
        return;
    }
    int parts = static_cast<int>(std::min<int64_t>(n, workers * 4));
    pool().run(n, fn, parts);
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    parallel_for_chunked(n, [&fn](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) fn(i);
    });
}

} // namespace ssldetect
