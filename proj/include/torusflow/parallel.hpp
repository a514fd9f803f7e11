// Replica-level worker pool.  Work items write only their own result slot,
// so the output is independent of the worker count; the count itself comes
// from TORUSFLOW_WORKERS (the only environment override).
#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace torusflow {

inline int worker_count() {
    static int n = [] {
        if (const char* env = std::getenv("TORUSFLOW_WORKERS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return n;
}

template <class F>
void parallel_for(int n, F&& f, int workers = 0) {
    if (workers <= 0) workers = worker_count();
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> g(err_mutex);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace torusflow
