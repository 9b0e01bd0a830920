#include "subpop/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "subpop/errors.hpp"

namespace subpop {

// Persistent workers; the calling thread also takes chunks.
struct Executor::Pool {
    explicit Pool(unsigned helpers) {
        threads.reserve(helpers);
        for (unsigned t = 0; t < helpers; ++t) {
            threads.emplace_back([this] { loop(); });
        }
    }

    ~Pool() {
        {
            std::lock_guard lock{mu};
            stopping = true;
        }
        wake.notify_all();
        for (auto &t : threads) t.join();
    }

    void run(std::size_t chunks, const std::function<void(std::size_t)> &job) {
        {
            std::lock_guard lock{mu};
            current = &job;
            total = chunks;
            next.store(0);
            active = threads.size();
            error = nullptr;
            ++generation;
        }
        wake.notify_all();
        drain();
        std::unique_lock lock{mu};
        done.wait(lock, [this] { return active == 0; });
        current = nullptr;
        if (error) std::rethrow_exception(error);
    }

    void drain() {
        for (;;) {
            std::size_t c = next.fetch_add(1);
            if (c >= total) return;
            try {
                (*current)(c);
            } catch (...) {
                std::lock_guard lock{mu};
                if (!error) error = std::current_exception();
            }
        }
    }

    void loop() {
        std::size_t seen = 0;
        for (;;) {
            {
                std::unique_lock lock{mu};
                wake.wait(lock, [&] { return stopping || generation != seen; });
                if (stopping) return;
                seen = generation;
            }
            drain();
            {
                std::lock_guard lock{mu};
                if (--active == 0) done.notify_one();
            }
        }
    }

    std::vector<std::thread> threads;
    std::mutex mu;
    std::condition_variable wake, done;
    const std::function<void(std::size_t)> *current = nullptr;
    std::size_t total = 0;
    std::atomic<std::size_t> next{0};
    std::size_t active = 0;
    std::size_t generation = 0;
    bool stopping = false;
    std::exception_ptr error;
};

Executor::Executor() : Executor(Options{}) {}

Executor::Executor(Options opts) : opts_{opts} {
    if (opts_.workers == 0) throw ParameterError("Executor: workers must be >= 1");
    if (opts_.grain == 0) throw ParameterError("Executor: grain must be >= 1");
    if (opts_.workers > 1) pool_ = std::make_unique<Pool>(opts_.workers - 1);
}

Executor::~Executor() = default;

Executor &Executor::serial() {
    static Executor exec{Options{1, true, 256}};
    return exec;
}

std::size_t Executor::chunk_count(std::size_t n) const {
    if (n == 0) return 0;
    if (opts_.deterministic) return (n + opts_.grain - 1) / opts_.grain;
    return std::min<std::size_t>(opts_.workers, n);
}

std::pair<std::size_t, std::size_t> Executor::chunk_range(std::size_t n, std::size_t chunk) const {
    if (opts_.deterministic) {
        std::size_t b = chunk * opts_.grain;
        return {b, std::min(n, b + opts_.grain)};
    }
    std::size_t parts = chunk_count(n);
    std::size_t base = n / parts, extra = n % parts;
    std::size_t b = chunk * base + std::min(chunk, extra);
    return {b, b + base + (chunk < extra ? 1 : 0)};
}

void Executor::run_chunks(std::size_t chunks, const std::function<void(std::size_t)> &job) {
    if (chunks == 0) return;
    if (!pool_ || chunks == 1) {
        for (std::size_t c = 0; c < chunks; ++c) job(c);
        return;
    }
    pool_->run(chunks, job);
}

unsigned workers_from_env(unsigned fallback) {
    const char *v = std::getenv("SUBPOP_WORKERS");
    if (v == nullptr || *v == '\0') return fallback;
    try {
        long n = std::stol(v);
        if (n >= 1) return static_cast<unsigned>(n);
    } catch (const std::exception &) {
    }
    return fallback;
}

} // namespace subpop
