#pragma once
#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace subpop {

/** Execution policy for the batched kernels.
 *
 * Work over a batch of `n` items is cut into chunks of `grain` items.  In
 * deterministic mode the chunk boundaries depend only on `n` and `grain`, and
 * per-chunk partial results are combined with a fixed pairwise tree, so the
 * result is bit-identical for every worker count.  Fast mode cuts the batch into
 * one contiguous range per worker instead, so the reduction order follows the
 * worker count.
 */
class Executor {
    public:
        struct Options {
            unsigned workers = 1;
            bool deterministic = true;
            std::size_t grain = 256;
        };

        Executor();
        explicit Executor(Options opts);
        ~Executor();
        Executor(const Executor &) = delete;
        Executor &operator=(const Executor &) = delete;

        /// Shared single-worker deterministic executor.
        static Executor &serial();

        unsigned workers() const { return opts_.workers; }
        bool deterministic() const { return opts_.deterministic; }
        std::size_t grain() const { return opts_.grain; }

        /// Number of chunks a batch of `n` items is cut into under this policy.
        std::size_t chunk_count(std::size_t n) const;
        std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, std::size_t chunk) const;

        /// Calls `body(begin, end)` over disjoint ranges covering [0, n).
        template <class Body>
        void for_range(std::size_t n, Body &&body) {
            const std::size_t chunks = chunk_count(n);
            run_chunks(chunks, [&](std::size_t c) {
                auto [b, e] = chunk_range(n, c);
                body(b, e);
            });
        }

        /** Map-reduce over [0, n).  `map(begin, end)` returns the partial result of one
         * range; partials are merged with `combine(T, T) -> T`.  Returns `identity` for
         * n == 0.
         */
        template <class T, class Map, class Combine>
        T reduce(std::size_t n, T identity, Map &&map, Combine &&combine) {
            const std::size_t chunks = chunk_count(n);
            if (chunks == 0) return identity;
            std::vector<T> partial(chunks, identity);
            run_chunks(chunks, [&](std::size_t c) {
                auto [b, e] = chunk_range(n, c);
                partial[c] = map(b, e);
            });
            // Fixed pairwise tree: stride doubles each level.
            for (std::size_t stride = 1; stride < chunks; stride *= 2) {
                for (std::size_t i = 0; i + stride < chunks; i += 2 * stride) {
                    partial[i] = combine(std::move(partial[i]), std::move(partial[i + stride]));
                }
            }
            return std::move(partial[0]);
        }

    private:
        void run_chunks(std::size_t chunks, const std::function<void(std::size_t)> &job);

        struct Pool;
        Options opts_;
        std::unique_ptr<Pool> pool_;
};

/// Worker count from the SUBPOP_WORKERS environment variable, or `fallback` when unset/invalid.
unsigned workers_from_env(unsigned fallback);

} // namespace subpop
