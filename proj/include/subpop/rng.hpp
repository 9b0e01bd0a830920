#pragma once
#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace subpop {

/** Philox4x32-10 counter-based generator.
 *
 * The 64-bit key and the upper 64 counter bits select an independent stream; the
 * lower 64 counter bits advance.  Satisfies UniformRandomBitGenerator.
 */
class Philox4x32 {
    public:
        using result_type = std::uint32_t;

        Philox4x32(std::uint64_t key, std::uint64_t stream) : key_{key}, stream_{stream} {}

        static constexpr result_type min() { return 0; }
        static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

        result_type operator()() {
            if (used_ == 4) {
                block_ = generate(counter_++);
                used_ = 0;
            }
            return block_[used_++];
        }

        /// Output block for an explicit counter value; pure.
        std::array<std::uint32_t, 4> generate(std::uint64_t counter) const;

        bool operator==(const Philox4x32 &) const = default;

    private:
        std::uint64_t key_;
        std::uint64_t stream_;
        std::uint64_t counter_ = 0;
        std::array<std::uint32_t, 4> block_{};
        unsigned used_ = 4;
};

/** One independent random stream keyed by (seed, stream_id).
 *
 * Single-owner mutable state.  Copying a stream copies its position, so a copy
 * replays the same sequence as the original.
 */
class RngStream {
    public:
        RngStream(std::uint64_t seed, std::uint64_t stream_id);

        std::uint64_t seed() const { return seed_; }
        std::uint64_t stream_id() const { return stream_id_; }

        /// Uniform on the open-closed interval (0, 1].
        double uniform();
        /// Standard normal.
        double normal();

        Philox4x32 &engine() { return engine_; }

    private:
        std::uint64_t seed_;
        std::uint64_t stream_id_;
        Philox4x32 engine_;
        std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace subpop
