#pragma once

#include <array>
#include <cstdint>
#include <limits>

#include <boost/random/normal_distribution.hpp>

namespace hedgedisc {

/// Philox4x32-10 counter-based generator. The key is the master seed and
/// the upper counter words select the stream, so every (seed, stream) pair
/// is an independent, random-access sequence.
class Philox4x32 {
public:
    using result_type = std::uint32_t;
    using block = std::array<std::uint32_t, 4>;
    using key_type = std::array<std::uint32_t, 2>;

    Philox4x32(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          counter_{0, 0, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)} {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (used_ == 4) {
            buffer_ = generate(counter_, key_);
            if (++counter_[0] == 0) ++counter_[1];
            used_ = 0;
        }
        return buffer_[used_++];
    }

    /// The raw bijection: ten rounds of Philox over one counter block.
    static block generate(block ctr, key_type key) {
        constexpr std::uint32_t kMul0 = 0xD2511F53u;
        constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
        constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
        constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        }
        return ctr;
    }

private:
    key_type key_;
    block counter_;
    block buffer_{};
    int used_ = 4;
};

/// Per-path source of standard normal draws.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t path_id) : engine_(seed, path_id) {}

    double normal() { return normal_(engine_); }

    Philox4x32& engine() { return engine_; }

private:
    Philox4x32 engine_;
    boost::random::normal_distribution<double> normal_;
};

}  // namespace hedgedisc
