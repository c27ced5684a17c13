#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "calltide/labeling.hpp"

namespace calltide {

enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };

inline constexpr std::array<Split, 3> kSplits{Split::train, Split::validation, Split::test};

std::string_view to_string(Split s) noexcept;
Split parse_split(std::string_view name);

struct SplitProportions {
    double train = 0.8;
    double validation = 0.1;
    double test = 0.1;

    std::array<double, 3> as_array() const { return {train, validation, test}; }

    /// All fractions strictly positive and summing to 1 within 1e-9.
    void validate() const;

    /// "0.8,0.1,0.1"
    static SplitProportions parse(std::string_view text);

    friend bool operator==(const SplitProportions&, const SplitProportions&) = default;
};

struct SplitAssignment {
    std::string transcript_id;
    Split split = Split::train;
    std::uint64_t seed = 42;
    SplitProportions proportions;

    friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

inline constexpr std::uint64_t kDefaultSplitSeed = 42;

/// Largest-remainder apportionment of n items: floors of n * fraction, then
/// one extra each to the largest fractional parts (earlier split on ties).
std::array<std::size_t, 3> largest_remainder_sizes(std::size_t n, const SplitProportions& p);

/// Uniform integer in [0, bound) from a 64-bit Mersenne Twister stream, by
/// rejection; identical on every platform.
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed);
    std::uint64_t next();
    std::uint64_t below(std::uint64_t bound);

private:
    std::mt19937_64 engine_;  // engine output is fixed by the standard
};

/// Within each label class (or over everything when `stratify` is false),
/// members are ordered by transcript id, shuffled with SplitRng(seed) and cut
/// by largest-remainder sizes. Result is sorted by transcript id.
/// Throws InsufficientExamples when stratifying and any class is empty.
std::vector<SplitAssignment> stratified_split(std::span<const LabeledExample> examples,
                                              const SplitProportions& proportions = {},
                                              std::uint64_t seed = kDefaultSplitSeed,
                                              bool stratify = true);

}  // namespace calltide
