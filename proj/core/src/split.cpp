#include "calltide/split.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "calltide/errors.hpp"

namespace calltide {

std::string_view to_string(Split s) noexcept {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "validation" || name == "val") return Split::validation;
    if (name == "test") return Split::test;
    throw ConfigurationError("unknown split '" + std::string(name) + "'");
}

void SplitProportions::validate() const {
    const auto a = as_array();
    for (double f : a) {
        if (!std::isfinite(f) || !(f > 0.0)) {
            throw ConfigurationError("split fractions must all be positive");
        }
    }
    if (std::abs(train + validation + test - 1.0) > 1e-9) {
        throw ConfigurationError("split fractions must sum to 1");
    }
}

SplitProportions SplitProportions::parse(std::string_view text) {
    std::vector<double> parts;
    std::stringstream in{std::string(text)};
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigurationError("bad split ratio '" + item + "'");
        }
    }
    if (parts.size() != 3) throw ConfigurationError("expected three comma-separated split ratios");
    SplitProportions p{parts[0], parts[1], parts[2]};
    p.validate();
    return p;
}

std::array<std::size_t, 3> largest_remainder_sizes(std::size_t n, const SplitProportions& p) {
    const auto fractions = p.as_array();
    std::array<std::size_t, 3> sizes{};
    std::array<long double, 3> remainders{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        const long double quota = static_cast<long double>(n) * fractions[s];
        // Snap quotas that are integers up to rounding noise (e.g. 10 * 0.1).
        const long double nearest = std::round(quota);
        const long double q = std::abs(quota - nearest) < 1e-9L ? nearest : quota;
        const long double fl = std::floor(q);
        sizes[s] = static_cast<std::size_t>(fl);
        remainders[s] = q - fl;
        assigned += sizes[s];
    }
    // Remainders equal up to rounding noise (2 * 0.7 vs 2 * 0.2) must tie, so
    // compare them quantized; ties keep split order.
    std::array<long long, 3> rank{};
    for (std::size_t s = 0; s < 3; ++s) rank[s] = std::llround(remainders[s] * 1e9L);
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rank[a] > rank[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
    for (std::size_t k = 3; assigned > n; --assigned) {
        while (sizes[order[(k - 1) % 3]] == 0) --k;
        --sizes[order[(k - 1) % 3]];
    }
    return sizes;
}

SplitRng::SplitRng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t SplitRng::next() { return engine_(); }

std::uint64_t SplitRng::below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    // Reject the top partial bucket so every residue is equally likely.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
        const std::uint64_t x = next();
        if (x < limit) return x % bound;
    }
}

std::vector<SplitAssignment> stratified_split(std::span<const LabeledExample> examples,
                                              const SplitProportions& proportions,
                                              std::uint64_t seed, bool stratify) {
    proportions.validate();

    std::map<int, std::vector<std::string>> groups;
    std::set<std::string> ids;
    for (const auto& e : examples) {
        if (!ids.insert(e.transcript_id).second) {
            throw ConstraintViolation("duplicate example " + e.transcript_id);
        }
        groups[stratify ? to_int(e.label) : 0].push_back(e.transcript_id);
    }
    if (stratify) {
        for (Label l : kLabels) {
            if (!groups.contains(to_int(l))) {
                throw InsufficientExamples("no examples with label " + std::string(label_name(l)) +
                                           "; stratified split needs every class");
            }
        }
    }

    SplitRng rng(seed);
    std::vector<SplitAssignment> out;
    out.reserve(examples.size());
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end());
        for (std::size_t i = members.size(); i > 1; --i) {
            std::swap(members[i - 1], members[rng.below(i)]);
        }
        const auto sizes = largest_remainder_sizes(members.size(), proportions);
        std::size_t pos = 0;
        for (std::size_t s = 0; s < 3; ++s) {
            for (std::size_t k = 0; k < sizes[s]; ++k, ++pos) {
                out.push_back(SplitAssignment{members[pos], kSplits[s], seed, proportions});
            }
        }
    }
    std::sort(out.begin(), out.end(),
              [](const SplitAssignment& a, const SplitAssignment& b) {
                  return a.transcript_id < b.transcript_id;
              });
    return out;
}

}  // namespace calltide
