#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace calltide {

struct PriceWindow;

enum class Label : std::uint8_t { negative = 0, neutral = 1, positive = 2 };

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<Label, kNumClasses> kLabels{Label::negative, Label::neutral,
                                                        Label::positive};

constexpr int to_int(Label l) { return static_cast<int>(l); }
constexpr std::size_t index_of(Label l) { return static_cast<std::size_t>(l); }
std::optional<Label> label_from_int(long long value);
std::string_view label_name(Label l) noexcept;

struct Thresholds {
    double negative = -3.0;  // percent
    double positive = 3.0;   // percent

    /// Throws ConfigurationError unless negative < positive (both finite).
    void validate() const;
};

struct LabeledExample {
    std::string transcript_id;
    double price_movement = 0.0;  // percent
    Label label = Label::neutral;
    Thresholds thresholds;

    friend bool operator==(const LabeledExample& a, const LabeledExample& b) {
        return a.transcript_id == b.transcript_id && a.price_movement == b.price_movement &&
               a.label == b.label && a.thresholds.negative == b.thresholds.negative &&
               a.thresholds.positive == b.thresholds.positive;
    }
};

/// Percent change from the close two days before to two days after.
double price_movement(double sp_m2, double sp_p2);
double price_movement(const PriceWindow& window);

/// Strictly below the negative threshold is 0, strictly above the positive
/// one is 2; everything in between, both boundaries included, is 1.
Label assign_label(double movement, const Thresholds& thresholds = {});

LabeledExample label_window(const PriceWindow& window, const Thresholds& thresholds = {});

struct ClassBalance {
    std::array<std::size_t, kNumClasses> counts{};
    std::array<double, kNumClasses> proportions{};
    std::size_t total = 0;
};

ClassBalance class_balance(std::span<const Label> labels);
ClassBalance class_balance(std::span<const LabeledExample> examples);

}  // namespace calltide
