#include "calltide/labeling.hpp"

#include <cmath>
#include <vector>

#include "calltide/errors.hpp"
#include "calltide/market_data.hpp"

namespace calltide {

std::optional<Label> label_from_int(long long value) {
    if (value < 0 || value > 2) return std::nullopt;
    return static_cast<Label>(value);
}

std::string_view label_name(Label l) noexcept {
    switch (l) {
        case Label::negative: return "negative";
        case Label::neutral: return "neutral";
        case Label::positive: return "positive";
    }
    return "?";
}

void Thresholds::validate() const {
    if (!std::isfinite(negative) || !std::isfinite(positive) || !(negative < positive)) {
        throw ConfigurationError("thresholds must satisfy neg < pos (got neg=" +
                                 std::to_string(negative) + ", pos=" + std::to_string(positive) + ")");
    }
}

double price_movement(double sp_m2, double sp_p2) {
    if (!(sp_m2 > 0.0)) throw ConfigurationError("price two days before must be positive");
    return (sp_p2 - sp_m2) / sp_m2 * 100.0;
}

double price_movement(const PriceWindow& window) {
    return price_movement(window.sp_m2(), window.sp_p2());
}

Label assign_label(double movement, const Thresholds& thresholds) {
    if (movement < thresholds.negative) return Label::negative;
    if (movement > thresholds.positive) return Label::positive;
    return Label::neutral;
}

LabeledExample label_window(const PriceWindow& window, const Thresholds& thresholds) {
    thresholds.validate();
    const double movement = price_movement(window);
    return {window.transcript_id, movement, assign_label(movement, thresholds), thresholds};
}

ClassBalance class_balance(std::span<const Label> labels) {
    ClassBalance b;
    for (Label l : labels) ++b.counts[index_of(l)];
    b.total = labels.size();
    if (b.total > 0) {
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            b.proportions[c] = static_cast<double>(b.counts[c]) / static_cast<double>(b.total);
        }
    }
    return b;
}

ClassBalance class_balance(std::span<const LabeledExample> examples) {
    std::vector<Label> labels;
    labels.reserve(examples.size());
    for (const auto& e : examples) labels.push_back(e.label);
    return class_balance(labels);
}

}  // namespace calltide
