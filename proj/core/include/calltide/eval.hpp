#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "calltide/labeling.hpp"

namespace calltide {

/// Rows are true labels, columns predicted labels.
struct ConfusionMatrix {
    std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

    std::size_t total() const;
    std::size_t at(Label truth, Label predicted) const {
        return counts[index_of(truth)][index_of(predicted)];
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct LabelPair {
    Label truth;
    Label predicted;
};

ConfusionMatrix confusion(std::span<const LabelPair> pairs);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;

    friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct EvalReport {
    std::string run_id;
    std::string level = "transcript";  // or "chunk"
    ConfusionMatrix matrix;
    std::array<ClassMetrics, kNumClasses> per_class{};
    double accuracy = 0.0;
    ClassMetrics macro;
    ClassMetrics weighted;
    /// Metrics that hit a zero denominator and were reported as 0.
    std::size_t zero_division_warnings = 0;

    std::size_t total() const { return matrix.total(); }

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Per-class precision/recall/F1, accuracy, macro and support-weighted
/// averages. Zero denominators yield 0 and bump zero_division_warnings.
/// Throws EmptyEvaluation on an empty matrix.
EvalReport metrics(const ConfusionMatrix& matrix, std::string run_id = {});

/// Micro-averaged F1 (pooled TP/FP/FN over classes).
double micro_f1(const ConfusionMatrix& matrix);

enum class ReportFormat { text, json, csv };

ReportFormat parse_report_format(std::string_view name);

/// Text mirrors the familiar classification-report layout at 4 decimals;
/// json and csv carry full precision.
std::string render_report(const EvalReport& report, ReportFormat format);

EvalReport parse_report_json(std::string_view json_text);

/// Header row of predicted labels, one row per true label.
std::string render_confusion_csv(const ConfusionMatrix& matrix);

/// Right-aligned grid for terminal output.
std::string render_confusion_text(const ConfusionMatrix& matrix);

struct DensityBucket {
    std::size_t lower = 0;
    std::size_t count = 0;

    friend bool operator==(const DensityBucket&, const DensityBucket&) = default;
};

/// Histogram of token counts with buckets [k*width, (k+1)*width), from 0
/// through the bucket holding the largest count. Empty input gives none.
std::vector<DensityBucket> token_density(std::span<const std::size_t> token_counts,
                                         std::size_t bucket_width);

std::string render_token_density_csv(std::span<const DensityBucket> buckets);

}  // namespace calltide
