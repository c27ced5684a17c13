#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "calltide/classify.hpp"
#include "calltide/eval.hpp"
#include "calltide/ingest.hpp"
#include "calltide/labeling.hpp"
#include "calltide/market_data.hpp"
#include "calltide/split.hpp"
#include "calltide/store.hpp"
#include "calltide/text_prep.hpp"

namespace calltide {

// Every stage runs inside one store transaction: it either commits whole
// or leaves the store untouched. A stage whose inputs are missing throws
// OrderingError naming the stage to run first.

struct IngestSummary {
    std::size_t files_ok = 0;
    std::size_t inserted = 0;
    std::size_t updated = 0;
    std::size_t unchanged = 0;
    std::vector<IngestFailure> failures;
};

IngestSummary run_ingest(Store& store, const std::filesystem::path& dir, unsigned threads = 0);

struct DroppedTranscript {
    std::string transcript_id;
    ErrorKind kind;
    std::string message;
};

struct PricesSummary {
    std::size_t built = 0;
    std::size_t existing = 0;
    std::vector<DroppedTranscript> dropped;
};

inline constexpr std::string_view kDefaultBenchmark = "SPY";

/// Builds windows for every transcript that lacks one. Missing quotes and
/// unknown tickers drop the transcript; any other upstream failure aborts.
PricesSummary run_prices(Store& store, MarketDataClient& client,
                         std::string_view benchmark = kDefaultBenchmark);

struct LabelSummary {
    std::size_t labeled = 0;
    std::size_t changed = 0;
    bool splits_cleared = false;  // labels moved, so the old split is stale
    ClassBalance balance;
};

LabelSummary run_label(Store& store, const Thresholds& thresholds = {});

struct SplitSummary {
    std::array<std::size_t, 3> sizes{};
    bool changed = false;
};

SplitSummary run_split(Store& store, const SplitProportions& proportions = {},
                       std::uint64_t seed = kDefaultSplitSeed, bool stratify = true);

struct TrainOptions {
    double alpha = 1.0;
    TextMode text = TextMode::qa;
};

struct TrainSummary {
    std::size_t documents = 0;
    std::size_t vocabulary = 0;
    bool changed = false;
};

inline constexpr std::string_view kBaselineModelName = "baseline";

TrainSummary run_train_baseline(Store& store, const TrainOptions& options = {},
                                const StopwordList& stopwords = StopwordList::english());

enum class ChunkStrategy { chunk, truncate };

std::string_view to_string(ChunkStrategy s) noexcept;
ChunkStrategy parse_chunk_strategy(std::string_view name);

struct PredictOptions {
    std::string classifier = "builtin";  // or a plugin executable path
    PluginOptions plugin;
    ChunkStrategy strategy = ChunkStrategy::chunk;
    TextMode text = TextMode::qa;
    std::optional<std::size_t> budget;  // words; default from max_tokens
    unsigned threads = 0;               // builtin only
};

struct PredictSummary {
    std::string run_id;
    std::size_t transcripts = 0;
    std::size_t chunks = 0;
    std::size_t budget = 0;
    bool reused = false;  // identical run already recorded
};

/// Scores the test split and records a run. The run id is a digest of the
/// full configuration, so a repeated invocation reuses the stored run.
PredictSummary run_predict(Store& store, const PredictOptions& options,
                           const StopwordList& stopwords = StopwordList::english());

struct EvaluateOptions {
    std::optional<std::string> run_id;  // default: latest run
    std::filesystem::path reports_dir = "reports";
    std::size_t density_bucket = 500;
};

struct EvaluateSummary {
    std::string run_id;
    EvalReport transcript_report;
    std::optional<EvalReport> chunk_report;
    std::filesystem::path directory;
    std::vector<std::filesystem::path> files;
};

EvaluateSummary run_evaluate(Store& store, const EvaluateOptions& options = {});

struct ExportOptions {
    TextMode text = TextMode::qa;
    InputKind form = InputKind::raw;
};

/// One `{"id","text","label","split"}` object per line, ordered by id;
/// split is null for examples not yet split. Returns the line count.
std::size_t export_jsonl(const Store& store, std::ostream& out, const ExportOptions& options = {},
                         const StopwordList& stopwords = StopwordList::english());

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now());

}  // namespace calltide
