#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "calltide/chunking.hpp"
#include "calltide/ingest.hpp"
#include "calltide/labeling.hpp"
#include "calltide/market_data.hpp"
#include "calltide/split.hpp"

struct sqlite3;

namespace calltide {

struct RunRecord {
    std::string run_id;
    std::string classifier_name;
    std::string classifier_version;
    std::string config_json;  // thresholds, split, chunking, text mode, ...
    std::string created_at;   // ISO-8601 UTC
    std::string finished_at;  // empty while running

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct TranscriptPrediction {
    std::string transcript_id;
    Label label = Label::neutral;
    Scores scores{};  // mean of the chunk scores
    std::size_t chunk_count = 0;

    friend bool operator==(const TranscriptPrediction&, const TranscriptPrediction&) = default;
};

/// Single-file SQLite store for every pipeline stage. One instance owns one
/// connection; writes from several threads must be funneled through a
/// single owner.
class Store {
public:
    static constexpr int kSchemaVersion = 1;

    /// Opens or creates the database at `path`. A file that is not a
    /// database, or carries another schema version, raises StoreCorrupt.
    static Store open(const std::filesystem::path& path);

    Store(Store&&) noexcept;
    Store& operator=(Store&&) noexcept;
    ~Store();

    int schema_version() const;

    /// Rolls back on destruction unless commit() was called.
    class Transaction {
    public:
        explicit Transaction(Store& store);
        Transaction(const Transaction&) = delete;
        Transaction& operator=(const Transaction&) = delete;
        ~Transaction();
        void commit();

    private:
        Store* store_;
        bool done_ = false;
    };

    void upsert_transcript(const Transcript& t);
    std::optional<Transcript> transcript(std::string_view id) const;
    std::vector<Transcript> transcripts() const;

    void upsert_window(const PriceWindow& w);
    std::optional<PriceWindow> window(std::string_view transcript_id) const;
    std::vector<PriceWindow> windows() const;

    void upsert_example(const LabeledExample& e);
    std::vector<LabeledExample> examples() const;
    /// Removes examples (and their splits) whose transcript is not in `keep`.
    void retain_examples(std::span<const std::string> keep);

    /// Replaces the whole split table.
    void replace_splits(std::span<const SplitAssignment> assignments);
    std::vector<SplitAssignment> splits() const;
    std::vector<std::string> load_split(Split split) const;

    /// Inserts the run if new; an existing run keeps its created_at.
    void upsert_run(const RunRecord& run);
    void finish_run(std::string_view run_id, std::string_view finished_at);
    std::optional<RunRecord> run(std::string_view run_id) const;
    std::optional<RunRecord> latest_run() const;
    std::vector<RunRecord> runs() const;

    void record_predictions(std::string_view run_id, std::span<const ChunkPrediction> chunks,
                            std::span<const TranscriptPrediction> transcripts);
    std::vector<ChunkPrediction> chunk_predictions(std::string_view run_id) const;
    std::vector<TranscriptPrediction> transcript_predictions(std::string_view run_id) const;

    void put_model(std::string_view name, std::string_view kind, std::string_view payload);
    std::optional<std::string> model(std::string_view name) const;

    void set_meta(std::string_view key, std::string_view value);
    std::optional<std::string> meta(std::string_view key) const;

    std::size_t row_count(std::string_view table) const;

private:
    explicit Store(sqlite3* db);
    void exec(const char* sql);

    struct Connection;
    std::unique_ptr<Connection> conn_;
};

}  // namespace calltide
