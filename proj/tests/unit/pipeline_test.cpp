#include <gtest/gtest.h>

#include <json.hpp>

#include <map>
#include <sstream>

#include "calltide/errors.hpp"
#include "calltide/pipeline.hpp"
#include "test_support.hpp"

using namespace calltide;
using calltide::testing::fixture;
using calltide::testing::kFakePlugin;
using calltide::testing::slurp;
using calltide::testing::TempDir;
using nlohmann::json;

namespace {

// Quotes come only from the fixture cache; no endpoint is configured.
MarketDataClient offline_client(const TempDir& dir) {
    std::filesystem::copy(fixture("quotes"), dir / "quotes");
    MarketDataConfig c;
    c.cache_dir = dir / "quotes";
    return MarketDataClient(c);
}

const std::map<std::string, Label> kExpected{
    {"ACME_2024-02-06", Label::positive}, {"BOLT_2023-10-26", Label::negative},
    {"CRUX_2023-08-03", Label::neutral},  {"DYNA_2024-04-25", Label::positive},
    {"EMBR_2023-11-09", Label::negative}, {"FLUX_2024-05-02", Label::neutral},
    {"GRID_2024-01-30", Label::positive}, {"HALO_2023-07-27", Label::negative},
    {"IONX_2024-03-14", Label::neutral},  {"JOLT_2024-07-31", Label::positive},
    {"KITE_2023-09-21", Label::negative}};

const std::map<std::string, double> kMovements{
    {"ACME_2024-02-06", 6.2}, {"BOLT_2023-10-26", -5.1}, {"CRUX_2023-08-03", 0.8},
    {"DYNA_2024-04-25", 4.4}, {"EMBR_2023-11-09", -7.0}, {"FLUX_2024-05-02", -1.2},
    {"GRID_2024-01-30", 3.9}, {"HALO_2023-07-27", -3.6}, {"IONX_2024-03-14", 2.1},
    {"JOLT_2024-07-31", 8.0}, {"KITE_2023-09-21", -4.0}};

const SplitProportions kSmall{0.5, 0.25, 0.25};

PluginOptions plugin_args(const std::string& script) {
    PluginOptions o;
    o.args = {fixture("plugin/" + script + ".script").string()};
    return o;
}

class PipelineTest : public ::testing::Test {
protected:
    void SetUp() override { store_ = std::make_unique<Store>(Store::open(dir_ / "calltide.db")); }

    Store& store() { return *store_; }

    void through_split() {
        run_ingest(store(), fixture("corpus"), 2);
        auto client = offline_client(dir_);
        run_prices(store(), client);
        run_label(store());
        run_split(store(), kSmall);
    }

    TempDir dir_;
    std::unique_ptr<Store> store_;
};

}  // namespace

TEST_F(PipelineTest, StagesRefuseToRunOutOfOrder) {
    auto client = offline_client(dir_);
    EXPECT_THROW(run_prices(store(), client), OrderingError);
    EXPECT_THROW(run_label(store()), OrderingError);
    EXPECT_THROW(run_split(store()), OrderingError);
    EXPECT_THROW(run_train_baseline(store()), OrderingError);
    EXPECT_THROW(run_predict(store(), {}), OrderingError);
    EXPECT_THROW(run_evaluate(store(), {std::nullopt, dir_ / "reports"}), OrderingError);
    run_ingest(store(), fixture("corpus"));
    try {
        run_label(store());
        FAIL();
    } catch (const OrderingError& e) {
        EXPECT_NE(std::string(e.what()).find("calltide prices"), std::string::npos) << e.what();
    }
}

TEST_F(PipelineTest, IngestIsIdempotent) {
    const auto first = run_ingest(store(), fixture("corpus"), 2);
    EXPECT_EQ(first.files_ok, 12u);
    EXPECT_EQ(first.inserted, 12u);
    const auto again = run_ingest(store(), fixture("corpus"), 1);
    EXPECT_EQ(again.inserted, 0u);
    EXPECT_EQ(again.unchanged, 12u);
    EXPECT_EQ(store().row_count("transcripts"), 12u);
}

TEST_F(PipelineTest, PricesAndLabels) {
    run_ingest(store(), fixture("corpus"));
    auto client = offline_client(dir_);
    const auto p = run_prices(store(), client);
    EXPECT_EQ(p.built, 11u);
    ASSERT_EQ(p.dropped.size(), 1u);
    EXPECT_EQ(p.dropped[0].transcript_id, "LUMA_2024-11-20");
    EXPECT_EQ(p.dropped[0].kind, ErrorKind::NoQuoteNearby);
    EXPECT_EQ(run_prices(store(), client).existing, 11u);

    const auto l = run_label(store());
    EXPECT_EQ(l.labeled, 11u);
    EXPECT_EQ(l.balance.counts, (std::array<std::size_t, 3>{4, 3, 4}));
    for (const auto& e : store().examples()) {
        EXPECT_EQ(e.label, kExpected.at(e.transcript_id)) << e.transcript_id;
        EXPECT_NEAR(e.price_movement, kMovements.at(e.transcript_id), 1e-3) << e.transcript_id;
    }
    EXPECT_EQ(run_label(store()).changed, 0u);
}

TEST_F(PipelineTest, StoredLabelsReDerive) {
    through_split();
    run_label(store(), {-2.0, 5.0});
    for (const auto& e : store().examples()) {
        EXPECT_EQ(e.label, assign_label(e.price_movement, e.thresholds)) << e.transcript_id;
        EXPECT_EQ(e.price_movement, price_movement(*store().window(e.transcript_id)));
    }
}

TEST_F(PipelineTest, RelabelingClearsSplits) {
    through_split();
    EXPECT_EQ(store().splits().size(), 11u);
    // Every row records its thresholds, so all are rewritten, but no label
    // moves at +/-3.5 and the split survives.
    const auto same = run_label(store(), {-3.5, 3.5});
    EXPECT_EQ(same.changed, 11u);
    EXPECT_FALSE(same.splits_cleared);
    EXPECT_EQ(store().splits().size(), 11u);
    // +/-4.5 turns HALO, KITE, GRID and DYNA neutral.
    const auto l = run_label(store(), {-4.5, 4.5});
    EXPECT_EQ(l.balance.counts, (std::array<std::size_t, 3>{2, 7, 2}));
    EXPECT_TRUE(l.splits_cleared);
    EXPECT_TRUE(store().splits().empty());
    EXPECT_THROW(run_train_baseline(store()), OrderingError);
}

TEST_F(PipelineTest, SplitIsStratifiedAndStable) {
    through_split();
    const auto again = run_split(store(), kSmall);
    EXPECT_FALSE(again.changed);
    EXPECT_EQ(again.sizes, (std::array<std::size_t, 3>{5, 3, 3}));
    EXPECT_TRUE(run_split(store(), kSmall, 7).changed);
}

TEST_F(PipelineTest, BaselineEndToEnd) {
    through_split();
    const auto t = run_train_baseline(store());
    EXPECT_EQ(t.documents, 5u);
    EXPECT_TRUE(t.changed);
    EXPECT_FALSE(run_train_baseline(store()).changed);

    const auto p = run_predict(store(), {});
    EXPECT_EQ(p.transcripts, 3u);
    EXPECT_EQ(p.budget, 384u);
    EXPECT_FALSE(p.reused);
    EXPECT_TRUE(p.run_id.starts_with("builtin-nb-"));
    EXPECT_TRUE(run_predict(store(), {}).reused);
    EXPECT_EQ(store().runs().size(), 1u);

    const auto e = run_evaluate(store(), {std::nullopt, dir_ / "reports"});
    EXPECT_EQ(e.run_id, p.run_id);
    EXPECT_EQ(e.transcript_report.total(), 3u);
    ASSERT_TRUE(e.chunk_report);
    EXPECT_EQ(e.chunk_report->total(), p.chunks);
    EXPECT_EQ(e.directory, dir_ / "reports" / p.run_id);
    for (const char* f : {"report.txt", "report.json", "report.csv", "confusion.csv", "class_balance.json",
                          "token_density.csv", "chunk_report.json", "chunk_confusion.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(e.directory / f)) << f;
    }
    EXPECT_EQ(parse_report_json(slurp(e.directory / "report.json")), e.transcript_report);
    EXPECT_EQ(e.transcript_report.run_id, p.run_id);
    EXPECT_NE(slurp(e.directory / "report.txt").find(p.run_id), std::string::npos);
    // The run's full configuration is recoverable from the store.
    const auto cfg = json::parse(store().run(p.run_id)->config_json);
    EXPECT_EQ(cfg.at("classifier").at("name"), "builtin-nb");
    EXPECT_TRUE(cfg.contains("split"));
    const auto balance = json::parse(slurp(e.directory / "class_balance.json"));
    EXPECT_EQ(balance.dump().find("null"), std::string::npos);
}

TEST_F(PipelineTest, ChangedConfigIsANewRun) {
    through_split();
    run_train_baseline(store());
    const auto a = run_predict(store(), {});
    PredictOptions o;
    o.strategy = ChunkStrategy::truncate;
    const auto b = run_predict(store(), o);
    EXPECT_NE(a.run_id, b.run_id);
    EXPECT_EQ(b.chunks, 3u);
    o.budget = 50;
    EXPECT_NE(run_predict(store(), o).run_id, b.run_id);
    EXPECT_EQ(store().runs().size(), 3u);
    const auto e = run_evaluate(store(), {b.run_id, dir_ / "reports"});
    EXPECT_FALSE(e.chunk_report);
}

TEST_F(PipelineTest, PluginRawInput) {
    through_split();
    PredictOptions o;
    o.classifier = kFakePlugin.string();
    o.plugin = plugin_args("echo_raw");
    const auto p = run_predict(store(), o);
    EXPECT_EQ(p.budget, 3072u);
    EXPECT_TRUE(p.run_id.starts_with("echo-"));
    // The echo plugin keys its answer on the request text length.
    for (const auto& c : store().chunk_predictions(p.run_id)) {
        EXPECT_EQ(c.scores[index_of(c.label)], 0.5);
    }
    EXPECT_TRUE(run_predict(store(), o).reused);
}

TEST_F(PipelineTest, PluginPreprocessedInputUsesSmallerBudget) {
    through_split();
    PredictOptions o;
    o.classifier = kFakePlugin.string();
    o.plugin = plugin_args("echo_preprocessed");
    const auto p = run_predict(store(), o);
    EXPECT_EQ(p.budget, 96u);
    EXPECT_GT(p.chunks, p.transcripts);
}

TEST_F(PipelineTest, FailedPredictLeavesNoRun) {
    through_split();
    PredictOptions o;
    o.classifier = kFakePlugin.string();
    o.plugin = plugin_args("crash");
    EXPECT_THROW(run_predict(store(), o), PluginCrashed);
    EXPECT_TRUE(store().runs().empty());
    EXPECT_EQ(store().row_count("chunk_predictions"), 0u);
}

TEST_F(PipelineTest, PredictNeedsTrainedBaseline) {
    through_split();
    EXPECT_THROW(run_predict(store(), {}), OrderingError);
}

TEST_F(PipelineTest, ExportJsonl) {
    run_ingest(store(), fixture("corpus"));
    auto client = offline_client(dir_);
    run_prices(store(), client);
    run_label(store());
    std::ostringstream unsplit;
    EXPECT_EQ(export_jsonl(store(), unsplit), 11u);
    EXPECT_NE(unsplit.str().find("\"split\":null"), std::string::npos);
    run_split(store(), kSmall);
    std::ostringstream out;
    EXPECT_EQ(export_jsonl(store(), out, {TextMode::full, InputKind::preprocessed}), 11u);
    std::istringstream lines(out.str());
    std::string line, prev;
    std::map<std::string, int> splits;
    while (std::getline(lines, line)) {
        const auto j = json::parse(line);
        EXPECT_GT(j.at("id").get<std::string>(), prev);
        prev = j.at("id").get<std::string>();
        EXPECT_EQ(j.at("label").get<int>(), to_int(kExpected.at(prev)));
        EXPECT_EQ(j.at("text").get<std::string>().find_first_of("ABCDEFGHIJKLMNOPQRSTUVWXYZ.,"),
                  std::string::npos);
        ++splits[j.at("split").get<std::string>()];
    }
    EXPECT_EQ(splits, (std::map<std::string, int>{{"test", 3}, {"train", 5}, {"validation", 3}}));
}

TEST(Digest, Fnv1a) {
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
    EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(Timestamp, Iso8601Utc) {
    EXPECT_EQ(utc_timestamp(std::chrono::system_clock::time_point{std::chrono::seconds{1707177600}}),
              "2024-02-06T00:00:00Z");
}
