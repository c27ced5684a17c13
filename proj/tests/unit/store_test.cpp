#include <gtest/gtest.h>

#include <sqlite3.h>

#include "calltide/errors.hpp"
#include "calltide/store.hpp"
#include "test_support.hpp"

using namespace calltide;
using calltide::testing::spit;
using calltide::testing::TempDir;

namespace {

Transcript transcript(std::string ticker, std::string date, std::string qa = "Q&A: fine") {
    Transcript t;
    t.ticker = std::move(ticker);
    t.report_date = *Date::parse_iso(date);
    t.id = transcript_id(t.ticker, t.report_date);
    t.source_path = t.id + ".txt";
    t.format = DocumentFormat::plain;
    t.full_text = "Prepared remarks. " + qa;
    t.qa_text = qa;
    return t;
}

PriceWindow window_for(const Transcript& t, double m2, double p2) {
    PriceWindow w;
    w.transcript_id = t.id;
    for (WindowOffset o : kWindowOffsets) {
        w.at(o) = {t.report_date.plus_days(offset_days(o)), 10.0, 400.0};
    }
    w.at(WindowOffset::m2).share = m2;
    w.at(WindowOffset::p2).share = p2;
    return w;
}

void seed_example(Store& s, const Transcript& t, double m2, double p2, Label l) {
    s.upsert_transcript(t);
    s.upsert_window(window_for(t, m2, p2));
    s.upsert_example({t.id, 100.0 * (p2 - m2) / m2, l, {}});
}

void raw_exec(const std::filesystem::path& db, const char* sql) {
    sqlite3* h = nullptr;
    ASSERT_EQ(sqlite3_open(db.c_str(), &h), SQLITE_OK);
    ASSERT_EQ(sqlite3_exec(h, sql, nullptr, nullptr, nullptr), SQLITE_OK) << sqlite3_errmsg(h);
    sqlite3_close(h);
}

}  // namespace

TEST(Store, CreatesSchemaAndReopens) {
    TempDir dir;
    {
        auto s = Store::open(dir / "a.db");
        EXPECT_EQ(s.schema_version(), Store::kSchemaVersion);
        s.upsert_transcript(transcript("ACME", "2024-02-06"));
    }
    auto s = Store::open(dir / "a.db");
    EXPECT_EQ(s.transcripts().size(), 1u);
}

TEST(Store, TranscriptRoundTripAndUpsert) {
    TempDir dir;
    auto s = Store::open(dir / "a.db");
    auto t = transcript("ACME", "2024-02-06");
    t.format = DocumentFormat::html;
    s.upsert_transcript(t);
    EXPECT_EQ(s.transcript(t.id), t);
    t.full_text = "Revised. " + t.qa_text;
    s.upsert_transcript(t);
    EXPECT_EQ(s.row_count("transcripts"), 1u);
    EXPECT_EQ(s.transcript(t.id)->full_text, t.full_text);
    EXPECT_FALSE(s.transcript("NOPE_2024-01-01"));
}

TEST(Store, QaMustBeSuffix) {
    TempDir dir;
    auto s = Store::open(dir / "a.db");
    auto t = transcript("ACME", "2024-02-06");
    t.qa_text = "not in the text";
    EXPECT_THROW(s.upsert_transcript(t), ConstraintViolation);
}

TEST(Store, WindowAndExampleRoundTrip) {
    TempDir dir;
    auto s = Store::open(dir / "a.db");
    const auto t = transcript("ACME", "2024-02-06");
    seed_example(s, t, 50.0, 53.1, Label::positive);
    EXPECT_EQ(s.window(t.id), window_for(t, 50.0, 53.1));
    ASSERT_EQ(s.examples().size(), 1u);
    EXPECT_EQ(s.examples()[0].label, Label::positive);
    EXPECT_NEAR(s.examples()[0].price_movement, 6.2, 1e-12);
}

TEST(Store, ForeignKeysEnforced) {
    TempDir dir;
    auto s = Store::open(dir / "a.db");
    const auto t = transcript("ACME", "2024-02-06");
    EXPECT_THROW(s.upsert_window(window_for(t, 1, 2)), ConstraintViolation);
    s.upsert_transcript(t);
    EXPECT_THROW(s.upsert_example({t.id, 1.0, Label::neutral, {}}), ConstraintViolation);
    EXPECT_THROW(s.replace_splits(std::vector<SplitAssignment>{{t.id, Split::test, 1, {}}}),
                 ConstraintViolation);
}

TEST(Store, NonPositivePriceRejected) {
    TempDir dir;
    auto s = Store::open(dir / "a.db");
    const auto t = transcript("ACME", "2024-02-06");
    s.upsert_transcript(t);
    EXPECT_THROW(s.upsert_window(window_for(t, 0.0, 2.0)), ConstraintViolation);
}

TEST(Store, SplitsReplaceAndLoad) {
    TempDir dir;
    auto s = Store::open(dir / "a.db");
    const auto a = transcript("AAA", "2024-01-02"), b = transcript("BBB", "2024-01-02");
    seed_example(s, a, 10, 11, Label::positive);
    seed_example(s, b, 10, 9, Label::negative);
    const std::vector<SplitAssignment> first{{a.id, Split::train, 7, {}}, {b.id, Split::test, 7, {}}};
    s.replace_splits(first);
    EXPECT_EQ(s.splits(), first);
    EXPECT_EQ(s.load_split(Split::test), std::vector<std::string>{b.id});
    const std::vector<SplitAssignment> second{{a.id, Split::test, 8, {0.5, 0.25, 0.25}}};
    s.replace_splits(second);
    EXPECT_EQ(s.splits(), second);
    EXPECT_TRUE(s.load_split(Split::train).empty());
}

TEST(Store, RetainExamplesCascadesToSplits) {
    TempDir dir;
    auto s = Store::open(dir / "a.db");
    const auto a = transcript("AAA", "2024-01-02"), b = transcript("BBB", "2024-01-02");
    seed_example(s, a, 10, 11, Label::positive);
    seed_example(s, b, 10, 9, Label::negative);
    s.replace_splits(std::vector<SplitAssignment>{{a.id, Split::train, 1, {}}, {b.id, Split::test, 1, {}}});
    const std::vector<std::string> keep{a.id};
    s.retain_examples(keep);
    EXPECT_EQ(s.examples().size(), 1u);
    EXPECT_EQ(s.splits().size(), 1u);
    EXPECT_EQ(s.row_count("price_windows"), 2u);
}

TEST(Store, RunsAndPredictions) {
    TempDir dir;
    auto s = Store::open(dir / "a.db");
    RunRecord r{"nb-1", "builtin-nb", "1", "{}", "2024-01-01T00:00:00Z", ""};
    s.upsert_run(r);
    RunRecord again = r;
    again.created_at = "2030-01-01T00:00:00Z";
    s.upsert_run(again);
    EXPECT_EQ(s.run("nb-1")->created_at, r.created_at);
    s.finish_run("nb-1", "2024-01-01T00:01:00Z");
    EXPECT_EQ(s.run("nb-1")->finished_at, "2024-01-01T00:01:00Z");

    const std::vector<ChunkPrediction> chunks{{"T_2024-01-02", 1, Label::negative, {0.7, 0.2, 0.1}},
                                              {"T_2024-01-02", 0, Label::positive, {0.1, 0.2, 0.7}}};
    const std::vector<TranscriptPrediction> whole{{"T_2024-01-02", Label::neutral, {0.4, 0.2, 0.4}, 2}};
    s.record_predictions("nb-1", chunks, whole);
    s.record_predictions("nb-1", chunks, whole);
    const auto back = s.chunk_predictions("nb-1");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].chunk_index, 0u);
    EXPECT_EQ(back[0].label, Label::positive);
    EXPECT_EQ(back[1].scores, (Scores{0.7, 0.2, 0.1}));
    EXPECT_EQ(s.transcript_predictions("nb-1"), whole);
    EXPECT_THROW(s.record_predictions("missing", chunks, whole), ConstraintViolation);
}

TEST(Store, LatestRunIsNewest) {
    TempDir dir;
    auto s = Store::open(dir / "a.db");
    EXPECT_FALSE(s.latest_run());
    s.upsert_run({"a", "x", "1", "{}", "2024-01-01T00:00:00Z", ""});
    s.upsert_run({"b", "x", "1", "{}", "2024-03-01T00:00:00Z", ""});
    s.upsert_run({"c", "x", "1", "{}", "2024-02-01T00:00:00Z", ""});
    EXPECT_EQ(s.latest_run()->run_id, "b");
    EXPECT_EQ(s.runs().size(), 3u);
}

TEST(Store, TransactionRollsBackUnlessCommitted) {
    TempDir dir;
    auto s = Store::open(dir / "a.db");
    {
        Store::Transaction tx(s);
        s.set_meta("k", "v");
    }
    EXPECT_FALSE(s.meta("k"));
    {
        Store::Transaction tx(s);
        s.set_meta("k", "v");
        tx.commit();
    }
    EXPECT_EQ(s.meta("k"), "v");
}

TEST(Store, ModelsAndMeta) {
    TempDir dir;
    auto s = Store::open(dir / "a.db");
    EXPECT_FALSE(s.model("baseline"));
    s.put_model("baseline", "multinomial-nb", "{\"a\":1}");
    s.put_model("baseline", "multinomial-nb", "{\"a\":2}");
    EXPECT_EQ(s.model("baseline"), "{\"a\":2}");
    s.set_meta("x", "1");
    s.set_meta("x", "2");
    EXPECT_EQ(s.meta("x"), "2");
}

TEST(Store, NotADatabase) {
    TempDir dir;
    spit(dir / "junk.db", std::string(4096, 'x'));
    EXPECT_THROW(Store::open(dir / "junk.db"), StoreCorrupt);
}

TEST(Store, ForeignDatabase) {
    TempDir dir;
    raw_exec(dir / "other.db", "CREATE TABLE t(x)");
    EXPECT_THROW(Store::open(dir / "other.db"), StoreCorrupt);
}

TEST(Store, VersionMismatchIsNotMigrated) {
    TempDir dir;
    { Store::open(dir / "a.db"); }
    raw_exec(dir / "a.db", "UPDATE meta SET value = '99' WHERE key = 'schema_version'");
    try {
        Store::open(dir / "a.db");
        FAIL() << "expected StoreCorrupt";
    } catch (const StoreCorrupt& e) {
        EXPECT_NE(std::string(e.what()).find("99"), std::string::npos);
    }
}

TEST(Store, MissingTable) {
    TempDir dir;
    { Store::open(dir / "a.db"); }
    raw_exec(dir / "a.db", "DROP TABLE transcript_predictions");
    EXPECT_THROW(Store::open(dir / "a.db"), StoreCorrupt);
}
