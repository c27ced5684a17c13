#include "calltide/store.hpp"

#include <algorithm>
#include <array>
#include <set>

#include <sqlite3.h>

#include "calltide/errors.hpp"

namespace calltide {

namespace {

[[noreturn]] void raise(sqlite3* db, int rc, std::string_view what) {
    const std::string msg = std::string(what) + ": " + (db ? sqlite3_errmsg(db) : sqlite3_errstr(rc));
    const int primary = rc & 0xFF;
    if (primary == SQLITE_CONSTRAINT) throw ConstraintViolation(msg);
    if (primary == SQLITE_NOTADB || primary == SQLITE_CORRUPT) throw StoreCorrupt(msg);
    throw IoError(msg);
}

class Statement {
public:
    Statement(sqlite3* db, std::string_view sql) : db_(db) {
        const int rc = sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &stmt_, nullptr);
        if (rc != SQLITE_OK) raise(db, rc, "prepare");
    }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;
    ~Statement() { sqlite3_finalize(stmt_); }

    Statement& bind(int idx, std::string_view text) {
        check(sqlite3_bind_text(stmt_, idx, text.data(), static_cast<int>(text.size()), SQLITE_TRANSIENT));
        return *this;
    }
    Statement& bind(int idx, double v) {
        check(sqlite3_bind_double(stmt_, idx, v));
        return *this;
    }
    Statement& bind(int idx, long long v) {
        check(sqlite3_bind_int64(stmt_, idx, v));
        return *this;
    }
    Statement& bind(int idx, int v) { return bind(idx, static_cast<long long>(v)); }
    Statement& bind(int idx, std::size_t v) { return bind(idx, static_cast<long long>(v)); }

    /// True while rows remain.
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        raise(db_, rc, "step");
    }

    void run() {
        while (step()) {
        }
    }

    std::string text(int col) const {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
        const int n = sqlite3_column_bytes(stmt_, col);
        return p ? std::string(p, static_cast<std::size_t>(n)) : std::string();
    }
    double real(int col) const { return sqlite3_column_double(stmt_, col); }
    long long integer(int col) const { return sqlite3_column_int64(stmt_, col); }

private:
    void check(int rc) {
        if (rc != SQLITE_OK) raise(db_, rc, "bind");
    }

    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS transcripts (
    id          TEXT PRIMARY KEY,
    ticker      TEXT NOT NULL,
    report_date TEXT NOT NULL,
    source_path TEXT NOT NULL,
    format      TEXT NOT NULL CHECK (format IN ('html', 'plain')),
    full_text   TEXT NOT NULL,
    qa_text     TEXT NOT NULL,
    UNIQUE (ticker, report_date)
);
CREATE TABLE IF NOT EXISTS price_windows (
    transcript_id TEXT PRIMARY KEY REFERENCES transcripts(id) ON DELETE CASCADE,
    date_m90 TEXT NOT NULL, date_m2 TEXT NOT NULL, date_p2 TEXT NOT NULL, date_p90 TEXT NOT NULL,
    sp_m90 REAL NOT NULL CHECK (sp_m90 > 0), sp_m2 REAL NOT NULL CHECK (sp_m2 > 0),
    sp_p2 REAL NOT NULL CHECK (sp_p2 > 0), sp_p90 REAL NOT NULL CHECK (sp_p90 > 0),
    bench_m90 REAL NOT NULL CHECK (bench_m90 > 0), bench_m2 REAL NOT NULL CHECK (bench_m2 > 0),
    bench_p2 REAL NOT NULL CHECK (bench_p2 > 0), bench_p90 REAL NOT NULL CHECK (bench_p90 > 0)
);
CREATE TABLE IF NOT EXISTS examples (
    transcript_id  TEXT PRIMARY KEY REFERENCES price_windows(transcript_id) ON DELETE CASCADE,
    price_movement REAL NOT NULL,
    label          INTEGER NOT NULL CHECK (label IN (0, 1, 2)),
    neg_threshold  REAL NOT NULL,
    pos_threshold  REAL NOT NULL,
    CHECK (neg_threshold < pos_threshold)
);
CREATE TABLE IF NOT EXISTS splits (
    transcript_id TEXT PRIMARY KEY REFERENCES examples(transcript_id) ON DELETE CASCADE,
    split      TEXT NOT NULL CHECK (split IN ('train', 'validation', 'test')),
    seed       INTEGER NOT NULL,
    train_frac REAL NOT NULL CHECK (train_frac > 0),
    val_frac   REAL NOT NULL CHECK (val_frac > 0),
    test_frac  REAL NOT NULL CHECK (test_frac > 0)
);
CREATE TABLE IF NOT EXISTS runs (
    run_id             TEXT PRIMARY KEY,
    classifier_name    TEXT NOT NULL,
    classifier_version TEXT NOT NULL,
    config_json        TEXT NOT NULL,
    created_at         TEXT NOT NULL,
    finished_at        TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS chunk_predictions (
    run_id        TEXT NOT NULL REFERENCES runs(run_id) ON DELETE CASCADE,
    transcript_id TEXT NOT NULL,
    chunk_index   INTEGER NOT NULL CHECK (chunk_index >= 0),
    label         INTEGER NOT NULL CHECK (label IN (0, 1, 2)),
    s0 REAL NOT NULL, s1 REAL NOT NULL, s2 REAL NOT NULL,
    PRIMARY KEY (run_id, transcript_id, chunk_index)
);
CREATE TABLE IF NOT EXISTS transcript_predictions (
    run_id        TEXT NOT NULL REFERENCES runs(run_id) ON DELETE CASCADE,
    transcript_id TEXT NOT NULL,
    label         INTEGER NOT NULL CHECK (label IN (0, 1, 2)),
    s0 REAL NOT NULL, s1 REAL NOT NULL, s2 REAL NOT NULL,
    chunk_count   INTEGER NOT NULL,
    PRIMARY KEY (run_id, transcript_id)
);
CREATE TABLE IF NOT EXISTS models (
    name       TEXT PRIMARY KEY,
    kind       TEXT NOT NULL,
    payload    TEXT NOT NULL
);
)sql";

constexpr std::array<std::string_view, 9> kTables{
    "meta", "transcripts", "price_windows", "examples", "splits",
    "runs", "chunk_predictions", "transcript_predictions", "models"};

Date read_date(const Statement& s, int col) {
    const auto d = Date::parse_iso(s.text(col));
    if (!d) throw StoreCorrupt("malformed date '" + s.text(col) + "' in store");
    return *d;
}

Label read_label(const Statement& s, int col) {
    const auto l = label_from_int(s.integer(col));
    if (!l) throw StoreCorrupt("label out of range in store");
    return *l;
}

constexpr const char* kTranscriptColumns =
    "id, ticker, report_date, source_path, format, full_text, qa_text";

Transcript read_transcript(const Statement& s) {
    Transcript t;
    t.id = s.text(0);
    t.ticker = s.text(1);
    t.report_date = read_date(s, 2);
    t.source_path = s.text(3);
    t.format = s.text(4) == "html" ? DocumentFormat::html : DocumentFormat::plain;
    t.full_text = s.text(5);
    t.qa_text = s.text(6);
    return t;
}

constexpr const char* kWindowColumns =
    "transcript_id, date_m90, date_m2, date_p2, date_p90, sp_m90, sp_m2, sp_p2, sp_p90, "
    "bench_m90, bench_m2, bench_p2, bench_p90";

PriceWindow read_window(const Statement& s) {
    PriceWindow w;
    w.transcript_id = s.text(0);
    for (int k = 0; k < 4; ++k) {
        auto& p = w.points[static_cast<std::size_t>(k)];
        p.date = read_date(s, 1 + k);
        p.share = s.real(5 + k);
        p.bench = s.real(9 + k);
    }
    return w;
}

constexpr const char* kRunColumns =
    "run_id, classifier_name, classifier_version, config_json, created_at, finished_at";

RunRecord read_run(const Statement& s) {
    return {s.text(0), s.text(1), s.text(2), s.text(3), s.text(4), s.text(5)};
}

}  // namespace

struct Store::Connection {
    sqlite3* db = nullptr;
    ~Connection() {
        if (db) sqlite3_close_v2(db);
    }
};

Store::Store(sqlite3* db) : conn_(std::make_unique<Connection>()) { conn_->db = db; }
Store::Store(Store&&) noexcept = default;
Store& Store::operator=(Store&&) noexcept = default;
Store::~Store() = default;

void Store::exec(const char* sql) {
    char* err = nullptr;
    const int rc = sqlite3_exec(conn_->db, sql, nullptr, nullptr, &err);
    if (rc != SQLITE_OK) {
        const std::string msg = err ? err : sqlite3_errstr(rc);
        sqlite3_free(err);
        const int primary = rc & 0xFF;
        if (primary == SQLITE_NOTADB || primary == SQLITE_CORRUPT) throw StoreCorrupt(msg);
        if (primary == SQLITE_CONSTRAINT) throw ConstraintViolation(msg);
        throw IoError(msg);
    }
}

Store Store::open(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    sqlite3* raw = nullptr;
    const int rc = sqlite3_open_v2(path.string().c_str(), &raw,
                                   SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE, nullptr);
    Store store(raw);
    if (rc != SQLITE_OK) raise(raw, rc, "open " + path.string());
    sqlite3_busy_timeout(raw, 5000);
    store.exec("PRAGMA foreign_keys = ON");

    bool has_tables = false;
    {
        Statement s(raw, "SELECT count(*) FROM sqlite_master WHERE type = 'table'");
        if (s.step()) has_tables = s.integer(0) > 0;
    }
    if (!has_tables) {
        Transaction tx(store);
        store.exec(kSchema);
        store.set_meta("schema_version", std::to_string(kSchemaVersion));
        tx.commit();
        return store;
    }
    {
        Statement s(raw, "SELECT count(*) FROM sqlite_master WHERE type = 'table' AND name = 'meta'");
        if (!s.step() || s.integer(0) == 0) {
            throw StoreCorrupt(path.string() + " is a database without a calltide schema");
        }
    }
    const auto version = store.meta("schema_version");
    if (!version || *version != std::to_string(kSchemaVersion)) {
        throw StoreCorrupt(path.string() + " has schema version " + version.value_or("<none>") +
                           ", expected " + std::to_string(kSchemaVersion) +
                           "; migrations are never applied implicitly");
    }
    for (std::string_view table : kTables) {
        Statement s(raw, "SELECT count(*) FROM sqlite_master WHERE type = 'table' AND name = ?");
        s.bind(1, table);
        if (!s.step() || s.integer(0) == 0) {
            throw StoreCorrupt(path.string() + " is missing table " + std::string(table));
        }
    }
    return store;
}

int Store::schema_version() const {
    const auto v = meta("schema_version");
    return v ? std::stoi(*v) : 0;
}

Store::Transaction::Transaction(Store& store) : store_(&store) { store_->exec("BEGIN IMMEDIATE"); }

Store::Transaction::~Transaction() {
    if (!done_) {
        sqlite3_exec(store_->conn_->db, "ROLLBACK", nullptr, nullptr, nullptr);
    }
}

void Store::Transaction::commit() {
    store_->exec("COMMIT");
    done_ = true;
}

void Store::set_meta(std::string_view key, std::string_view value) {
    Statement s(conn_->db,
                "INSERT INTO meta(key, value) VALUES(?, ?) "
                "ON CONFLICT(key) DO UPDATE SET value = excluded.value");
    s.bind(1, key).bind(2, value).run();
}

std::optional<std::string> Store::meta(std::string_view key) const {
    Statement s(conn_->db, "SELECT value FROM meta WHERE key = ?");
    s.bind(1, key);
    if (!s.step()) return std::nullopt;
    return s.text(0);
}

void Store::upsert_transcript(const Transcript& t) {
    if (t.qa_text.size() > t.full_text.size() ||
        t.full_text.compare(t.full_text.size() - t.qa_text.size(), std::string::npos, t.qa_text) != 0) {
        throw ConstraintViolation("qa_text of " + t.id + " is not a suffix of full_text");
    }
    Statement s(conn_->db,
                "INSERT INTO transcripts(id, ticker, report_date, source_path, format, full_text, qa_text) "
                "VALUES(?, ?, ?, ?, ?, ?, ?) "
                "ON CONFLICT(id) DO UPDATE SET ticker = excluded.ticker, "
                "report_date = excluded.report_date, source_path = excluded.source_path, "
                "format = excluded.format, full_text = excluded.full_text, qa_text = excluded.qa_text");
    s.bind(1, t.id).bind(2, t.ticker).bind(3, t.report_date.iso()).bind(4, t.source_path)
        .bind(5, to_string(t.format)).bind(6, t.full_text).bind(7, t.qa_text).run();
}

std::optional<Transcript> Store::transcript(std::string_view id) const {
    Statement s(conn_->db, std::string("SELECT ") + kTranscriptColumns + " FROM transcripts WHERE id = ?");
    s.bind(1, id);
    if (!s.step()) return std::nullopt;
    return read_transcript(s);
}

std::vector<Transcript> Store::transcripts() const {
    Statement s(conn_->db, std::string("SELECT ") + kTranscriptColumns + " FROM transcripts ORDER BY id");
    std::vector<Transcript> out;
    while (s.step()) out.push_back(read_transcript(s));
    return out;
}

void Store::upsert_window(const PriceWindow& w) {
    Statement s(conn_->db,
                std::string("INSERT INTO price_windows(") + kWindowColumns +
                    ") VALUES(?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?) ON CONFLICT(transcript_id) DO UPDATE SET "
                    "date_m90 = excluded.date_m90, date_m2 = excluded.date_m2, "
                    "date_p2 = excluded.date_p2, date_p90 = excluded.date_p90, "
                    "sp_m90 = excluded.sp_m90, sp_m2 = excluded.sp_m2, sp_p2 = excluded.sp_p2, "
                    "sp_p90 = excluded.sp_p90, bench_m90 = excluded.bench_m90, "
                    "bench_m2 = excluded.bench_m2, bench_p2 = excluded.bench_p2, "
                    "bench_p90 = excluded.bench_p90");
    s.bind(1, w.transcript_id);
    for (int k = 0; k < 4; ++k) {
        const auto& p = w.points[static_cast<std::size_t>(k)];
        s.bind(2 + k, p.date.iso());
        s.bind(6 + k, p.share);
        s.bind(10 + k, p.bench);
    }
    s.run();
}

std::optional<PriceWindow> Store::window(std::string_view transcript_id) const {
    Statement s(conn_->db,
                std::string("SELECT ") + kWindowColumns + " FROM price_windows WHERE transcript_id = ?");
    s.bind(1, transcript_id);
    if (!s.step()) return std::nullopt;
    return read_window(s);
}

std::vector<PriceWindow> Store::windows() const {
    Statement s(conn_->db,
                std::string("SELECT ") + kWindowColumns + " FROM price_windows ORDER BY transcript_id");
    std::vector<PriceWindow> out;
    while (s.step()) out.push_back(read_window(s));
    return out;
}

void Store::upsert_example(const LabeledExample& e) {
    Statement s(conn_->db,
                "INSERT INTO examples(transcript_id, price_movement, label, neg_threshold, pos_threshold) "
                "VALUES(?, ?, ?, ?, ?) ON CONFLICT(transcript_id) DO UPDATE SET "
                "price_movement = excluded.price_movement, label = excluded.label, "
                "neg_threshold = excluded.neg_threshold, pos_threshold = excluded.pos_threshold");
    s.bind(1, e.transcript_id).bind(2, e.price_movement).bind(3, to_int(e.label))
        .bind(4, e.thresholds.negative).bind(5, e.thresholds.positive).run();
}

std::vector<LabeledExample> Store::examples() const {
    Statement s(conn_->db,
                "SELECT transcript_id, price_movement, label, neg_threshold, pos_threshold "
                "FROM examples ORDER BY transcript_id");
    std::vector<LabeledExample> out;
    while (s.step()) {
        out.push_back({s.text(0), s.real(1), read_label(s, 2), Thresholds{s.real(3), s.real(4)}});
    }
    return out;
}

void Store::retain_examples(std::span<const std::string> keep) {
    const std::set<std::string> wanted(keep.begin(), keep.end());
    for (const auto& e : examples()) {
        if (wanted.contains(e.transcript_id)) continue;
        Statement s(conn_->db, "DELETE FROM examples WHERE transcript_id = ?");
        s.bind(1, e.transcript_id).run();
    }
}

void Store::replace_splits(std::span<const SplitAssignment> assignments) {
    exec("DELETE FROM splits");
    for (const auto& a : assignments) {
        Statement s(conn_->db,
                    "INSERT INTO splits(transcript_id, split, seed, train_frac, val_frac, test_frac) "
                    "VALUES(?, ?, ?, ?, ?, ?)");
        s.bind(1, a.transcript_id).bind(2, to_string(a.split))
            .bind(3, static_cast<long long>(a.seed)).bind(4, a.proportions.train)
            .bind(5, a.proportions.validation).bind(6, a.proportions.test).run();
    }
}

std::vector<SplitAssignment> Store::splits() const {
    Statement s(conn_->db,
                "SELECT transcript_id, split, seed, train_frac, val_frac, test_frac "
                "FROM splits ORDER BY transcript_id");
    std::vector<SplitAssignment> out;
    while (s.step()) {
        out.push_back({s.text(0), parse_split(s.text(1)), static_cast<std::uint64_t>(s.integer(2)),
                       SplitProportions{s.real(3), s.real(4), s.real(5)}});
    }
    return out;
}

std::vector<std::string> Store::load_split(Split split) const {
    Statement s(conn_->db, "SELECT transcript_id FROM splits WHERE split = ? ORDER BY transcript_id");
    s.bind(1, to_string(split));
    std::vector<std::string> out;
    while (s.step()) out.push_back(s.text(0));
    return out;
}

void Store::upsert_run(const RunRecord& run) {
    Statement s(conn_->db,
                std::string("INSERT INTO runs(") + kRunColumns +
                    ") VALUES(?, ?, ?, ?, ?, ?) ON CONFLICT(run_id) DO NOTHING");
    s.bind(1, run.run_id).bind(2, run.classifier_name).bind(3, run.classifier_version)
        .bind(4, run.config_json).bind(5, run.created_at).bind(6, run.finished_at).run();
}

void Store::finish_run(std::string_view run_id, std::string_view finished_at) {
    Statement s(conn_->db, "UPDATE runs SET finished_at = ? WHERE run_id = ? AND finished_at = ''");
    s.bind(1, finished_at).bind(2, run_id).run();
}

std::optional<RunRecord> Store::run(std::string_view run_id) const {
    Statement s(conn_->db, std::string("SELECT ") + kRunColumns + " FROM runs WHERE run_id = ?");
    s.bind(1, run_id);
    if (!s.step()) return std::nullopt;
    return read_run(s);
}

std::optional<RunRecord> Store::latest_run() const {
    Statement s(conn_->db, std::string("SELECT ") + kRunColumns +
                               " FROM runs ORDER BY created_at DESC, rowid DESC LIMIT 1");
    if (!s.step()) return std::nullopt;
    return read_run(s);
}

std::vector<RunRecord> Store::runs() const {
    Statement s(conn_->db, std::string("SELECT ") + kRunColumns + " FROM runs ORDER BY created_at, rowid");
    std::vector<RunRecord> out;
    while (s.step()) out.push_back(read_run(s));
    return out;
}

void Store::record_predictions(std::string_view run_id, std::span<const ChunkPrediction> chunks,
                               std::span<const TranscriptPrediction> transcripts) {
    for (const auto& c : chunks) {
        Statement s(conn_->db,
                    "INSERT OR REPLACE INTO chunk_predictions"
                    "(run_id, transcript_id, chunk_index, label, s0, s1, s2) VALUES(?, ?, ?, ?, ?, ?, ?)");
        s.bind(1, run_id).bind(2, c.transcript_id).bind(3, c.chunk_index).bind(4, to_int(c.label))
            .bind(5, c.scores[0]).bind(6, c.scores[1]).bind(7, c.scores[2]).run();
    }
    for (const auto& t : transcripts) {
        Statement s(conn_->db,
                    "INSERT OR REPLACE INTO transcript_predictions"
                    "(run_id, transcript_id, label, s0, s1, s2, chunk_count) VALUES(?, ?, ?, ?, ?, ?, ?)");
        s.bind(1, run_id).bind(2, t.transcript_id).bind(3, to_int(t.label)).bind(4, t.scores[0])
            .bind(5, t.scores[1]).bind(6, t.scores[2]).bind(7, t.chunk_count).run();
    }
}

std::vector<ChunkPrediction> Store::chunk_predictions(std::string_view run_id) const {
    Statement s(conn_->db,
                "SELECT transcript_id, chunk_index, label, s0, s1, s2 FROM chunk_predictions "
                "WHERE run_id = ? ORDER BY transcript_id, chunk_index");
    s.bind(1, run_id);
    std::vector<ChunkPrediction> out;
    while (s.step()) {
        out.push_back({s.text(0), static_cast<std::size_t>(s.integer(1)), read_label(s, 2),
                       Scores{s.real(3), s.real(4), s.real(5)}});
    }
    return out;
}

std::vector<TranscriptPrediction> Store::transcript_predictions(std::string_view run_id) const {
    Statement s(conn_->db,
                "SELECT transcript_id, label, s0, s1, s2, chunk_count FROM transcript_predictions "
                "WHERE run_id = ? ORDER BY transcript_id");
    s.bind(1, run_id);
    std::vector<TranscriptPrediction> out;
    while (s.step()) {
        out.push_back({s.text(0), read_label(s, 1), Scores{s.real(2), s.real(3), s.real(4)},
                       static_cast<std::size_t>(s.integer(5))});
    }
    return out;
}

void Store::put_model(std::string_view name, std::string_view kind, std::string_view payload) {
    Statement s(conn_->db,
                "INSERT INTO models(name, kind, payload) VALUES(?, ?, ?) ON CONFLICT(name) DO UPDATE "
                "SET kind = excluded.kind, payload = excluded.payload");
    s.bind(1, name).bind(2, kind).bind(3, payload).run();
}

std::optional<std::string> Store::model(std::string_view name) const {
    Statement s(conn_->db, "SELECT payload FROM models WHERE name = ?");
    s.bind(1, name);
    if (!s.step()) return std::nullopt;
    return s.text(0);
}

std::size_t Store::row_count(std::string_view table) const {
    if (std::find(kTables.begin(), kTables.end(), table) == kTables.end()) {
        throw ConfigurationError("unknown table " + std::string(table));
    }
    Statement s(conn_->db, "SELECT count(*) FROM " + std::string(table));
    s.step();
    return static_cast<std::size_t>(s.integer(0));
}

}  // namespace calltide
