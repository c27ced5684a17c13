#include "calltide/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include <json.hpp>

#include "calltide/errors.hpp"

namespace calltide {

using json = nlohmann::json;

namespace fs = std::filesystem;

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string utc_timestamp(std::chrono::system_clock::time_point t) {
    const std::time_t secs = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    ::gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string_view to_string(ChunkStrategy s) noexcept {
    return s == ChunkStrategy::chunk ? "chunk" : "truncate";
}

ChunkStrategy parse_chunk_strategy(std::string_view name) {
    if (name == "chunk") return ChunkStrategy::chunk;
    if (name == "truncate") return ChunkStrategy::truncate;
    throw ConfigurationError("strategy must be chunk or truncate, got '" + std::string(name) + "'");
}

namespace {

[[noreturn]] void missing_stage(std::string_view stage, std::string_view needed) {
    throw OrderingError(std::string(stage) + " needs the " + std::string(needed) +
                        " stage; run `calltide " + std::string(needed) + "` first");
}

std::map<std::string, LabeledExample> examples_by_id(const Store& store) {
    std::map<std::string, LabeledExample> out;
    for (auto& e : store.examples()) out.emplace(e.transcript_id, std::move(e));
    return out;
}

}  // namespace

IngestSummary run_ingest(Store& store, const fs::path& dir, unsigned threads) {
    IngestResult result = ingest_directory(dir, {}, threads);
    IngestSummary s;
    s.files_ok = result.transcripts.size();
    s.failures = std::move(result.failures);
    Store::Transaction tx(store);
    for (const auto& t : result.transcripts) {
        const auto existing = store.transcript(t.id);
        if (existing && *existing == t) {
            ++s.unchanged;
            continue;
        }
        store.upsert_transcript(t);
        ++(existing ? s.updated : s.inserted);
    }
    tx.commit();
    return s;
}

PricesSummary run_prices(Store& store, MarketDataClient& client, std::string_view benchmark) {
    const auto transcripts = store.transcripts();
    if (transcripts.empty()) missing_stage("prices", "ingest");

    std::set<std::string> have;
    for (const auto& w : store.windows()) have.insert(w.transcript_id);

    PricesSummary s;
    std::map<std::string, QuoteSeries, std::less<>> series;
    auto series_for = [&](std::string_view ticker) -> const QuoteSeries& {
        auto it = series.find(ticker);
        if (it == series.end()) {
            it = series.emplace(std::string(ticker), parse_daily_payload(ticker, client.fetch_payload(ticker)))
                     .first;
        }
        return it->second;
    };

    std::vector<PriceWindow> built;
    for (const auto& t : transcripts) {
        if (have.contains(t.id)) {
            ++s.existing;
            continue;
        }
        const QuoteSeries& bench = series_for(benchmark);
        try {
            built.push_back(build_price_window(t, series_for(t.ticker), bench));
        } catch (const NoQuoteNearby& e) {
            s.dropped.push_back({t.id, e.kind(), e.what()});
        } catch (const UnknownTicker& e) {
            s.dropped.push_back({t.id, e.kind(), e.what()});
        }
    }
    Store::Transaction tx(store);
    for (const auto& w : built) store.upsert_window(w);
    tx.commit();
    s.built = built.size();
    return s;
}

LabelSummary run_label(Store& store, const Thresholds& thresholds) {
    thresholds.validate();
    const auto windows = store.windows();
    if (windows.empty()) missing_stage("label", "prices");

    const auto before = examples_by_id(store);
    LabelSummary s;
    std::vector<std::string> keep;
    std::vector<LabeledExample> fresh;
    for (const auto& w : windows) {
        fresh.push_back(label_window(w, thresholds));
        keep.push_back(w.transcript_id);
    }
    bool labels_moved = before.size() != fresh.size();
    Store::Transaction tx(store);
    for (const auto& e : fresh) {
        const auto it = before.find(e.transcript_id);
        if (it != before.end() && it->second == e) continue;
        if (it == before.end() || it->second.label != e.label) labels_moved = true;
        store.upsert_example(e);
        ++s.changed;
    }
    store.retain_examples(keep);
    const std::string threshold_text =
        json{{"negative", thresholds.negative}, {"positive", thresholds.positive}}.dump();
    if (store.meta("label.thresholds") != threshold_text) store.set_meta("label.thresholds", threshold_text);
    if (labels_moved && store.row_count("splits") > 0) {
        store.replace_splits({});
        s.splits_cleared = true;
    }
    tx.commit();
    s.labeled = fresh.size();
    s.balance = class_balance(std::span<const LabeledExample>(fresh));
    return s;
}

SplitSummary run_split(Store& store, const SplitProportions& proportions, std::uint64_t seed,
                       bool stratify) {
    proportions.validate();
    const auto examples = store.examples();
    if (examples.empty()) missing_stage("split", "label");
    const auto assignments = stratified_split(examples, proportions, seed, stratify);
    SplitSummary s;
    for (const auto& a : assignments) ++s.sizes[static_cast<std::size_t>(a.split)];
    if (store.splits() == assignments) return s;
    Store::Transaction tx(store);
    store.replace_splits(assignments);
    tx.commit();
    s.changed = true;
    return s;
}

TrainSummary run_train_baseline(Store& store, const TrainOptions& options, const StopwordList& stopwords) {
    if (store.row_count("splits") == 0) missing_stage("train-baseline", "split");
    const auto labels = examples_by_id(store);
    std::vector<TrainingDocument> docs;
    for (const auto& id : store.load_split(Split::train)) {
        const auto t = store.transcript(id);
        if (!t) throw StoreCorrupt("split names unknown transcript " + id);
        docs.push_back({preprocess(select_text(*t, options.text), stopwords), labels.at(id).label});
    }
    const BaselineModel model = train_baseline(docs, options.alpha);
    const std::string payload = model.to_json();
    const json config{{"alpha", options.alpha},
                      {"text", to_string(options.text)},
                      {"stopwords", stopwords.version()},
                      {"documents", docs.size()}};

    TrainSummary s;
    s.documents = docs.size();
    s.vocabulary = model.vocabulary_size();
    if (store.model(kBaselineModelName) == payload &&
        store.meta("baseline.config") == config.dump()) {
        return s;
    }
    Store::Transaction tx(store);
    store.put_model(kBaselineModelName, "multinomial-nb", payload);
    store.set_meta("baseline.config", config.dump());
    tx.commit();
    s.changed = true;
    return s;
}

namespace {

struct PreparedTranscript {
    std::string id;
    std::vector<Chunk> chunks;
};

std::vector<ChunkPrediction> score_chunks(Classifier& classifier, bool parallel,
                                          const std::vector<const Chunk*>& chunks, unsigned threads) {
    std::vector<ChunkPrediction> out(chunks.size());
    if (!parallel || chunks.size() < 2) {
        for (std::size_t i = 0; i < chunks.size(); ++i) out[i] = predict(classifier, *chunks[i]);
        return out;
    }
    unsigned n = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    n = static_cast<unsigned>(std::min<std::size_t>(n, chunks.size()));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    {
        std::vector<std::jthread> workers;
        for (unsigned w = 0; w < n; ++w) {
            workers.emplace_back([&, w] {
                try {
                    for (std::size_t i; (i = next.fetch_add(1)) < chunks.size();) {
                        out[i] = predict(classifier, *chunks[i]);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace

PredictSummary run_predict(Store& store, const PredictOptions& options, const StopwordList& stopwords) {
    if (store.row_count("splits") == 0) missing_stage("predict", "split");
    const auto test_ids = store.load_split(Split::test);
    if (test_ids.empty()) throw InsufficientExamples("the test split is empty");

    std::unique_ptr<Classifier> classifier;
    std::string model_digest;
    const bool builtin = options.classifier == "builtin";
    if (builtin) {
        const auto payload = store.model(kBaselineModelName);
        if (!payload) missing_stage("predict", "train-baseline");
        model_digest = fnv1a_hex(*payload);
        classifier = std::make_unique<BaselineClassifier>(BaselineModel::from_json(*payload));
    } else {
        classifier = PluginClassifier::launch(options.classifier, options.plugin);
    }
    const ClassifierHandle& handle = classifier->handle();
    const std::size_t budget = options.budget.value_or(chunk_budget_for(handle.max_tokens));
    if (budget == 0) throw ConfigurationError("budget must be positive");

    const auto first_split = store.splits().front();
    json config{
        {"classifier",
         {{"name", handle.name},
          {"version", handle.version},
          {"mode", to_string(handle.mode)},
          {"max_tokens", handle.max_tokens},
          {"wants", to_string(handle.wants)},
          {"source", builtin ? std::string("builtin") : fs::absolute(options.classifier).string()},
          {"args", options.plugin.args},
          {"model_digest", model_digest}}},
        {"strategy", to_string(options.strategy)},
        {"budget", budget},
        {"text", to_string(options.text)},
        {"stopwords", stopwords.version()},
        {"split",
         {{"seed", first_split.seed},
          {"ratios", first_split.proportions.as_array()},
          {"digest", fnv1a_hex(json(test_ids).dump())}}},
        {"labels", store.meta("label.thresholds").value_or("")},
    };
    if (builtin) config["baseline"] = store.meta("baseline.config").value_or("");
    const std::string config_text = config.dump();
    const std::string run_id = handle.name + "-" + fnv1a_hex(config_text).substr(0, 12);

    PredictSummary s;
    s.run_id = run_id;
    s.budget = budget;
    s.transcripts = test_ids.size();

    if (const auto existing = store.run(run_id); existing && !existing->finished_at.empty()) {
        const auto recorded = store.transcript_predictions(run_id);
        if (recorded.size() == test_ids.size()) {
            s.reused = true;
            s.chunks = store.chunk_predictions(run_id).size();
            return s;
        }
    }

    std::vector<PreparedTranscript> prepared;
    std::vector<const Chunk*> all_chunks;
    for (const auto& id : test_ids) {
        const auto t = store.transcript(id);
        if (!t) throw StoreCorrupt("split names unknown transcript " + id);
        const std::string& text = select_text(*t, options.text);
        const Tokens tokens =
            handle.wants == InputKind::preprocessed ? preprocess(text, stopwords) : tokenize(text);
        PreparedTranscript p{id, {}};
        if (options.strategy == ChunkStrategy::chunk && !tokens.empty()) {
            p.chunks = chunk(id, tokens, budget);
        } else {
            p.chunks.push_back(truncate(id, tokens, budget));
        }
        prepared.push_back(std::move(p));
    }
    for (const auto& p : prepared) {
        for (const auto& c : p.chunks) all_chunks.push_back(&c);
    }

    const std::string created = utc_timestamp();
    const auto chunk_predictions = score_chunks(*classifier, builtin, all_chunks, options.threads);
    if (auto* plugin = dynamic_cast<PluginClassifier*>(classifier.get())) plugin->shutdown();

    std::vector<TranscriptPrediction> transcript_predictions;
    std::size_t offset = 0;
    for (const auto& p : prepared) {
        const std::span<const ChunkPrediction> mine(chunk_predictions.data() + offset, p.chunks.size());
        offset += p.chunks.size();
        TranscriptPrediction tp;
        tp.transcript_id = p.id;
        tp.label = aggregate_majority(mine);
        tp.chunk_count = mine.size();
        for (const auto& cp : mine) {
            for (std::size_t c = 0; c < kNumClasses; ++c) tp.scores[c] += cp.scores[c];
        }
        for (double& v : tp.scores) v /= static_cast<double>(mine.size());
        transcript_predictions.push_back(std::move(tp));
    }

    Store::Transaction tx(store);
    store.upsert_run({run_id, handle.name, handle.version, config_text, created, ""});
    store.record_predictions(run_id, chunk_predictions, transcript_predictions);
    store.finish_run(run_id, utc_timestamp());
    tx.commit();
    s.chunks = chunk_predictions.size();
    return s;
}

namespace {

void write_file(const fs::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("cannot write " + path.string());
}

json balance_json(const ClassBalance& b) {
    json classes = json::object();
    for (Label l : kLabels) {
        classes[std::string(label_name(l))] = {{"label", to_int(l)},
                                               {"count", b.counts[index_of(l)]},
                                               {"proportion", b.proportions[index_of(l)]}};
    }
    return {{"total", b.total}, {"classes", classes}};
}

}  // namespace

EvaluateSummary run_evaluate(Store& store, const EvaluateOptions& options) {
    std::optional<RunRecord> run = options.run_id ? store.run(*options.run_id) : store.latest_run();
    if (!run) {
        if (options.run_id) throw ConfigurationError("no run with id '" + *options.run_id + "'");
        missing_stage("evaluate", "predict");
    }
    const json config = json::parse(run->config_json);
    const auto labels = examples_by_id(store);

    std::vector<LabelPair> pairs;
    for (const auto& p : store.transcript_predictions(run->run_id)) {
        const auto it = labels.find(p.transcript_id);
        if (it == labels.end()) continue;  // relabeled since the run
        pairs.push_back({it->second.label, p.label});
    }
    EvaluateSummary s;
    s.run_id = run->run_id;
    s.transcript_report = metrics(confusion(pairs), run->run_id);

    if (config.value("strategy", "") == "chunk") {
        std::vector<LabelPair> chunk_pairs;
        for (const auto& c : store.chunk_predictions(run->run_id)) {
            const auto it = labels.find(c.transcript_id);
            if (it != labels.end()) chunk_pairs.push_back({it->second.label, c.label});
        }
        EvalReport r = metrics(confusion(chunk_pairs), run->run_id);
        r.level = "chunk";
        s.chunk_report = std::move(r);
    }

    s.directory = options.reports_dir / run->run_id;
    fs::create_directories(s.directory);
    auto emit = [&](const std::string& name, std::string_view content) {
        write_file(s.directory / name, content);
        s.files.push_back(s.directory / name);
    };
    emit("report.txt", render_report(s.transcript_report, ReportFormat::text) + "\nconfusion matrix\n" +
                           render_confusion_text(s.transcript_report.matrix));
    emit("report.json", render_report(s.transcript_report, ReportFormat::json));
    emit("report.csv", render_report(s.transcript_report, ReportFormat::csv));
    emit("confusion.csv", render_confusion_csv(s.transcript_report.matrix));
    if (s.chunk_report) {
        emit("chunk_report.txt", render_report(*s.chunk_report, ReportFormat::text) +
                                     "\nconfusion matrix\n" + render_confusion_text(s.chunk_report->matrix));
        emit("chunk_report.json", render_report(*s.chunk_report, ReportFormat::json));
        emit("chunk_confusion.csv", render_confusion_csv(s.chunk_report->matrix));
    }

    std::map<std::string, Split> split_of;
    for (const auto& a : store.splits()) split_of.emplace(a.transcript_id, a.split);
    std::vector<Label> all;
    std::array<std::vector<Label>, 3> per_split;
    for (const auto& [id, e] : labels) {
        all.push_back(e.label);
        if (const auto it = split_of.find(id); it != split_of.end()) {
            per_split[static_cast<std::size_t>(it->second)].push_back(e.label);
        }
    }
    json balance{{"run_id", run->run_id}, {"all", balance_json(class_balance(all))}};
    for (Split sp : kSplits) {
        balance[std::string(to_string(sp))] = balance_json(class_balance(per_split[static_cast<std::size_t>(sp)]));
    }
    emit("class_balance.json", balance.dump(2) + "\n");

    const TextMode mode = parse_text_mode(config.value("text", std::string("qa")));
    std::vector<std::size_t> counts;
    for (const auto& t : store.transcripts()) {
        if (labels.contains(t.id)) counts.push_back(token_count(t, mode));
    }
    const auto buckets = token_density(counts, options.density_bucket);
    emit("token_density.csv", render_token_density_csv(buckets));
    return s;
}

std::size_t export_jsonl(const Store& store, std::ostream& out, const ExportOptions& options,
                         const StopwordList& stopwords) {
    const auto examples = store.examples();
    if (examples.empty()) missing_stage("export", "label");
    std::map<std::string, Split> split_of;
    for (const auto& a : store.splits()) split_of.emplace(a.transcript_id, a.split);
    std::size_t n = 0;
    for (const auto& e : examples) {
        const auto t = store.transcript(e.transcript_id);
        if (!t) throw StoreCorrupt("example names unknown transcript " + e.transcript_id);
        const std::string& text = select_text(*t, options.text);
        json line{{"id", e.transcript_id},
                  {"text", options.form == InputKind::raw ? text : join_tokens(preprocess(text, stopwords))},
                  {"label", to_int(e.label)}};
        const auto it = split_of.find(e.transcript_id);
        line["split"] = it == split_of.end() ? json(nullptr) : json(std::string(to_string(it->second)));
        out << line.dump() << '\n';
        ++n;
    }
    return n;
}

}  // namespace calltide
