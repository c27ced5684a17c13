// calltide: stage-gated earnings-call sentiment pipeline.
//
//   calltide ingest transcripts/
//   calltide prices
//   calltide label --neg -3 --pos 3
//   calltide split --seed 42 --ratios 0.8,0.1,0.1
//   calltide train-baseline
//   calltide predict --classifier builtin --strategy chunk
//   calltide evaluate
//
// Errors go to stderr as one JSON line {"error": kind, "message": text}.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "calltide/errors.hpp"
#include "calltide/pipeline.hpp"

namespace {

using namespace calltide;

struct Globals {
    std::string db = "calltide.db";
    std::string cache = "cache/quotes";
    std::string reports = "reports";
    std::string stopwords;
    std::string benchmark{kDefaultBenchmark};
    unsigned threads = 0;
};

int report_error(std::string_view kind, std::string_view message, int code) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << std::endl;
    return code;
}

void print_balance(const ClassBalance& b) {
    std::printf("%-10s %6s %8s\n", "label", "count", "share");
    for (Label l : kLabels) {
        const auto i = index_of(l);
        std::printf("%d %-8s %6zu %7.2f%%\n", to_int(l), std::string(label_name(l)).c_str(), b.counts[i],
                    100.0 * b.proportions[i]);
    }
    std::printf("%-10s %6zu\n", "total", b.total);
}

}  // namespace

int main(int argc, char** argv) {
    Globals g;
    CLI::App app{"calltide: earnings-call transcripts to sentiment labels and classifier reports"};
    app.require_subcommand(1);
    app.add_option("--db", g.db, "SQLite store path")->capture_default_str();
    app.add_option("--cache", g.cache, "Quote cache directory")->capture_default_str();
    app.add_option("--reports-dir", g.reports, "Where evaluate writes reports")->capture_default_str();
    app.add_option("--stopwords", g.stopwords, "Stopword list (default: bundled English list)")
        ->check(CLI::ExistingFile);
    app.add_option("--benchmark", g.benchmark, "Benchmark index symbol")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");

    std::string ingest_dir;
    auto* ingest = app.add_subcommand("ingest", "Parse transcripts into the store");
    ingest->add_option("dir", ingest_dir, "Directory of .html/.htm/.txt transcripts")->required();

    auto* prices = app.add_subcommand("prices", "Build price windows for transcripts lacking one");

    Thresholds thresholds;
    auto* label = app.add_subcommand("label", "Label examples from price movement");
    label->add_option("--neg", thresholds.negative, "Negative threshold, percent")->capture_default_str();
    label->add_option("--pos", thresholds.positive, "Positive threshold, percent")->capture_default_str();

    std::uint64_t seed = kDefaultSplitSeed;
    std::string ratios = "0.8,0.1,0.1";
    bool no_stratify = false;
    auto* split = app.add_subcommand("split", "Stratified train/validation/test split");
    split->add_option("--seed", seed)->capture_default_str();
    split->add_option("--ratios", ratios, "train,validation,test fractions")->capture_default_str();
    split->add_flag("--no-stratify", no_stratify, "Split the pool without per-class strata");

    TrainOptions train_opts;
    std::string train_text = "qa";
    auto* train = app.add_subcommand("train-baseline", "Fit the naive Bayes baseline on the train split");
    train->add_option("--alpha", train_opts.alpha, "Additive smoothing")->capture_default_str();
    train->add_option("--text", train_text, "qa or full")->capture_default_str();

    PredictOptions predict_opts;
    std::string strategy = "chunk";
    std::string predict_text = "qa";
    std::optional<std::size_t> budget;
    double request_timeout = 120.0;
    double hello_timeout = 30.0;
    auto* predict = app.add_subcommand("predict", "Score the test split and record a run");
    predict->add_option("--classifier", predict_opts.classifier, "builtin or a plugin executable")
        ->capture_default_str();
    predict->add_option("--plugin-arg", predict_opts.plugin.args, "Argument passed to the plugin");
    predict->add_option("--strategy", strategy, "chunk or truncate")->capture_default_str();
    predict->add_option("--text", predict_text, "qa or full")->capture_default_str();
    predict->add_option("--budget", budget, "Words per chunk (default 3/4 of max_tokens, min 64)");
    predict->add_option("--timeout", request_timeout, "Seconds per plugin request")->capture_default_str();
    predict->add_option("--hello-timeout", hello_timeout, "Seconds to wait for the plugin hello")
        ->capture_default_str();

    EvaluateOptions eval_opts;
    std::string run_id;
    std::string eval_format = "text";
    auto* evaluate = app.add_subcommand("evaluate", "Write classification reports for a run");
    evaluate->add_option("--run", run_id, "Run id (default: latest)");
    evaluate->add_option("--format", eval_format, "Stdout format: text, json or csv")->capture_default_str();
    evaluate->add_option("--bucket", eval_opts.density_bucket, "Token density bucket width")
        ->capture_default_str();

    std::string export_format = "jsonl";
    std::string export_text = "qa";
    std::string export_form = "raw";
    std::string export_out;
    auto* exporter = app.add_subcommand("export", "Dump the labeled dataset for plugin training");
    exporter->add_option("--format", export_format)->capture_default_str();
    exporter->add_option("--text", export_text, "qa or full")->capture_default_str();
    exporter->add_option("--form", export_form, "raw or preprocessed")->capture_default_str();
    exporter->add_option("--out", export_out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("ConfigurationError", e.what(), exit_code(ErrorKind::ConfigurationError));
    }

    try {
        const StopwordList custom_stopwords =
            g.stopwords.empty() ? StopwordList{} : StopwordList::load(g.stopwords);
        const StopwordList& stopwords = g.stopwords.empty() ? StopwordList::english() : custom_stopwords;

        // Validate flags before touching the store.
        if (*label) thresholds.validate();
        const SplitProportions proportions = *split ? SplitProportions::parse(ratios) : SplitProportions{};
        if (*train) train_opts.text = parse_text_mode(train_text);
        if (*predict) {
            predict_opts.strategy = parse_chunk_strategy(strategy);
            predict_opts.text = parse_text_mode(predict_text);
            predict_opts.budget = budget;
            predict_opts.threads = g.threads;
            if (!(request_timeout > 0) || !(hello_timeout > 0)) {
                throw ConfigurationError("timeouts must be positive");
            }
            predict_opts.plugin.request_timeout =
                std::chrono::milliseconds(static_cast<long long>(request_timeout * 1000));
            predict_opts.plugin.hello_timeout =
                std::chrono::milliseconds(static_cast<long long>(hello_timeout * 1000));
        }
        const ReportFormat out_format = *evaluate ? parse_report_format(eval_format) : ReportFormat::text;
        ExportOptions export_opts;
        if (*exporter) {
            if (export_format != "jsonl") throw ConfigurationError("export supports --format jsonl only");
            export_opts.text = parse_text_mode(export_text);
            export_opts.form = parse_input_kind(export_form);
        }

        Store store = Store::open(g.db);

        if (*ingest) {
            const auto s = run_ingest(store, ingest_dir, g.threads);
            std::printf("ingested %zu transcripts (%zu new, %zu updated, %zu unchanged)\n", s.files_ok,
                        s.inserted, s.updated, s.unchanged);
            for (const auto& f : s.failures) {
                std::printf("failed %s: %s: %s\n", f.path.c_str(), std::string(to_string(f.kind)).c_str(),
                            f.message.c_str());
            }
            std::printf("%zu parse failures\n", s.failures.size());
        } else if (*prices) {
            MarketDataClient client(MarketDataConfig::from_environment(g.cache));
            const auto s = run_prices(store, client, g.benchmark);
            std::printf("built %zu windows (%zu already present)\n", s.built, s.existing);
            for (const auto& d : s.dropped) {
                std::printf("dropped %s: %s: %s\n", d.transcript_id.c_str(),
                            std::string(to_string(d.kind)).c_str(), d.message.c_str());
            }
            std::printf("%zu dropped for missing data\n", s.dropped.size());
        } else if (*label) {
            const auto s = run_label(store, thresholds);
            std::printf("labeled %zu examples (%zu changed) at thresholds %g / %g\n", s.labeled, s.changed,
                        thresholds.negative, thresholds.positive);
            if (s.splits_cleared) std::printf("labels changed; previous split cleared\n");
            print_balance(s.balance);
        } else if (*split) {
            const auto s = run_split(store, proportions, seed, !no_stratify);
            std::printf("split seed %llu: train %zu, validation %zu, test %zu%s\n",
                        static_cast<unsigned long long>(seed), s.sizes[0], s.sizes[1], s.sizes[2],
                        s.changed ? "" : " (unchanged)");
        } else if (*train) {
            const auto s = run_train_baseline(store, train_opts, stopwords);
            std::printf("baseline trained on %zu documents, vocabulary %zu%s\n", s.documents, s.vocabulary,
                        s.changed ? "" : " (unchanged)");
        } else if (*predict) {
            const auto s = run_predict(store, predict_opts, stopwords);
            std::printf("run %s: %zu transcripts, %zu chunks, budget %zu%s\n", s.run_id.c_str(),
                        s.transcripts, s.chunks, s.budget, s.reused ? " (already recorded)" : "");
        } else if (*evaluate) {
            if (!run_id.empty()) eval_opts.run_id = run_id;
            eval_opts.reports_dir = g.reports;
            const auto s = run_evaluate(store, eval_opts);
            std::cout << render_report(s.transcript_report, out_format);
            if (out_format == ReportFormat::text) {
                std::cout << "\n" << render_confusion_text(s.transcript_report.matrix);
                std::cout << "\nreports written to " << s.directory.string() << "\n";
            }
        } else if (*exporter) {
            std::size_t n = 0;
            if (export_out.empty()) {
                n = export_jsonl(store, std::cout, export_opts, stopwords);
            } else {
                std::ofstream out(export_out, std::ios::binary | std::ios::trunc);
                if (!out) throw IoError("cannot open " + export_out);
                n = export_jsonl(store, out, export_opts, stopwords);
                std::printf("exported %zu examples to %s\n", n, export_out.c_str());
            }
        }
        return 0;
    } catch (const Error& e) {
        return report_error(to_string(e.kind()), e.what(), exit_code(e.kind()));
    } catch (const std::exception& e) {
        return report_error("InternalError", e.what(), 1);
    }
}
