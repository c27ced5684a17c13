#include "calltide/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "calltide/errors.hpp"

namespace calltide {

using json = nlohmann::json;

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : counts) {
        for (std::size_t v : row) n += v;
    }
    return n;
}

ConfusionMatrix confusion(std::span<const LabelPair> pairs) {
    ConfusionMatrix m;
    for (const auto& p : pairs) ++m.counts[index_of(p.truth)][index_of(p.predicted)];
    return m;
}

namespace {

double ratio(std::size_t num, std::size_t den, std::size_t& warnings) {
    if (den == 0) {
        ++warnings;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EvalReport metrics(const ConfusionMatrix& matrix, std::string run_id) {
    const std::size_t total = matrix.total();
    if (total == 0) throw EmptyEvaluation("no evaluated examples");

    EvalReport r;
    r.run_id = std::move(run_id);
    r.matrix = matrix;
    std::size_t trace = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const std::size_t tp = matrix.counts[c][c];
        std::size_t predicted = 0;
        std::size_t actual = 0;
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            predicted += matrix.counts[k][c];
            actual += matrix.counts[c][k];
        }
        auto& m = r.per_class[c];
        m.precision = ratio(tp, predicted, r.zero_division_warnings);
        m.recall = ratio(tp, actual, r.zero_division_warnings);
        if (m.precision + m.recall > 0.0) {
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        } else {
            m.f1 = 0.0;
            ++r.zero_division_warnings;
        }
        m.support = actual;
        trace += tp;
    }
    r.accuracy = static_cast<double>(trace) / static_cast<double>(total);

    for (const auto& m : r.per_class) {
        r.macro.precision += m.precision;
        r.macro.recall += m.recall;
        r.macro.f1 += m.f1;
        const double w = static_cast<double>(m.support);
        r.weighted.precision += w * m.precision;
        r.weighted.recall += w * m.recall;
        r.weighted.f1 += w * m.f1;
    }
    const double n = static_cast<double>(kNumClasses);
    r.macro.precision /= n;
    r.macro.recall /= n;
    r.macro.f1 /= n;
    const double t = static_cast<double>(total);
    r.weighted.precision /= t;
    r.weighted.recall /= t;
    r.weighted.f1 /= t;
    r.macro.support = total;
    r.weighted.support = total;
    return r;
}

double micro_f1(const ConfusionMatrix& matrix) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            if (c == k) {
                tp += matrix.counts[c][k];
            } else {
                fn += matrix.counts[c][k];
                fp += matrix.counts[k][c];
            }
        }
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

ReportFormat parse_report_format(std::string_view name) {
    if (name == "text") return ReportFormat::text;
    if (name == "json") return ReportFormat::json;
    if (name == "csv") return ReportFormat::csv;
    throw ConfigurationError("report format must be text, json or csv");
}

namespace {

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string right(std::string_view s, std::size_t width) {
    std::string out;
    if (s.size() < width) out.assign(width - s.size(), ' ');
    out += s;
    return out;
}

json metrics_json(const ClassMetrics& m) {
    return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

ClassMetrics metrics_from_json(const json& j) {
    return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>(),
            j.at("support").get<std::size_t>()};
}

std::string render_text(const EvalReport& r) {
    constexpr std::size_t kNameWidth = 12;
    constexpr std::size_t kCol = 9;
    std::ostringstream out;
    out << "run: " << (r.run_id.empty() ? "-" : r.run_id) << "  level: " << r.level << "\n\n";
    out << right("", kNameWidth) << ' ';
    for (std::string_view h : {"precision", "recall", "f1-score", "support"}) out << ' ' << right(h, kCol);
    out << "\n\n";
    auto row = [&](std::string_view name, const ClassMetrics& m) {
        out << right(name, kNameWidth) << ' ' << ' ' << right(fixed4(m.precision), kCol) << ' '
            << right(fixed4(m.recall), kCol) << ' ' << right(fixed4(m.f1), kCol) << ' '
            << right(std::to_string(m.support), kCol) << '\n';
    };
    for (Label l : kLabels) row(label_name(l), r.per_class[index_of(l)]);
    out << '\n';
    out << right("accuracy", kNameWidth) << ' ' << ' ' << right("", kCol) << ' ' << right("", kCol)
        << ' ' << right(fixed4(r.accuracy), kCol) << ' ' << right(std::to_string(r.total()), kCol)
        << '\n';
    row("macro avg", r.macro);
    row("weighted avg", r.weighted);
    if (r.zero_division_warnings > 0) {
        out << "\nwarning: " << r.zero_division_warnings
            << " metric(s) had a zero denominator and were set to 0\n";
    }
    return out.str();
}

std::string render_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "class,precision,recall,f1,support\n";
    auto row = [&](std::string_view name, const ClassMetrics& m) {
        out << name << ',' << exact(m.precision) << ',' << exact(m.recall) << ',' << exact(m.f1) << ','
            << m.support << '\n';
    };
    for (Label l : kLabels) row(label_name(l), r.per_class[index_of(l)]);
    out << "accuracy,,," << exact(r.accuracy) << ',' << r.total() << '\n';
    row("macro avg", r.macro);
    row("weighted avg", r.weighted);
    return out.str();
}

}  // namespace

std::string render_report(const EvalReport& r, ReportFormat format) {
    switch (format) {
        case ReportFormat::text:
            return render_text(r);
        case ReportFormat::csv:
            return render_csv(r);
        case ReportFormat::json: {
            json classes = json::array();
            for (Label l : kLabels) {
                json c = metrics_json(r.per_class[index_of(l)]);
                c["label"] = to_int(l);
                c["name"] = label_name(l);
                classes.push_back(std::move(c));
            }
            json doc{
                {"run_id", r.run_id},
                {"level", r.level},
                {"confusion", r.matrix.counts},
                {"classes", classes},
                {"accuracy", r.accuracy},
                {"macro", metrics_json(r.macro)},
                {"weighted", metrics_json(r.weighted)},
                {"total", r.total()},
                {"zero_division_warnings", r.zero_division_warnings},
            };
            return doc.dump(2) + "\n";
        }
    }
    return {};
}

EvalReport parse_report_json(std::string_view json_text) {
    const json doc = json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) throw ConfigurationError("report is not valid JSON");
    try {
        EvalReport r;
        r.run_id = doc.at("run_id").get<std::string>();
        r.level = doc.at("level").get<std::string>();
        r.matrix.counts = doc.at("confusion").get<decltype(r.matrix.counts)>();
        const auto& classes = doc.at("classes");
        if (classes.size() != kNumClasses) throw ConfigurationError("report must list 3 classes");
        for (const auto& c : classes) {
            const auto l = label_from_int(c.at("label").get<long long>());
            if (!l) throw ConfigurationError("report class label out of range");
            r.per_class[index_of(*l)] = metrics_from_json(c);
        }
        r.accuracy = doc.at("accuracy").get<double>();
        r.macro = metrics_from_json(doc.at("macro"));
        r.weighted = metrics_from_json(doc.at("weighted"));
        r.zero_division_warnings = doc.at("zero_division_warnings").get<std::size_t>();
        return r;
    } catch (const json::exception& e) {
        throw ConfigurationError(std::string("malformed report: ") + e.what());
    }
}

std::string render_confusion_csv(const ConfusionMatrix& m) {
    std::ostringstream out;
    out << "true\\predicted";
    for (Label l : kLabels) out << ',' << label_name(l);
    out << '\n';
    for (Label t : kLabels) {
        out << label_name(t);
        for (Label p : kLabels) out << ',' << m.at(t, p);
        out << '\n';
    }
    return out.str();
}

std::string render_confusion_text(const ConfusionMatrix& m) {
    constexpr std::size_t kCol = 10;
    std::ostringstream out;
    out << right("true \\ pred", 12);
    for (Label l : kLabels) out << right(label_name(l), kCol);
    out << '\n';
    for (Label t : kLabels) {
        out << right(label_name(t), 12);
        for (Label p : kLabels) out << right(std::to_string(m.at(t, p)), kCol);
        out << '\n';
    }
    return out.str();
}

std::vector<DensityBucket> token_density(std::span<const std::size_t> token_counts,
                                         std::size_t bucket_width) {
    if (bucket_width == 0) throw ConfigurationError("density bucket width must be positive");
    if (token_counts.empty()) return {};
    const std::size_t top = *std::max_element(token_counts.begin(), token_counts.end());
    std::vector<DensityBucket> buckets(top / bucket_width + 1);
    for (std::size_t k = 0; k < buckets.size(); ++k) buckets[k].lower = k * bucket_width;
    for (std::size_t n : token_counts) ++buckets[n / bucket_width].count;
    return buckets;
}

std::string render_token_density_csv(std::span<const DensityBucket> buckets) {
    std::ostringstream out;
    out << "bucket_lower,count\n";
    for (const auto& b : buckets) out << b.lower << ',' << b.count << '\n';
    return out.str();
}

}  // namespace calltide
