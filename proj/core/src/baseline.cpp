#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "calltide/classify.hpp"
#include "calltide/errors.hpp"

namespace calltide {

using json = nlohmann::json;

std::string_view to_string(ClassifierMode mode) noexcept {
    return mode == ClassifierMode::builtin ? "builtin" : "plugin";
}

std::string_view to_string(InputKind kind) noexcept {
    return kind == InputKind::raw ? "raw" : "preprocessed";
}

InputKind parse_input_kind(std::string_view name) {
    if (name == "raw") return InputKind::raw;
    if (name == "preprocessed") return InputKind::preprocessed;
    throw ConfigurationError("wants must be raw or preprocessed, got '" + std::string(name) + "'");
}

void ClassifierHandle::validate() const {
    if (name.empty()) throw ConfigurationError("classifier name is empty");
    if (max_tokens < kMinMaxTokens) {
        throw ConfigurationError("classifier max_tokens " + std::to_string(max_tokens) +
                                 " is below the minimum of 16");
    }
}

ChunkPrediction predict(Classifier& classifier, const Chunk& chunk) {
    ChunkPrediction p;
    p.transcript_id = chunk.transcript_id;
    p.chunk_index = chunk.chunk_index;
    p.scores = classifier.score(chunk.text);
    p.label = argmax_label(p.scores);
    return p;
}

namespace {

Scores softmax(const Scores& logits) {
    const double top = *std::max_element(logits.begin(), logits.end());
    Scores out{};
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        out[c] = std::exp(logits[c] - top);
        sum += out[c];
    }
    for (double& v : out) v /= sum;
    return out;
}

}  // namespace

Scores BaselineModel::posterior(std::span<const std::string> tokens) const {
    Scores logits = log_priors_;
    for (const auto& w : tokens) {
        const auto it = loglik_.find(w);
        if (it == loglik_.end()) continue;
        for (std::size_t c = 0; c < kNumClasses; ++c) logits[c] += it->second[c];
    }
    return softmax(logits);
}

BaselineModel train_baseline(std::span<const TrainingDocument> docs, double alpha) {
    if (!std::isfinite(alpha) || !(alpha > 0.0)) {
        throw ConfigurationError("smoothing alpha must be positive");
    }
    std::array<std::size_t, kNumClasses> doc_counts{};
    std::array<std::size_t, kNumClasses> token_totals{};
    std::map<std::string, std::array<std::size_t, kNumClasses>, std::less<>> counts;
    for (const auto& d : docs) {
        const std::size_t c = index_of(d.label);
        ++doc_counts[c];
        for (const auto& w : d.tokens) {
            ++counts[w][c];
            ++token_totals[c];
        }
    }
    for (Label l : kLabels) {
        if (doc_counts[index_of(l)] == 0) {
            throw InsufficientExamples("no training documents for class " +
                                       std::string(label_name(l)));
        }
    }

    BaselineModel m;
    m.alpha_ = alpha;
    const double n_docs = static_cast<double>(docs.size());
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        m.priors_[c] = static_cast<double>(doc_counts[c]) / n_docs;
        m.log_priors_[c] = std::log(m.priors_[c]);
    }
    const double v = static_cast<double>(counts.size());
    Scores log_denominator{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        log_denominator[c] = std::log(static_cast<double>(token_totals[c]) + alpha * v);
    }
    for (const auto& [word, per_class] : counts) {
        Scores ll{};
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            ll[c] = std::log(static_cast<double>(per_class[c]) + alpha) - log_denominator[c];
        }
        m.loglik_.emplace(word, ll);
    }
    return m;
}

std::string BaselineModel::to_json() const {
    json vocab = json::object();
    for (const auto& [word, ll] : loglik_) vocab[word] = ll;
    json doc{{"kind", "multinomial-nb"}, {"alpha", alpha_}, {"priors", priors_}, {"vocabulary", vocab}};
    return doc.dump();
}

BaselineModel BaselineModel::from_json(std::string_view text) {
    const json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw StoreCorrupt("stored baseline model is not valid JSON");
    }
    try {
        BaselineModel m;
        m.alpha_ = doc.at("alpha").get<double>();
        m.priors_ = doc.at("priors").get<Scores>();
        for (std::size_t c = 0; c < kNumClasses; ++c) m.log_priors_[c] = std::log(m.priors_[c]);
        for (const auto& [word, ll] : doc.at("vocabulary").items()) {
            m.loglik_.emplace(word, ll.get<Scores>());
        }
        return m;
    } catch (const json::exception& e) {
        throw StoreCorrupt(std::string("stored baseline model is malformed: ") + e.what());
    }
}

BaselineClassifier::BaselineClassifier(BaselineModel model)
    : model_(std::move(model)),
      handle_{std::string(kName), std::string(kVersion), kMaxTokens, ClassifierMode::builtin,
              InputKind::preprocessed} {}

Scores BaselineClassifier::score(std::string_view text) {
    const Tokens tokens = tokenize(text);
    return model_.posterior(tokens);
}

}  // namespace calltide
