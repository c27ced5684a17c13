#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "calltide/chunking.hpp"
#include "calltide/labeling.hpp"
#include "calltide/text_prep.hpp"

namespace calltide {

enum class ClassifierMode { builtin, plugin };

/// What text a classifier wants per request: the selected transcript text
/// as-is, or preprocessed tokens joined by spaces.
enum class InputKind { raw, preprocessed };

std::string_view to_string(ClassifierMode mode) noexcept;
std::string_view to_string(InputKind kind) noexcept;
InputKind parse_input_kind(std::string_view name);

struct ClassifierHandle {
    std::string name;
    std::string version;
    std::size_t max_tokens = 512;
    ClassifierMode mode = ClassifierMode::builtin;
    InputKind wants = InputKind::preprocessed;

    /// Throws ConfigurationError when max_tokens < 16 or name is empty.
    void validate() const;

    friend bool operator==(const ClassifierHandle&, const ClassifierHandle&) = default;
};

inline constexpr std::size_t kMinMaxTokens = 16;

class Classifier {
public:
    virtual ~Classifier() = default;
    virtual const ClassifierHandle& handle() const = 0;
    /// Nonnegative scores summing to 1 within 1e-6.
    virtual Scores score(std::string_view text) = 0;
};

/// Scores one chunk and labels it by argmax.
ChunkPrediction predict(Classifier& classifier, const Chunk& chunk);

struct TrainingDocument {
    Tokens tokens;
    Label label = Label::neutral;
};

/// Multinomial naive Bayes over unigrams with additive smoothing.
class BaselineModel {
public:
    BaselineModel() = default;

    double alpha() const { return alpha_; }
    const Scores& priors() const { return priors_; }
    /// Log-likelihood per class for every vocabulary word.
    const std::map<std::string, Scores, std::less<>>& log_likelihoods() const { return loglik_; }
    std::size_t vocabulary_size() const { return loglik_.size(); }

    /// Posterior over classes. Words outside the vocabulary are ignored, so
    /// an empty or all-unknown sequence returns the priors.
    Scores posterior(std::span<const std::string> tokens) const;

    std::string to_json() const;
    static BaselineModel from_json(std::string_view text);

    friend BaselineModel train_baseline(std::span<const TrainingDocument>, double);
    friend bool operator==(const BaselineModel&, const BaselineModel&) = default;

private:
    double alpha_ = 1.0;
    Scores priors_{};
    Scores log_priors_{};
    std::map<std::string, Scores, std::less<>> loglik_;
};

/// Fits priors as class frequencies and likelihoods
/// (count(w, c) + alpha) / (tokens(c) + alpha * |V|). Throws
/// ConfigurationError unless alpha > 0, InsufficientExamples unless every
/// class has a document.
BaselineModel train_baseline(std::span<const TrainingDocument> docs, double alpha = 1.0);

class BaselineClassifier final : public Classifier {
public:
    static constexpr std::string_view kName = "builtin-nb";
    static constexpr std::string_view kVersion = "1";
    static constexpr std::size_t kMaxTokens = 512;

    explicit BaselineClassifier(BaselineModel model);

    const ClassifierHandle& handle() const override { return handle_; }
    /// `text` is whitespace-separated preprocessed tokens.
    Scores score(std::string_view text) override;
    const BaselineModel& model() const { return model_; }

private:
    BaselineModel model_;
    ClassifierHandle handle_;
};

struct PluginOptions {
    std::vector<std::string> args;
    std::chrono::milliseconds hello_timeout{30'000};
    std::chrono::milliseconds request_timeout{120'000};
    /// Grace period for a clean exit after shutdown before SIGKILL.
    std::chrono::milliseconds shutdown_grace{2'000};
};

/// Parses a hello line. Throws PluginProtocolError when it is not one.
ClassifierHandle parse_hello(std::string_view line);

/// Checks a response line against the id it must answer; returns the
/// renormalized scores. Throws PluginProtocolError.
Scores parse_response(std::string_view line, std::string_view expected_id);

/// Host side of one plugin subprocess. Requests are serialized in FIFO
/// order; a failed plugin stays failed and every later call rethrows.
class PluginClassifier final : public Classifier {
public:
    /// Launches the executable and waits for its hello. Throws
    /// ConfigurationError when the path is not an executable file and
    /// PluginProtocolError (with stderr diagnostics) on a bad or missing hello.
    static std::unique_ptr<PluginClassifier> launch(const std::filesystem::path& executable,
                                                    PluginOptions options = {});

    ~PluginClassifier() override;
    PluginClassifier(const PluginClassifier&) = delete;
    PluginClassifier& operator=(const PluginClassifier&) = delete;

    const ClassifierHandle& handle() const override { return handle_; }
    /// Throws PluginCrashed, PluginProtocolError or PluginTimeout.
    Scores score(std::string_view text) override;

    /// Sends shutdown and reaps the process. Idempotent.
    void shutdown();

    /// Standard error captured so far (tail only).
    std::string diagnostics() const;

    struct Process;

private:
    PluginClassifier(std::unique_ptr<Process> process, PluginOptions options);

    std::unique_ptr<Process> process_;
    PluginOptions options_;
    ClassifierHandle handle_;
    std::size_t next_id_ = 0;
    mutable std::mutex mutex_;
};

}  // namespace calltide
