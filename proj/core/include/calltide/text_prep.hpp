#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace calltide {

struct Transcript;

using Tokens = std::vector<std::string>;

struct TokenSequence {
    std::string source_id;
    Tokens tokens;
};

class StopwordList {
public:
    StopwordList() = default;
    StopwordList(std::unordered_set<std::string> words, std::string version);

    /// One lowercase word per line; `#` starts a comment; a
    /// `# version: <tag>` comment names the list version.
    static StopwordList parse(std::string_view text);
    static StopwordList load(const std::filesystem::path& path);

    /// The bundled 179-word English list.
    static const StopwordList& english();

    bool contains(std::string_view word) const { return words_.contains(std::string(word)); }
    std::size_t size() const { return words_.size(); }
    const std::string& version() const { return version_; }
    const std::unordered_set<std::string>& words() const { return words_; }

private:
    std::unordered_set<std::string> words_;
    std::string version_;
};

/// Punctuation class used by normalize(): ASCII punctuation plus typographic
/// quotes, dashes and the ellipsis.
bool is_punctuation(char32_t cp);

/// Lowercases and replaces every punctuation character by one space.
std::string normalize(std::string_view text);

/// Splits on whitespace runs.
Tokens tokenize(std::string_view text);

Tokens remove_stopwords(const Tokens& tokens, const StopwordList& list);

/// Original Porter stemmer. Tokens that are not purely lowercase ASCII
/// letters come back unchanged, as do words of length <= 2.
std::string porter_stem(std::string_view word);

/// normalize -> tokenize -> remove_stopwords -> porter_stem.
Tokens preprocess(std::string_view text, const StopwordList& list = StopwordList::english());

enum class TextMode { full, qa };

std::string_view to_string(TextMode mode) noexcept;
TextMode parse_text_mode(std::string_view name);

const std::string& select_text(const Transcript& t, TextMode mode);

/// Word tokens of the selected field before stopword removal.
std::size_t token_count(const Transcript& t, TextMode mode);

std::string join_tokens(const Tokens& tokens);

}  // namespace calltide
