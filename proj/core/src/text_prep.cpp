#include "calltide/text_prep.hpp"

#include <fstream>
#include <sstream>

#include "calltide/errors.hpp"
#include "calltide/ingest.hpp"
#include "embedded_data.hpp"
#include "utf8.hpp"

namespace calltide {

StopwordList::StopwordList(std::unordered_set<std::string> words, std::string version)
    : words_(std::move(words)), version_(std::move(version)) {
    for (const auto& w : words_) {
        if (w.empty()) throw ConfigurationError("stopword list contains an empty entry");
        for (char c : w) {
            if (c >= 'A' && c <= 'Z') {
                throw ConfigurationError("stopword '" + w + "' is not lowercase");
            }
        }
    }
}

StopwordList StopwordList::parse(std::string_view text) {
    std::unordered_set<std::string> words;
    std::string version;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            constexpr std::string_view tag = "version:";
            const auto v = line.find(tag, hash);
            if (v != std::string::npos) {
                version = clean_plain_text(line.substr(v + tag.size()));
            }
            line.erase(hash);
        }
        const std::string word = clean_plain_text(line);
        if (!word.empty()) words.insert(word);
    }
    return StopwordList(std::move(words), std::move(version));
}

StopwordList StopwordList::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigurationError("cannot read stopword file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

const StopwordList& StopwordList::english() {
    static const StopwordList list = parse(detail::english_stopwords_text());
    return list;
}

bool is_punctuation(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
               (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
    }
    return (cp >= 0x2010 && cp <= 0x2015)     // hyphens and dashes
           || (cp >= 0x2018 && cp <= 0x201F)  // curly quotes
           || cp == 0x2026                    // ellipsis
           || cp == 0x00AB || cp == 0x00BB || cp == 0x2039 || cp == 0x203A;
}

namespace {

char32_t to_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp < 0xC0) return cp;
    if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) return cp + 32;
    if (cp >= 0x100 && cp <= 0x17F) {
        // Latin Extended-A alternates upper/lower, with two offsets.
        if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E)) {
            return (cp % 2 == 1) ? cp + 1 : cp;
        }
        if (cp == 0x130 || cp == 0x131 || cp == 0x138 || cp == 0x149 || cp == 0x17F) return cp;
        if (cp == 0x178) return 0xFF;
        return (cp % 2 == 0) ? cp + 1 : cp;
    }
    if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
    return cp;
}

}  // namespace

std::string normalize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t pos = 0; pos < text.size();) {
        const char32_t cp = detail::next_code_point(text, pos);
        if (is_punctuation(cp)) {
            out.push_back(' ');
        } else {
            detail::append_utf8(out, to_lower(cp));
        }
    }
    return out;
}

Tokens tokenize(std::string_view text) {
    Tokens tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && detail::is_ascii_space(text[i])) ++i;
        const std::size_t begin = i;
        while (i < text.size() && !detail::is_ascii_space(text[i])) ++i;
        if (i > begin) tokens.emplace_back(text.substr(begin, i - begin));
    }
    return tokens;
}

Tokens remove_stopwords(const Tokens& tokens, const StopwordList& list) {
    Tokens out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
        if (!list.contains(t)) out.push_back(t);
    }
    return out;
}

Tokens preprocess(std::string_view text, const StopwordList& list) {
    Tokens tokens = remove_stopwords(tokenize(normalize(text)), list);
    for (auto& t : tokens) t = porter_stem(t);
    return tokens;
}

std::string_view to_string(TextMode mode) noexcept {
    return mode == TextMode::full ? "full" : "qa";
}

TextMode parse_text_mode(std::string_view name) {
    if (name == "full") return TextMode::full;
    if (name == "qa") return TextMode::qa;
    throw ConfigurationError("text mode must be 'full' or 'qa', got '" + std::string(name) + "'");
}

const std::string& select_text(const Transcript& t, TextMode mode) {
    return mode == TextMode::full ? t.full_text : t.qa_text;
}

std::size_t token_count(const Transcript& t, TextMode mode) {
    return tokenize(normalize(select_text(t, mode))).size();
}

std::string join_tokens(const Tokens& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

}  // namespace calltide
