#include "calltide/ingest.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include "utf8.hpp"

namespace calltide {

namespace fs = std::filesystem;
using detail::ascii_lower;
using detail::is_ascii_space;

std::string_view to_string(DocumentFormat format) noexcept {
    return format == DocumentFormat::html ? "html" : "plain";
}

DocumentFormat parse_document_format(std::string_view name) {
    if (name == "html") return DocumentFormat::html;
    if (name == "plain") return DocumentFormat::plain;
    throw ConfigurationError("unknown document format '" + std::string(name) + "'");
}

std::string transcript_id(std::string_view ticker, Date report_date) {
    return std::string(ticker) + "_" + report_date.iso();
}

bool is_valid_ticker(std::string_view ticker) {
    if (ticker.empty() || ticker.size() > 8) return false;
    return std::all_of(ticker.begin(), ticker.end(),
                       [](char c) { return (c >= 'A' && c <= 'Z') || c == '.' || c == '-'; });
}

namespace {

// Elements whose whole subtree is invisible.
constexpr std::array kDroppedElements{
    std::string_view{"script"}, std::string_view{"style"},    std::string_view{"nav"},
    std::string_view{"head"},   std::string_view{"title"},    std::string_view{"noscript"},
    std::string_view{"template"}, std::string_view{"svg"},    std::string_view{"iframe"},
};

// Elements whose content is raw text: no nested markup is recognized.
constexpr std::array kRawTextElements{
    std::string_view{"script"}, std::string_view{"style"}, std::string_view{"title"},
    std::string_view{"noscript"}, std::string_view{"template"},
};

constexpr std::array kBlockElements{
    std::string_view{"address"}, std::string_view{"article"},  std::string_view{"aside"},
    std::string_view{"blockquote"}, std::string_view{"body"},  std::string_view{"br"},
    std::string_view{"dd"},       std::string_view{"div"},     std::string_view{"dl"},
    std::string_view{"dt"},       std::string_view{"figcaption"}, std::string_view{"figure"},
    std::string_view{"footer"},   std::string_view{"form"},    std::string_view{"h1"},
    std::string_view{"h2"},       std::string_view{"h3"},      std::string_view{"h4"},
    std::string_view{"h5"},       std::string_view{"h6"},      std::string_view{"header"},
    std::string_view{"hr"},       std::string_view{"html"},    std::string_view{"li"},
    std::string_view{"main"},     std::string_view{"ol"},      std::string_view{"p"},
    std::string_view{"pre"},      std::string_view{"section"}, std::string_view{"table"},
    std::string_view{"tbody"},    std::string_view{"thead"},   std::string_view{"tfoot"},
    std::string_view{"tr"},       std::string_view{"ul"},
};

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& set, std::string_view name) {
    return std::find(set.begin(), set.end(), name) != set.end();
}

const std::map<std::string_view, char32_t>& named_entities() {
    static const std::map<std::string_view, char32_t> table{
        {"amp", U'&'},      {"lt", U'<'},       {"gt", U'>'},       {"quot", U'"'},
        {"apos", U'\''},    {"nbsp", 0x00A0},   {"mdash", 0x2014},  {"ndash", 0x2013},
        {"hellip", 0x2026}, {"lsquo", 0x2018},  {"rsquo", 0x2019},  {"ldquo", 0x201C},
        {"rdquo", 0x201D},  {"sbquo", 0x201A},  {"bdquo", 0x201E},  {"copy", 0x00A9},
        {"reg", 0x00AE},    {"trade", 0x2122},  {"cent", 0x00A2},   {"pound", 0x00A3},
        {"euro", 0x20AC},   {"yen", 0x00A5},    {"sect", 0x00A7},   {"deg", 0x00B0},
        {"plusmn", 0x00B1}, {"times", 0x00D7},  {"divide", 0x00F7}, {"middot", 0x00B7},
        {"bull", 0x2022},   {"laquo", 0x00AB},  {"raquo", 0x00BB},  {"para", 0x00B6},
        {"frac12", 0x00BD}, {"frac14", 0x00BC}, {"frac34", 0x00BE}, {"shy", 0x00AD},
    };
    return table;
}

bool starts_with_icase(std::string_view s, std::size_t pos, std::string_view prefix) {
    if (pos + prefix.size() > s.size()) return false;
    for (std::size_t k = 0; k < prefix.size(); ++k) {
        if (ascii_lower(s[pos + k]) != prefix[k]) return false;
    }
    return true;
}

std::size_t find_icase(std::string_view s, std::size_t from, std::string_view needle) {
    for (std::size_t pos = from; pos + needle.size() <= s.size(); ++pos) {
        if (starts_with_icase(s, pos, needle)) return pos;
    }
    return std::string_view::npos;
}

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

/// Decodes the entity at `pos` (which holds '&'). On success appends the
/// decoded text, advances `pos` and returns true.
bool decode_entity(std::string_view s, std::size_t& pos, std::string& out) {
    const std::size_t semi = s.find(';', pos + 1);
    if (semi == std::string_view::npos || semi - pos > 12) return false;
    const std::string_view name = s.substr(pos + 1, semi - pos - 1);
    if (name.empty()) return false;
    char32_t cp = 0;
    if (name[0] == '#') {
        const bool hex = name.size() > 1 && (name[1] == 'x' || name[1] == 'X');
        const std::string_view digits = name.substr(hex ? 2 : 1);
        if (digits.empty()) return false;
        for (char c : digits) {
            int v;
            if (is_digit(c)) v = c - '0';
            else if (hex && c >= 'a' && c <= 'f') v = c - 'a' + 10;
            else if (hex && c >= 'A' && c <= 'F') v = c - 'A' + 10;
            else return false;
            cp = cp * (hex ? 16 : 10) + static_cast<char32_t>(v);
            if (cp > 0x10FFFF) return false;
        }
        if (cp == 0 || (cp >= 0xD800 && cp <= 0xDFFF)) cp = 0xFFFD;
    } else {
        const auto& table = named_entities();
        const auto it = table.find(name);
        if (it == table.end()) return false;
        cp = it->second;
    }
    if (cp != 0x00AD) detail::append_utf8(out, cp);
    pos = semi + 1;
    return true;
}

/// Skips a tag starting at `pos` ('<'). Returns the position after '>'.
std::size_t skip_tag(std::string_view s, std::size_t pos) {
    char quote = 0;
    for (std::size_t i = pos + 1; i < s.size(); ++i) {
        const char c = s[i];
        if (quote) {
            if (c == quote) quote = 0;
        } else if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '>') {
            return i + 1;
        }
    }
    return s.size();
}

bool is_nbsp_at(std::string_view s, std::size_t i) {
    return i + 1 < s.size() && static_cast<unsigned char>(s[i]) == 0xC2 &&
           static_cast<unsigned char>(s[i + 1]) == 0xA0;
}

}  // namespace

std::string clean_plain_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::string line;
    bool pending_space = false;
    auto flush = [&] {
        if (!line.empty()) {
            if (!out.empty()) out.push_back('\n');
            out += line;
        }
        line.clear();
        pending_space = false;
    };
    for (std::size_t i = 0; i < text.size();) {
        const char c = text[i];
        if (c == '\n') {
            flush();
            ++i;
        } else if (is_ascii_space(c) || is_nbsp_at(text, i)) {
            pending_space = !line.empty();
            i += is_nbsp_at(text, i) ? 2 : 1;
        } else {
            if (pending_space) line.push_back(' ');
            pending_space = false;
            line.push_back(c);
            ++i;
        }
    }
    flush();
    return out;
}

std::string strip_html(const RawDocument& doc) {
    if (doc.format != DocumentFormat::html) {
        throw ConfigurationError("strip_html called on a plain document: " +
                                 doc.source_path.string());
    }
    const std::string_view s = doc.body;
    std::string text;
    text.reserve(s.size() / 2);

    std::string skip_name;  // element currently being dropped
    int skip_depth = 0;

    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (c == '<') {
            if (s.compare(i, 4, "<!--") == 0) {
                const std::size_t end = s.find("-->", i + 4);
                i = end == std::string_view::npos ? s.size() : end + 3;
                continue;
            }
            if (i + 1 < s.size() && (s[i + 1] == '!' || s[i + 1] == '?')) {
                i = skip_tag(s, i);
                continue;
            }
            const bool closing = i + 1 < s.size() && s[i + 1] == '/';
            std::size_t name_begin = i + (closing ? 2 : 1);
            if (name_begin >= s.size() || !is_alpha(s[name_begin])) {
                if (skip_depth == 0) text.push_back(c);
                ++i;
                continue;
            }
            std::size_t name_end = name_begin;
            while (name_end < s.size() && (is_alpha(s[name_end]) || is_digit(s[name_end]))) {
                ++name_end;
            }
            std::string name;
            for (std::size_t k = name_begin; k < name_end; ++k) name.push_back(ascii_lower(s[k]));
            const std::size_t after = skip_tag(s, i);
            const bool self_closing = after >= 2 && s[after - 2] == '/';

            if (skip_depth > 0) {
                if (name == skip_name) {
                    if (closing) --skip_depth;
                    else if (!self_closing) ++skip_depth;
                }
                i = after;
                continue;
            }
            if (!closing && contains(kDroppedElements, name)) {
                i = after;
                if (self_closing) continue;
                if (contains(kRawTextElements, name)) {
                    const std::size_t end = find_icase(s, i, "</" + name);
                    i = end == std::string_view::npos ? s.size() : skip_tag(s, end);
                } else {
                    skip_name = name;
                    skip_depth = 1;
                }
                text.push_back('\n');
                continue;
            }
            if (contains(kBlockElements, name)) {
                text.push_back('\n');
            } else if (name == "td" || name == "th") {
                text.push_back(' ');
            }
            i = after;
            continue;
        }
        if (skip_depth > 0) {
            ++i;
            continue;
        }
        if (c == '&' && decode_entity(s, i, text)) continue;
        // Source line breaks are ordinary whitespace; only markup ends a line.
        text.push_back(c == '\n' || c == '\r' || c == '\t' ? ' ' : c);
        ++i;
    }

    std::string cleaned = clean_plain_text(text);
    if (cleaned.empty()) {
        throw UnparsableDocument("no visible text in " + doc.source_path.string());
    }
    return cleaned;
}

Date extract_report_date(const RawDocument& doc) {
    static const std::regex pattern(
        R"((\d{4})-(\d{2})-(\d{2}))"
        R"(|\b(January|February|March|April|May|June|July|August|September|October|November|December)"
        R"(|Jan|Feb|Mar|Apr|Jun|Jul|Aug|Sep|Sept|Oct|Nov|Dec)\.?\s+(\d{1,2}),\s*(\d{4}))",
        std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
    static const std::array<std::string_view, 12> months{"jan", "feb", "mar", "apr", "may", "jun",
                                                         "jul", "aug", "sep", "oct", "nov", "dec"};

    const std::string& body = doc.body;
    for (auto it = std::sregex_iterator(body.begin(), body.end(), pattern);
         it != std::sregex_iterator(); ++it) {
        const std::smatch& m = *it;
        std::optional<Date> date;
        if (m[1].matched) {
            const auto pos = static_cast<std::size_t>(m.position(0));
            const std::size_t end = pos + static_cast<std::size_t>(m.length(0));
            const bool bounded = (pos == 0 || !is_digit(body[pos - 1])) &&
                                 (end >= body.size() || !is_digit(body[end]));
            if (bounded) date = Date::parse_iso(m.str(0));
        } else {
            std::string month = m.str(4).substr(0, 3);
            for (char& ch : month) ch = ascii_lower(ch);
            const auto mi = std::find(months.begin(), months.end(), month) - months.begin();
            date = Date::from_ymd(std::stoi(m.str(6)), static_cast<unsigned>(mi + 1),
                                  static_cast<unsigned>(std::stoi(m.str(5))));
        }
        if (date) return *date;
    }
    throw DateNotFound("no recognizable date in " + doc.source_path.string());
}

std::string extract_qa(std::string_view text, const QaMarkers& markers) {
    std::size_t best = std::string_view::npos;
    for (const std::string& marker : markers.markers) {
        if (marker.empty()) continue;
        std::string needle;
        for (char c : marker) needle.push_back(ascii_lower(c));
        const std::size_t pos = find_icase(text, 0, needle);
        if (pos < best) best = pos;
    }
    if (best == std::string_view::npos) return {};
    return std::string(text.substr(best));
}

std::optional<FileNameParts> parse_transcript_filename(const fs::path& path) {
    std::string ext = path.extension().string();
    for (char& c : ext) c = ascii_lower(c);
    FileNameParts parts;
    if (ext == ".html" || ext == ".htm") parts.format = DocumentFormat::html;
    else if (ext == ".txt") parts.format = DocumentFormat::plain;
    else return std::nullopt;

    const std::string stem = path.stem().string();
    const std::size_t underscore = stem.rfind('_');
    if (underscore != std::string::npos) {
        parts.ticker = stem.substr(0, underscore);
        parts.date = Date::parse_iso(std::string_view(stem).substr(underscore + 1));
        if (!parts.date) return std::nullopt;
    } else {
        parts.ticker = stem;
    }
    if (!is_valid_ticker(parts.ticker)) return std::nullopt;
    return parts;
}

RawDocument load_raw_document(const fs::path& path) {
    const auto parts = parse_transcript_filename(path);
    if (!parts) {
        throw UnparsableDocument("file name does not match <TICKER>[_<YYYY-MM-DD>].<html|txt>: " +
                                 path.string());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    RawDocument doc{path, parts->ticker, std::move(buf).str(), parts->format};
    if (doc.body.empty()) throw UnparsableDocument("empty document " + path.string());
    return doc;
}

Transcript ingest_file(const fs::path& path, const QaMarkers& markers) {
    const RawDocument doc = load_raw_document(path);
    const auto parts = parse_transcript_filename(path);
    Transcript t;
    t.ticker = doc.ticker;
    t.report_date = parts->date ? *parts->date : extract_report_date(doc);
    t.id = transcript_id(t.ticker, t.report_date);
    t.source_path = path.string();
    t.format = doc.format;
    t.full_text = doc.format == DocumentFormat::html ? strip_html(doc) : clean_plain_text(doc.body);
    if (t.full_text.empty()) throw UnparsableDocument("no text in " + path.string());
    t.qa_text = extract_qa(t.full_text, markers);
    return t;
}

IngestResult ingest_directory(const fs::path& dir, const QaMarkers& markers, unsigned threads) {
    if (!fs::is_directory(dir)) {
        throw ConfigurationError("transcripts directory does not exist: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        for (char& c : ext) c = ascii_lower(c);
        if (ext == ".html" || ext == ".htm" || ext == ".txt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    struct Outcome {
        std::optional<Transcript> transcript;
        std::optional<IngestFailure> failure;
    };
    std::vector<Outcome> outcomes(files.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < files.size(); k = next++) {
            try {
                outcomes[k].transcript = ingest_file(files[k], markers);
            } catch (const Error& e) {
                outcomes[k].failure = IngestFailure{files[k].string(), e.kind(), e.what()};
            }
        }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, files.size())));
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < threads; ++w) pool.emplace_back(worker);
        worker();
    }

    // Later files (in path order) win when two map to the same id.
    std::map<std::string, Transcript> by_id;
    IngestResult result;
    for (auto& o : outcomes) {
        if (o.transcript) by_id.insert_or_assign(o.transcript->id, std::move(*o.transcript));
        if (o.failure) result.failures.push_back(std::move(*o.failure));
    }
    for (auto& [id, t] : by_id) result.transcripts.push_back(std::move(t));
    return result;
}

}  // namespace calltide
