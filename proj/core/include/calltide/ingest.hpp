#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "calltide/date.hpp"
#include "calltide/errors.hpp"

namespace calltide {

enum class DocumentFormat { html, plain };

std::string_view to_string(DocumentFormat format) noexcept;
DocumentFormat parse_document_format(std::string_view name);

struct RawDocument {
    std::filesystem::path source_path;
    std::string ticker;
    std::string body;
    DocumentFormat format = DocumentFormat::plain;
};

struct Transcript {
    std::string id;  // "<TICKER>_<YYYY-MM-DD>"
    std::string ticker;
    Date report_date;
    std::string source_path;
    DocumentFormat format = DocumentFormat::plain;
    std::string full_text;
    std::string qa_text;  // suffix of full_text, possibly empty

    friend bool operator==(const Transcript&, const Transcript&) = default;
};

std::string transcript_id(std::string_view ticker, Date report_date);

/// `[A-Z.-]{1,8}`
bool is_valid_ticker(std::string_view ticker);

/// Visible text of an HTML document. Drops script, style, nav, head and
/// comments; block-level elements end a line; entities are decoded; runs of
/// whitespace inside a line collapse to one space and blank lines vanish.
/// Throws UnparsableDocument when nothing visible remains.
std::string strip_html(const RawDocument& doc);

/// Same line/whitespace cleanup as strip_html, without markup handling.
std::string clean_plain_text(std::string_view text);

/// First ISO `YYYY-MM-DD` or `Month D, YYYY` date in document order.
/// Throws DateNotFound.
Date extract_report_date(const RawDocument& doc);

struct QaMarkers {
    std::vector<std::string> markers{
        "question-and-answer session",
        "question and answer session",
        "q&a session",
        "q&a",
    };
};

/// Suffix of `text` from the first case-insensitive marker hit, or "".
std::string extract_qa(std::string_view text, const QaMarkers& markers = {});

/// Splits `<TICKER>_<YYYY-MM-DD>.<ext>` or `<TICKER>.<ext>`.
struct FileNameParts {
    std::string ticker;
    std::optional<Date> date;
    DocumentFormat format = DocumentFormat::plain;
};
std::optional<FileNameParts> parse_transcript_filename(const std::filesystem::path& path);

RawDocument load_raw_document(const std::filesystem::path& path);

/// Builds the Transcript for one file, or throws one of the declared errors.
Transcript ingest_file(const std::filesystem::path& path, const QaMarkers& markers = {});

struct IngestFailure {
    std::string path;
    ErrorKind kind;
    std::string message;
};

struct IngestResult {
    std::vector<Transcript> transcripts;  // sorted by id, one per id
    std::vector<IngestFailure> failures;  // sorted by path
};

/// Ingests every `.html`, `.htm` and `.txt` file directly inside `dir`.
/// Files are processed on `threads` workers (0 = hardware concurrency).
IngestResult ingest_directory(const std::filesystem::path& dir, const QaMarkers& markers = {},
                              unsigned threads = 0);

}  // namespace calltide
