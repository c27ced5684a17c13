#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "calltide/date.hpp"

namespace calltide {

struct Transcript;

struct DailyQuote {
    std::string ticker;
    Date date;
    double close = 0.0;

    friend bool operator==(const DailyQuote&, const DailyQuote&) = default;
};

using QuoteSeries = std::vector<DailyQuote>;  // ascending by date

/// Inclusive calendar range; empty when `from > to`.
struct DateRange {
    Date from;
    Date to;

    bool empty() const { return to < from; }
    bool contains(Date d) const { return !(d < from) && !(to < d); }
};

enum class WindowOffset { m90 = 0, m2 = 1, p2 = 2, p90 = 3 };

inline constexpr std::array<WindowOffset, 4> kWindowOffsets{
    WindowOffset::m90, WindowOffset::m2, WindowOffset::p2, WindowOffset::p90};

/// Signed calendar-day offset from the report date.
constexpr int offset_days(WindowOffset o) {
    constexpr std::array<int, 4> days{-90, -2, 2, 90};
    return days[static_cast<std::size_t>(o)];
}

struct PricePoint {
    Date date;            // resolved trading day
    double share = 0.0;   // share close on `date`
    double bench = 0.0;   // benchmark close on `date`

    friend bool operator==(const PricePoint&, const PricePoint&) = default;
};

struct PriceWindow {
    std::string transcript_id;
    std::array<PricePoint, 4> points;

    const PricePoint& at(WindowOffset o) const { return points[static_cast<std::size_t>(o)]; }
    PricePoint& at(WindowOffset o) { return points[static_cast<std::size_t>(o)]; }

    double sp_m2() const { return at(WindowOffset::m2).share; }
    double sp_p2() const { return at(WindowOffset::p2).share; }

    friend bool operator==(const PriceWindow&, const PriceWindow&) = default;
};

inline constexpr int kNearestSearchDays = 7;

/// Quote whose date is closest to `target`; ties go to the earlier date.
/// Throws NoQuoteNearby when nothing lies within `max_distance` days.
const DailyQuote& nearest_trading_day(const QuoteSeries& series, Date target,
                                      int max_distance = kNearestSearchDays);

/// Resolves each offset independently on the share series and reads the
/// benchmark on the resolved date. Throws NoQuoteNearby tagged with the
/// failing offset.
PriceWindow build_price_window(const Transcript& transcript, const QuoteSeries& share_series,
                               const QuoteSeries& bench_series);

/// Calendar span a window build needs around `report_date`.
DateRange window_fetch_range(Date report_date);

/// Parses a daily time-series payload ("Time Series (Daily)" object keyed by
/// ISO date, close under "4. close"). Upstream error payloads map to
/// UnknownTicker or RateLimited; anything else unreadable is SourceUnavailable.
QuoteSeries parse_daily_payload(std::string_view ticker, std::string_view payload);

/// Sliding one-minute window limiter shared by all fetches of a process.
class RateLimiter {
public:
    using Clock = std::chrono::steady_clock;
    using Now = std::function<Clock::time_point()>;
    using Sleep = std::function<void(Clock::duration)>;

    explicit RateLimiter(int requests_per_minute, Now now = nullptr, Sleep sleep = nullptr);

    /// Blocks until a request slot is free, then claims it.
    void acquire();

private:
    int per_minute_;
    Now now_;
    Sleep sleep_;
    std::mutex mutex_;
    std::vector<Clock::time_point> recent_;
};

/// One verbatim upstream payload per ticker under `<dir>/<TICKER>.json`.
class QuoteCache {
public:
    explicit QuoteCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::filesystem::path path_for(std::string_view ticker) const;
    std::optional<std::string> read(std::string_view ticker) const;
    /// Writes through a temporary file and renames into place.
    void write(std::string_view ticker, std::string_view payload) const;

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

struct MarketDataConfig {
    std::string base_url;  // full endpoint, e.g. https://host/query
    std::string api_key;
    std::filesystem::path cache_dir = "cache/quotes";
    int requests_per_minute = 5;
    std::chrono::seconds timeout{30};

    /// Reads CALLTIDE_MD_URL and CALLTIDE_MD_KEY.
    static MarketDataConfig from_environment(std::filesystem::path cache_dir);
};

class MarketDataClient {
public:
    explicit MarketDataClient(MarketDataConfig config);

    /// Quotes in `range`, ascending. Served from the cache when present;
    /// otherwise fetched, validated and cached.
    QuoteSeries fetch_daily_series(std::string_view ticker, DateRange range);

    /// The raw payload for `ticker` (cache first).
    std::string fetch_payload(std::string_view ticker);

    const QuoteCache& cache() const { return cache_; }

private:
    std::string download(std::string_view ticker);

    MarketDataConfig config_;
    QuoteCache cache_;
    RateLimiter limiter_;
};

}  // namespace calltide
