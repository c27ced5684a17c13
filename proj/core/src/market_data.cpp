#include "calltide/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "calltide/errors.hpp"
#include "calltide/ingest.hpp"

namespace calltide {

namespace fs = std::filesystem;
using json = nlohmann::json;

const DailyQuote& nearest_trading_day(const QuoteSeries& series, Date target, int max_distance) {
    auto after = std::lower_bound(series.begin(), series.end(), target,
                                  [](const DailyQuote& q, Date d) { return q.date < d; });
    const DailyQuote* best = nullptr;
    int best_distance = max_distance + 1;
    if (after != series.begin()) {
        const DailyQuote& before = *std::prev(after);
        best_distance = target.days_since(before.date);
        best = &before;
    }
    if (after != series.end()) {
        const int d = after->date.days_since(target);
        if (d < best_distance) {  // strict: equal distance keeps the earlier day
            best_distance = d;
            best = &*after;
        }
    }
    if (best == nullptr || best_distance > max_distance) {
        throw NoQuoteNearby("no quote within " + std::to_string(max_distance) + " days of " +
                                target.iso(),
                            0);
    }
    return *best;
}

DateRange window_fetch_range(Date report_date) {
    return {report_date.plus_days(-100), report_date.plus_days(100)};
}

PriceWindow build_price_window(const Transcript& transcript, const QuoteSeries& share_series,
                               const QuoteSeries& bench_series) {
    PriceWindow window;
    window.transcript_id = transcript.id;
    for (WindowOffset o : kWindowOffsets) {
        const int offset = offset_days(o);
        const Date target = transcript.report_date.plus_days(offset);
        const std::string tag = (offset > 0 ? "+" : "") + std::to_string(offset);
        try {
            const DailyQuote& share = nearest_trading_day(share_series, target);
            const DailyQuote& bench = nearest_trading_day(bench_series, share.date);
            window.at(o) = PricePoint{share.date, share.close, bench.close};
        } catch (const NoQuoteNearby& e) {
            throw NoQuoteNearby(transcript.id + " offset=" + tag + ": " + e.what(), offset);
        }
    }
    for (std::size_t k = 1; k < window.points.size(); ++k) {
        if (!(window.points[k - 1].date < window.points[k].date)) {
            throw NoQuoteNearby(transcript.id + ": resolved dates are not strictly increasing",
                                offset_days(kWindowOffsets[k]));
        }
    }
    return window;
}

namespace {

std::optional<double> parse_price(const json& field) {
    if (field.is_number()) return field.get<double>();
    if (!field.is_string()) return std::nullopt;
    const auto& s = field.get_ref<const std::string&>();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace

QuoteSeries parse_daily_payload(std::string_view ticker, std::string_view payload) {
    const json doc = json::parse(payload, nullptr, false);
    const std::string who(ticker);
    if (doc.is_discarded() || !doc.is_object()) {
        throw SourceUnavailable("unreadable quote payload for " + who);
    }
    if (doc.contains("Error Message")) {
        throw UnknownTicker(who + ": " + doc["Error Message"].dump());
    }
    for (const char* key : {"Note", "Information"}) {
        if (doc.contains(key)) {
            throw RateLimited(who + ": " + doc[key].dump(), std::chrono::seconds(60));
        }
    }
    const auto series = doc.find("Time Series (Daily)");
    if (series == doc.end() || !series->is_object()) {
        throw SourceUnavailable("quote payload for " + who + " has no daily series");
    }
    QuoteSeries quotes;
    quotes.reserve(series->size());
    for (const auto& [day, fields] : series->items()) {
        const auto date = Date::parse_iso(day);
        if (!date || !fields.is_object()) continue;
        std::optional<double> close;
        if (fields.contains("4. close")) close = parse_price(fields["4. close"]);
        else if (fields.contains("5. adjusted close")) close = parse_price(fields["5. adjusted close"]);
        if (!close || !(*close > 0.0)) continue;
        quotes.push_back(DailyQuote{who, *date, *close});
    }
    std::sort(quotes.begin(), quotes.end(),
              [](const DailyQuote& a, const DailyQuote& b) { return a.date < b.date; });
    return quotes;
}

RateLimiter::RateLimiter(int requests_per_minute, Now now, Sleep sleep)
    : per_minute_(requests_per_minute),
      now_(now ? std::move(now) : Now([] { return Clock::now(); })),
      sleep_(sleep ? std::move(sleep) : Sleep([](Clock::duration d) { std::this_thread::sleep_for(d); })) {
    if (per_minute_ < 1) throw ConfigurationError("rate limit must allow at least 1 request/minute");
}

void RateLimiter::acquire() {
    std::unique_lock lock(mutex_);
    for (;;) {
        const auto t = now_();
        std::erase_if(recent_, [&](Clock::time_point p) { return t - p >= std::chrono::minutes(1); });
        if (static_cast<int>(recent_.size()) < per_minute_) {
            recent_.push_back(t);
            return;
        }
        const auto wait = *std::min_element(recent_.begin(), recent_.end()) +
                          std::chrono::minutes(1) - t;
        lock.unlock();
        sleep_(wait);
        lock.lock();
    }
}

fs::path QuoteCache::path_for(std::string_view ticker) const {
    return dir_ / (std::string(ticker) + ".json");
}

std::optional<std::string> QuoteCache::read(std::string_view ticker) const {
    std::ifstream in(path_for(ticker), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

void QuoteCache::write(std::string_view ticker, std::string_view payload) const {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    const fs::path target = path_for(ticker);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write quote cache " + tmp.string());
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

MarketDataConfig MarketDataConfig::from_environment(fs::path cache_dir) {
    MarketDataConfig config;
    config.cache_dir = std::move(cache_dir);
    if (const char* url = std::getenv("CALLTIDE_MD_URL")) config.base_url = url;
    if (const char* key = std::getenv("CALLTIDE_MD_KEY")) config.api_key = key;
    return config;
}

MarketDataClient::MarketDataClient(MarketDataConfig config)
    : config_(std::move(config)),
      cache_(config_.cache_dir),
      limiter_(config_.requests_per_minute) {}

std::string MarketDataClient::fetch_payload(std::string_view ticker) {
    if (auto cached = cache_.read(ticker)) return std::move(*cached);
    std::string payload = download(ticker);
    parse_daily_payload(ticker, payload);  // never cache an error payload
    cache_.write(ticker, payload);
    return payload;
}

QuoteSeries MarketDataClient::fetch_daily_series(std::string_view ticker, DateRange range) {
    if (range.empty()) return {};
    QuoteSeries all = parse_daily_payload(ticker, fetch_payload(ticker));
    QuoteSeries out;
    for (auto& q : all) {
        if (range.contains(q.date)) out.push_back(std::move(q));
    }
    return out;
}

std::string MarketDataClient::download(std::string_view ticker) {
    const std::string who(ticker);
    if (config_.base_url.empty()) {
        throw SourceUnavailable("no cached quotes for " + who + " and CALLTIDE_MD_URL is not set");
    }
    const std::string& url = config_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigurationError("CALLTIDE_MD_URL must include a scheme: " + url);
    }
    const auto path_begin = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_begin);
    std::string path = path_begin == std::string::npos ? "/query" : url.substr(path_begin);

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (url.rfind("https://", 0) == 0) {
        throw SourceUnavailable("https market data source requires a TLS-enabled build");
    }
#endif

    httplib::Client client(origin);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    const httplib::Params params{
        {"function", "TIME_SERIES_DAILY_ADJUSTED"},
        {"symbol", who},
        {"outputsize", "full"},
        {"datatype", "json"},
        {"apikey", config_.api_key},
    };
    limiter_.acquire();
    const auto res = client.Get(path, params, httplib::Headers{});
    if (!res) {
        throw SourceUnavailable("request for " + who + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status == 429) {
        long retry = 60;
        if (res->has_header("Retry-After")) retry = std::strtol(res->get_header_value("Retry-After").c_str(), nullptr, 10);
        throw RateLimited("rate limited fetching " + who, std::chrono::seconds(retry));
    }
    if (res->status == 404) throw UnknownTicker("upstream has no series for " + who);
    if (res->status != 200) {
        throw SourceUnavailable("request for " + who + " returned HTTP " + std::to_string(res->status));
    }
    return res->body;
}

}  // namespace calltide
