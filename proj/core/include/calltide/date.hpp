#pragma once

#include <chrono>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace calltide {

/// A proleptic Gregorian calendar date (UTC, no time of day).
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}

    /// Returns nullopt unless (year, month, day) names a real calendar date.
    static std::optional<Date> from_ymd(int year, unsigned month, unsigned day);

    /// Strict `YYYY-MM-DD`.
    static std::optional<Date> parse_iso(std::string_view text);

    std::string iso() const;

    int year() const;
    unsigned month() const;
    unsigned day() const;

    constexpr std::chrono::sys_days sys_days() const { return days_; }

    Date plus_days(int n) const { return Date(days_ + std::chrono::days(n)); }

    /// Signed number of days from `other` to this date.
    int days_since(Date other) const {
        return static_cast<int>((days_ - other.days_).count());
    }

    friend constexpr auto operator<=>(const Date&, const Date&) = default;

private:
    std::chrono::sys_days days_{};
};

}  // namespace calltide
