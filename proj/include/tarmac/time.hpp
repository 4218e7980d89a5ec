#pragma once

// UTC time handling. Every timestamp is normalized to UTC at parse time; local
// (zone-less) inputs need an explicit fixed-offset airport zone.

#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "tarmac/error.hpp"

namespace tarmac {

using Millis = std::chrono::milliseconds;
using TimePoint = std::chrono::sys_time<Millis>;
using Date = std::chrono::sys_days;

/// Fixed UTC offset. IANA zone names are not supported by the toolchain's
/// standard library, so DST-aware zones must be given as their offset.
class TimeZone {
 public:
  TimeZone() = default;
  explicit TimeZone(std::chrono::minutes offset) : offset_(offset) {}

  static TimeZone utc() { return TimeZone{}; }

  /// Accepts "UTC", "Z", "+HH:MM", "-HHMM", "UTC-07:00".
  static TimeZone parse(std::string_view text);

  std::chrono::minutes offset() const { return offset_; }
  std::string name() const;

  bool operator==(const TimeZone&) const = default;

 private:
  std::chrono::minutes offset_{0};
};

namespace detail {

inline int parse_fixed_int(std::string_view text, std::size_t pos, std::size_t width,
                           std::string_view what) {
  if (pos + width > text.size()) throw ParseError("truncated " + std::string(what));
  int value = 0;
  for (std::size_t i = pos; i < pos + width; ++i) {
    const char c = text[i];
    if (c < '0' || c > '9') throw ParseError("non-digit in " + std::string(what));
    value = value * 10 + (c - '0');
  }
  return value;
}

inline std::chrono::minutes parse_offset(std::string_view text, std::string_view whole) {
  // text starts at the sign
  const int sign = text[0] == '-' ? -1 : 1;
  const std::string_view body = text.substr(1);
  int hours = 0;
  int minutes = 0;
  if (body.size() == 2) {
    hours = parse_fixed_int(body, 0, 2, "utc offset");
  } else if (body.size() == 4) {
    hours = parse_fixed_int(body, 0, 2, "utc offset");
    minutes = parse_fixed_int(body, 2, 2, "utc offset");
  } else if (body.size() == 5 && body[2] == ':') {
    hours = parse_fixed_int(body, 0, 2, "utc offset");
    minutes = parse_fixed_int(body, 3, 2, "utc offset");
  } else {
    throw ParseError("bad utc offset in '" + std::string(whole) + "'");
  }
  if (hours > 18 || minutes > 59) throw ParseError("utc offset out of range in '" + std::string(whole) + "'");
  return std::chrono::minutes{sign * (hours * 60 + minutes)};
}

inline void append_padded(std::string& out, long value, int width) {
  char buf[16];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  (void)ec;
  for (int pad = width - static_cast<int>(ptr - buf); pad > 0; --pad) out.push_back('0');
  out.append(buf, ptr);
}

}  // namespace detail

inline TimeZone TimeZone::parse(std::string_view text) {
  if (text == "UTC" || text == "Z" || text == "utc" || text.empty()) return TimeZone{};
  std::string_view rest = text;
  if (rest.substr(0, 3) == "UTC") rest.remove_prefix(3);
  if (rest.empty() || (rest[0] != '+' && rest[0] != '-')) {
    throw ConfigError("unsupported time zone '" + std::string(text) +
                      "': use UTC or a fixed offset such as -07:00");
  }
  try {
    return TimeZone{detail::parse_offset(rest, text)};
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

inline std::string TimeZone::name() const {
  if (offset_.count() == 0) return "UTC";
  std::string out;
  const long total = offset_.count();
  out.push_back(total < 0 ? '-' : '+');
  const long abs = total < 0 ? -total : total;
  detail::append_padded(out, abs / 60, 2);
  out.push_back(':');
  detail::append_padded(out, abs % 60, 2);
  return out;
}

inline Date parse_date(std::string_view text) {
  using namespace std::chrono;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw ParseError("bad date '" + std::string(text) + "'");
  }
  const year_month_day ymd{year{detail::parse_fixed_int(text, 0, 4, "year")},
                           month{static_cast<unsigned>(detail::parse_fixed_int(text, 5, 2, "month"))},
                           day{static_cast<unsigned>(detail::parse_fixed_int(text, 8, 2, "day"))}};
  if (!ymd.ok()) throw ParseError("invalid calendar date '" + std::string(text) + "'");
  return sys_days{ymd};
}

inline std::string format_date(Date d) {
  using namespace std::chrono;
  const year_month_day ymd{d};
  std::string out;
  detail::append_padded(out, static_cast<int>(ymd.year()), 4);
  out.push_back('-');
  detail::append_padded(out, static_cast<unsigned>(ymd.month()), 2);
  out.push_back('-');
  detail::append_padded(out, static_cast<unsigned>(ymd.day()), 2);
  return out;
}

/// Parses "YYYY-MM-DD[T ]HH:MM[:SS[.fff]][Z|+HH:MM]". Fractions beyond
/// milliseconds are truncated. A timestamp without zone designator is read in
/// `local_zone`; if that is absent the value is rejected.
inline TimePoint parse_timestamp(std::string_view text, const std::optional<TimeZone>& local_zone = std::nullopt) {
  using namespace std::chrono;
  if (text.size() < 16) throw ParseError("bad timestamp '" + std::string(text) + "'");
  const Date date = parse_date(text.substr(0, 10));
  if (text[10] != 'T' && text[10] != ' ') throw ParseError("bad timestamp '" + std::string(text) + "'");
  if (text[13] != ':') throw ParseError("bad timestamp '" + std::string(text) + "'");
  const int hh = detail::parse_fixed_int(text, 11, 2, "hour");
  const int mm = detail::parse_fixed_int(text, 14, 2, "minute");
  int ss = 0;
  long ms = 0;
  std::size_t pos = 16;
  if (pos < text.size() && text[pos] == ':') {
    ss = detail::parse_fixed_int(text, pos + 1, 2, "second");
    pos += 3;
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      int digits = 0;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
        if (digits < 3) ms = ms * 10 + (text[pos] - '0');
        ++digits;
        ++pos;
      }
      if (digits == 0) throw ParseError("empty fraction in '" + std::string(text) + "'");
      for (int d = digits; d < 3; ++d) ms *= 10;
    }
  }
  if (hh > 23 || mm > 59 || ss > 59) throw ParseError("time of day out of range in '" + std::string(text) + "'");

  minutes offset{0};
  if (pos == text.size()) {
    if (!local_zone) {
      throw ParseError("timestamp '" + std::string(text) + "' has no zone and no airport timezone is configured");
    }
    offset = local_zone->offset();
  } else if (text[pos] == 'Z' && pos + 1 == text.size()) {
    offset = minutes{0};
  } else if (text[pos] == '+' || text[pos] == '-') {
    offset = detail::parse_offset(text.substr(pos), text);
  } else {
    throw ParseError("trailing characters in timestamp '" + std::string(text) + "'");
  }
  const TimePoint local = TimePoint{date} + hours{hh} + minutes{mm} + seconds{ss} + Millis{ms};
  return local - offset;
}

/// Canonical UTC rendering: "YYYY-MM-DDTHH:MM:SSZ", with ".mmm" when the
/// millisecond part is non-zero.
inline std::string format_timestamp(TimePoint t) {
  using namespace std::chrono;
  const Date d = floor<days>(t);
  const Millis in_day = t - TimePoint{d};
  const long total_ms = static_cast<long>(in_day.count());
  std::string out = format_date(d);
  out.push_back('T');
  detail::append_padded(out, total_ms / 3'600'000, 2);
  out.push_back(':');
  detail::append_padded(out, (total_ms / 60'000) % 60, 2);
  out.push_back(':');
  detail::append_padded(out, (total_ms / 1000) % 60, 2);
  if (total_ms % 1000 != 0) {
    out.push_back('.');
    detail::append_padded(out, total_ms % 1000, 3);
  }
  out.push_back('Z');
  return out;
}

/// Calendar day of `t` as seen from `zone`.
inline Date local_date(TimePoint t, const TimeZone& zone = {}) {
  return std::chrono::floor<std::chrono::days>(t + zone.offset());
}

inline double minutes_between(TimePoint from, TimePoint to) {
  return std::chrono::duration<double, std::ratio<60>>(to - from).count();
}

inline double seconds_between(TimePoint from, TimePoint to) {
  return std::chrono::duration<double>(to - from).count();
}

inline Millis from_minutes(double minutes) {
  return Millis{static_cast<std::int64_t>(std::llround(minutes * 60'000.0))};
}

inline TimePoint from_epoch_seconds(double seconds) {
  return TimePoint{Millis{static_cast<std::int64_t>(std::llround(seconds * 1000.0))}};
}

}  // namespace tarmac
