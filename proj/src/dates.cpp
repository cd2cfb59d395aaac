#include "palmscan/dates.hpp"

#include <charconv>
#include <cstdio>

#include "palmscan/errors.hpp"

namespace palmscan {

namespace {

int parse_int(std::string_view text, std::string_view whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw DomainError("bad date '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

YearMonth YearMonth::parse(std::string_view text) {
  if (text.size() != 7 && text.size() != 10) {
    throw DomainError("bad date '" + std::string(text) + "', expected YYYY-MM");
  }
  if (text[4] != '-' || (text.size() == 10 && text[7] != '-')) {
    throw DomainError("bad date '" + std::string(text) + "', expected YYYY-MM");
  }
  YearMonth ym{parse_int(text.substr(0, 4), text), parse_int(text.substr(5, 2), text)};
  if (ym.month < 1 || ym.month > 12) {
    throw DomainError("month out of range in '" + std::string(text) + "'");
  }
  return ym;
}

std::string YearMonth::str() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
  return buf;
}

}  // namespace palmscan
