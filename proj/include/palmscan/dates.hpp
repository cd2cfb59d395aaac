#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace palmscan {

// Calendar month; the finest granularity street imagery metadata carries.
struct YearMonth {
  int year = 1970;
  int month = 1;

  auto operator<=>(const YearMonth&) const = default;

  int index() const noexcept { return year * 12 + (month - 1); }
  static YearMonth from_index(int idx) noexcept { return {idx / 12, idx % 12 + 1}; }

  // Accepts "YYYY-MM" and "YYYY-MM-DD" (day dropped).
  static YearMonth parse(std::string_view text);
  std::string str() const;
};

}  // namespace palmscan
