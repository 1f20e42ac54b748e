// Copyright 2026 The ttepcp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace ttepcp {

/// Day-granular calendar date, stored as days since 1970-01-01.
struct Date {
    std::int32_t days = 0;

    constexpr Date() = default;
    constexpr explicit Date(std::int32_t d) : days(d) {}

    static Date from_ymd(int year, unsigned month, unsigned day);
    /// Parses `YYYY-MM-DD`; throws ParseError on anything else.
    static Date parse(std::string_view iso);

    std::string iso() const;
    int year() const;

    constexpr Date operator+(std::int32_t n) const { return Date{days + n}; }
    constexpr Date operator-(std::int32_t n) const { return Date{days - n}; }
    constexpr std::int32_t operator-(Date other) const { return days - other.days; }
    constexpr auto operator<=>(const Date&) const = default;
};

/// Exact age in fractional years: completed years plus the elapsed share of
/// the current birthday-to-birthday year.
double age_in_years(Date birth, Date on);

/// Date on which a person born on `birth` turns `years` (Feb 29 maps to Mar 1).
Date birthday(Date birth, int years);

}  // namespace ttepcp
