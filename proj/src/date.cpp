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

#include "ttepcp/date.hpp"

#include <charconv>
#include <chrono>

#include <fmt/format.h>

#include "ttepcp/error.hpp"

namespace ttepcp {

namespace chr = std::chrono;

namespace {

chr::year_month_day to_ymd(Date d) { return chr::year_month_day{chr::sys_days{chr::days{d.days}}}; }

}  // namespace

Date Date::from_ymd(int year, unsigned month, unsigned day)
{
    chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
    if (!ymd.ok())
        throw ParseError(fmt::format("invalid calendar date {:04d}-{:02d}-{:02d}", year, month, day));
    return Date{static_cast<std::int32_t>(chr::sys_days{ymd}.time_since_epoch().count())};
}

Date Date::parse(std::string_view iso)
{
    auto bad = [&] { return ParseError(fmt::format("expected YYYY-MM-DD date, got '{}'", iso)); };
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-')
        throw bad();
    auto field = [&](std::size_t pos, std::size_t len) {
        int value = 0;
        auto [ptr, ec] = std::from_chars(iso.data() + pos, iso.data() + pos + len, value);
        if (ec != std::errc{} || ptr != iso.data() + pos + len)
            throw bad();
        return value;
    };
    return from_ymd(field(0, 4), static_cast<unsigned>(field(5, 2)), static_cast<unsigned>(field(8, 2)));
}

std::string Date::iso() const
{
    auto ymd = to_ymd(*this);
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

int Date::year() const { return static_cast<int>(to_ymd(*this).year()); }

Date birthday(Date birth, int years)
{
    auto ymd = to_ymd(birth);
    chr::year_month_day target{ymd.year() + chr::years{years}, ymd.month(), ymd.day()};
    if (!target.ok())  // Feb 29 in a non-leap year
        target = chr::year_month_day{target.year(), chr::March, chr::day{1}};
    return Date{static_cast<std::int32_t>(chr::sys_days{target}.time_since_epoch().count())};
}

double age_in_years(Date birth, Date on)
{
    if (on < birth)
        return -age_in_years(on, birth);
    int years = on.year() - birth.year();
    while (years > 0 && birthday(birth, years) > on)
        --years;
    Date last = birthday(birth, years);
    Date next = birthday(birth, years + 1);
    return years + static_cast<double>(on - last) / static_cast<double>(next - last);
}

}  // namespace ttepcp
