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

#include <fmt/format.h>

#include "ttepcp/cohort.hpp"
#include "ttepcp/csv.hpp"

namespace ttepcp {

namespace {

std::string covariate_text(const std::optional<CovariateValue>& v)
{
    if (!v)
        return "NA";
    if (const auto* d = std::get_if<double>(&*v))
        return format_number(*d);
    return std::get<std::string>(*v);
}

}  // namespace

void write_consort_csv(const std::string& path, const ConsortReport& report)
{
    std::vector<std::string> header{"step", "criterion"};
    for (const char* kind : {"excluded", "remaining"})
        for (std::size_t c = 0; c < kConsortColumns; ++c)
            header.push_back(fmt::format("{}_{}", kind, consort_column_name(c)));
    CsvWriter out{path, header};

    std::vector<std::string> input{"0", "input"};
    for (std::size_t c = 0; c < kConsortColumns; ++c)
        input.push_back("0");
    for (std::size_t c = 0; c < kConsortColumns; ++c)
        input.push_back(std::to_string(report.input[c]));
    out.row(input);
    for (std::size_t s = 0; s < report.steps.size(); ++s) {
        const auto& step = report.steps[s];
        std::vector<std::string> fields{std::to_string(s + 1), step.criterion};
        for (auto v : step.excluded)
            fields.push_back(std::to_string(v));
        for (auto v : step.remaining)
            fields.push_back(std::to_string(v));
        out.row(fields);
    }
    out.close();
}

void write_summary_csv(const std::string& path, const SummaryTable& table)
{
    std::vector<std::string> header{"feature", "statistic"};
    header.insert(header.end(), table.groups.begin(), table.groups.end());
    CsvWriter out{path, header};
    for (const auto& line : table.lines) {
        std::vector<std::string> fields{line.feature, line.statistic};
        for (const auto& v : line.values)
            fields.push_back(format_number(v));
        out.row(fields);
    }
    out.close();
}

void write_cohort_csv(const std::string& path, std::span<const CohortRow> rows, const std::vector<std::string>& covariates)
{
    std::vector<std::string> header{"patient_id", "arm",   "baseline",    "age_at_baseline", "pcp_flag",
                                    "pcp_kinds",  "event", "followup_days", "death_days",    "censor_days"};
    for (const auto& c : covariates)
        if (c != "pcp_flag" && c != "age")
            header.push_back(c);
    CsvWriter out{path, header};
    for (const auto& r : rows) {
        std::vector<std::string> fields{r.patient_id,
                                        std::string(to_string(r.arm)),
                                        r.baseline.iso(),
                                        format_number(r.age_at_baseline),
                                        r.pcp_flag ? "1" : "0",
                                        std::to_string(r.pcp_kinds),
                                        std::string(to_string(r.event)),
                                        std::to_string(r.followup_days),
                                        r.death_days ? std::to_string(*r.death_days) : "NA",
                                        std::to_string(r.censor_days)};
        for (const auto& c : covariates)
            if (c != "pcp_flag" && c != "age")
                fields.push_back(covariate_text(covariate_value(r, c)));
        out.row(fields);
    }
    out.close();
}

nlohmann::json to_json(const ConsortReport& report)
{
    auto counts = [](const ConsortCounts& c) {
        nlohmann::json j = nlohmann::json::object();
        for (std::size_t k = 0; k < kConsortColumns; ++k)
            j[std::string(consort_column_name(k))] = c[k];
        return j;
    };
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : report.steps)
        steps.push_back({{"criterion", s.criterion}, {"excluded", counts(s.excluded)}, {"remaining", counts(s.remaining)}});
    return {{"input", counts(report.input)}, {"steps", steps}};
}

nlohmann::json to_json(const VennCounts& venn)
{
    nlohmann::json regions = nlohmann::json::object();
    for (std::uint8_t mask = 1; mask < 8; ++mask) {
        std::string key;
        for (int k = 0; k < 3; ++k)
            if (mask & (1u << k)) {
                if (!key.empty())
                    key += "+";
                key += to_string(static_cast<PcpKind>(k));
            }
        regions[key] = venn.region[mask];
    }
    return {{"regions", regions}, {"total_pcp", venn.total_pcp}, {"total_patients", venn.total_patients}};
}

}  // namespace ttepcp
