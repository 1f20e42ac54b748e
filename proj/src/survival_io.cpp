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

#include "ttepcp/csv.hpp"
#include "ttepcp/survival.hpp"

namespace ttepcp {

void write_forest_csv(const std::string& path, const std::vector<ForestRow>& rows)
{
    CsvWriter out{path, {"covariate", "log_hr", "se", "hr", "ci_lower", "ci_upper", "p_value"}};
    for (const auto& r : rows)
        out.row({r.name, format_number(r.log_hr), format_number(r.se), format_number(r.hr), format_number(r.ci_lower),
                 format_number(r.ci_upper), format_number(r.p_value)});
    out.close();
}

nlohmann::json to_json(const std::vector<ForestRow>& rows, const CoxResult& result)
{
    nlohmann::json table = nlohmann::json::array();
    for (const auto& r : rows)
        table.push_back({{"covariate", r.name},
                         {"log_hr", r.log_hr},
                         {"se", r.se},
                         {"hr", r.hr},
                         {"ci_lower", r.ci_lower},
                         {"ci_upper", r.ci_upper},
                         {"p_value", r.p_value}});
    const auto& f = result.fit;
    return {{"n", f.n},
            {"n_events", f.n_events},
            {"iterations", f.iterations},
            {"converged", f.converged},
            {"log_likelihood", f.log_likelihood},
            {"null_log_likelihood", f.null_log_likelihood},
            {"robust_covariance", f.robust_covariance.has_value()},
            {"rows", table}};
}

void write_cif_csv(const std::string& path, const CifCurve& curve)
{
    const bool band = curve.lower && curve.upper;
    std::vector<std::string> header{"time_days", "incidence", "survival"};
    if (band) {
        header.push_back("lower");
        header.push_back("upper");
    }
    CsvWriter out{path, header};
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
        std::vector<std::string> fields{std::to_string(curve.times[k]), format_number(curve.incidence[k]),
                                        format_number(curve.survival[k])};
        if (band) {
            fields.push_back(format_number((*curve.lower)[k]));
            fields.push_back(format_number((*curve.upper)[k]));
        }
        out.row(fields);
    }
    out.close();
}

void write_rate_csv(const std::string& path, const RateTable& table)
{
    CsvWriter out{path, {"age_bin", "person_years", "events", "incidence", "reference", "ratio", "status"}};
    for (const auto& r : table.rows)
        out.row({r.bin.label(), format_number(r.person_years), std::to_string(r.events), format_number(r.incidence),
                 format_number(r.reference), format_number(r.ratio), "reported"});
    for (const auto& b : table.omitted)
        out.row({b.label(), "0", "0", "NA", "NA", "NA", "omitted_zero_person_years"});
    out.close();
}

}  // namespace ttepcp
