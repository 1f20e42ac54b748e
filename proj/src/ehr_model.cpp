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

#include "ttepcp/ehr_model.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "ttepcp/error.hpp"

namespace ttepcp {

namespace {

template <typename Enum, std::size_t N>
Enum parse_label(std::string_view s, const std::array<std::string_view, N>& labels, std::string_view what)
{
    for (std::size_t i = 0; i < N; ++i)
        if (labels[i] == s)
            return static_cast<Enum>(i);
    throw ParseError(fmt::format("unknown {} '{}'", what, s));
}

constexpr std::array<std::string_view, 2> kSex{"female", "male"};
constexpr std::array<std::string_view, 4> kEducation{"secondary", "college", "graduate", "missing"};
constexpr std::array<std::string_view, 4> kBmi{"under25", "25to30", "30plus", "missing"};
constexpr std::array<std::string_view, 3> kSetting{"outpatient", "inpatient", "other"};
constexpr std::array<std::string_view, 4> kSystem{"icd9", "icd10", "internal", "medication"};
constexpr std::array<std::string_view, 5> kDrug{"metformin", "sulfonylurea", "other_antidiabetic",
                                                 "adrd_medication", "other"};
constexpr std::array<std::string_view, 3> kPcpKind{"procedure_code", "service_line", "reason_for_visit"};

}  // namespace

std::string_view to_string(Sex v) { return kSex[static_cast<std::size_t>(v)]; }
std::string_view to_string(Education v) { return kEducation[static_cast<std::size_t>(v)]; }
std::string_view to_string(BmiClass v) { return kBmi[static_cast<std::size_t>(v)]; }
std::string_view to_string(Setting v) { return kSetting[static_cast<std::size_t>(v)]; }
std::string_view to_string(CodeSystem v) { return kSystem[static_cast<std::size_t>(v)]; }
std::string_view to_string(DrugClass v) { return kDrug[static_cast<std::size_t>(v)]; }
std::string_view to_string(PcpKind v) { return kPcpKind[static_cast<std::size_t>(v)]; }

Sex parse_sex(std::string_view s) { return parse_label<Sex>(s, kSex, "sex"); }
Education parse_education(std::string_view s) { return parse_label<Education>(s, kEducation, "education"); }
BmiClass parse_bmi_class(std::string_view s) { return parse_label<BmiClass>(s, kBmi, "bmi_class"); }
Setting parse_setting(std::string_view s) { return parse_label<Setting>(s, kSetting, "setting"); }
CodeSystem parse_code_system(std::string_view s) { return parse_label<CodeSystem>(s, kSystem, "code system"); }
DrugClass parse_drug_class(std::string_view s) { return parse_label<DrugClass>(s, kDrug, "drug_class"); }

void validate(const PatientRecord& p)
{
    auto fail = [&](const std::string& msg) {
        throw SchemaError(fmt::format("patient '{}': {}", p.patient_id, msg));
    };
    if (p.patient_id.empty())
        fail("empty patient_id");
    Date last = p.birth_date;
    auto check_series = [&](const auto& events, std::string_view what) {
        Date prev = p.birth_date;
        for (const auto& e : events) {
            if (e.date < p.birth_date)
                fail(fmt::format("{} dated {} precedes birth_date", what, e.date.iso()));
            if (e.date < prev)
                fail(fmt::format("{} not sorted by date at {}", what, e.date.iso()));
            prev = e.date;
            last = std::max(last, e.date);
        }
    };
    check_series(p.encounters, "encounters");
    check_series(p.diagnoses, "diagnoses");
    check_series(p.prescriptions, "prescriptions");
    for (const auto& d : p.diagnoses)
        if (d.code.empty())
            fail("diagnosis with empty code");
    const auto svi = {p.svi_scores.socioeconomic, p.svi_scores.home_life, p.svi_scores.racial_ethnic,
                      p.svi_scores.housing};
    for (double s : svi)
        if (!(s >= 0.0 && s <= 1.0))
            fail("svi score outside [0, 1]");
    if (p.death_date && *p.death_date < last)
        fail(fmt::format("death_date {} precedes a recorded event on {}", p.death_date->iso(), last.iso()));
}

std::optional<Date> first_outcome_date(const PatientRecord& patient, const CodeSet& outcome)
{
    std::optional<Date> best;
    auto consider = [&](Date d) {
        if (!best || d < *best)
            best = d;
    };
    for (const auto& d : patient.diagnoses)
        if (matches(outcome, d))
            consider(d.date);
    for (const auto& rx : patient.prescriptions)
        if (matches(outcome, rx))
            consider(rx.date);
    return best;
}

bool has_code_on_or_before(const PatientRecord& patient, const CodeSet& codes, Date cutoff)
{
    for (const auto& d : patient.diagnoses)
        if (d.date <= cutoff && matches(codes, d))
            return true;
    for (const auto& rx : patient.prescriptions)
        if (rx.date <= cutoff && matches(codes, rx))
            return true;
    return false;
}

void PcpConfig::normalize()
{
    auto norm = [](std::set<std::string>& labels) {
        std::set<std::string> out;
        for (const auto& l : labels)
            out.insert(normalize_code(l));
        labels = std::move(out);
    };
    norm(procedure_codes);
    norm(service_lines);
    norm(reasons);
}

PcpConfig PcpConfig::defaults()
{
    // Preventive-medicine and Medicare wellness visit codes.
    PcpConfig c{{"99385", "99386", "99387", "99395", "99396", "99397", "G0438", "G0439"},
                {"Primary Care"},
                {"Annual Wellness Visit"}};
    c.normalize();
    return c;
}

namespace {

// Bitmask of rules satisfied by one encounter.
std::uint8_t encounter_kinds(const Encounter& e, const PcpConfig& config)
{
    std::uint8_t mask = 0;
    for (const auto& code : e.procedure_codes) {
        if (config.procedure_codes.count(normalize_code(code))) {
            mask |= 1u << static_cast<int>(PcpKind::procedure_code);
            break;
        }
    }
    if (e.service_line && config.service_lines.count(normalize_code(*e.service_line)))
        mask |= 1u << static_cast<int>(PcpKind::service_line);
    if (e.reason_for_visit && config.reasons.count(normalize_code(*e.reason_for_visit)))
        mask |= 1u << static_cast<int>(PcpKind::reason_for_visit);
    return mask;
}

}  // namespace

std::vector<PcpIndication> pcp_indications(const PatientRecord& patient, const PcpConfig& config)
{
    std::vector<PcpIndication> out;
    for (const auto& e : patient.encounters) {
        auto mask = encounter_kinds(e, config);
        for (int k = 0; k < 3; ++k)
            if (mask & (1u << k))
                out.push_back({static_cast<PcpKind>(k), e.date});
    }
    return out;
}

std::uint8_t pcp_kinds_before(const PatientRecord& patient, Date cutoff, const PcpConfig& config)
{
    std::uint8_t mask = 0;
    for (const auto& e : patient.encounters)
        if (e.date < cutoff)
            mask |= encounter_kinds(e, config);
    return mask;
}

std::uint8_t pcp_kinds_from(const PatientRecord& patient, Date cutoff, const PcpConfig& config)
{
    std::uint8_t mask = 0;
    for (const auto& e : patient.encounters)
        if (e.date >= cutoff)
            mask |= encounter_kinds(e, config);
    return mask;
}

bool has_internal_pcp(const PatientRecord& patient, Date cutoff, const PcpConfig& config)
{
    for (const auto& e : patient.encounters)
        if (e.date < cutoff && encounter_kinds(e, config) != 0)
            return true;
    return false;
}

void VennCounts::add(std::uint8_t mask)
{
    ++total_patients;
    mask &= 0x7;
    if (mask == 0)
        return;
    ++region[mask];
    ++total_pcp;
}

VennCounts indication_venn(std::span<const PatientRecord> patients, std::span<const Date> cutoffs,
                           const PcpConfig& config)
{
    if (patients.size() != cutoffs.size())
        throw UsageError("indication_venn: one cutoff per patient required");
    VennCounts out;
    for (std::size_t i = 0; i < patients.size(); ++i)
        out.add(pcp_kinds_before(patients[i], cutoffs[i], config));
    return out;
}

VennCounts venn_from_masks(std::span<const std::uint8_t> masks)
{
    VennCounts out;
    for (auto m : masks)
        out.add(m);
    return out;
}

}  // namespace ttepcp
