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

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ttepcp/date.hpp"

namespace ttepcp {

enum class Sex { female, male };
enum class Education { secondary, college, graduate, missing };
enum class BmiClass { under25, from25to30, over30, missing };
enum class Setting { outpatient, inpatient, other };
enum class CodeSystem { icd9, icd10, internal, medication };
enum class DrugClass { metformin, sulfonylurea, other_antidiabetic, adrd_medication, other };

std::string_view to_string(Sex v);
std::string_view to_string(Education v);
std::string_view to_string(BmiClass v);
std::string_view to_string(Setting v);
std::string_view to_string(CodeSystem v);
std::string_view to_string(DrugClass v);

// Inverse mappings; throw ParseError on unknown labels.
Sex parse_sex(std::string_view s);
Education parse_education(std::string_view s);
BmiClass parse_bmi_class(std::string_view s);
Setting parse_setting(std::string_view s);
CodeSystem parse_code_system(std::string_view s);
DrugClass parse_drug_class(std::string_view s);

/// Area-level social vulnerability, each in [0, 1].
struct SviScores {
    double socioeconomic = 0.0;
    double home_life = 0.0;
    double racial_ethnic = 0.0;
    double housing = 0.0;
};

struct Encounter {
    Date date;
    Setting setting = Setting::outpatient;
    std::vector<std::string> procedure_codes;
    std::optional<std::string> service_line;
    std::optional<std::string> reason_for_visit;
};

struct CodedEvent {
    Date date;
    CodeSystem system = CodeSystem::icd10;
    std::string code;
};

struct Prescription {
    Date date;
    DrugClass drug_class = DrugClass::other;
    std::string drug_name;
};

struct PatientRecord {
    std::string patient_id;
    Date birth_date;
    Sex sex = Sex::female;
    Education education = Education::missing;
    SviScores svi_scores;
    BmiClass bmi_class = BmiClass::missing;
    std::vector<Encounter> encounters;
    std::vector<CodedEvent> diagnoses;
    std::vector<Prescription> prescriptions;
    std::optional<Date> death_date;
};

/// Throws SchemaError describing the first violated record invariant
/// (date ordering, events after birth, death after every event).
void validate(const PatientRecord& patient);

/// Trimmed, upper-cased code. Dots are kept.
std::string normalize_code(std::string_view code);

/// A named set of codes, one set per coding system. Codes are stored normalized.
class CodeSet {
public:
    CodeSet() = default;
    explicit CodeSet(std::string name) : name_(std::move(name)) {}

    const std::string& name() const { return name_; }
    const std::set<std::string>& codes(CodeSystem system) const
    {
        return sets_[static_cast<std::size_t>(system)];
    }

    /// Inserts the normalized code; returns false if it was already present
    /// in that system.
    bool insert(CodeSystem system, std::string_view code);
    bool contains(CodeSystem system, std::string_view code) const;
    std::size_t size() const;

private:
    std::string name_;
    std::array<std::set<std::string>, 4> sets_;
};

/// Parses the sectioned codeset text format (`[icd9]`, `[icd10]`,
/// `[internal]`, `[medications]`, one code per line, `#` comments).
CodeSet parse_codeset(std::string_view text, std::string name = {});
CodeSet load_codeset(const std::string& path);

bool matches(const CodeSet& codeset, const CodedEvent& event);
bool matches(const CodeSet& codeset, const Prescription& prescription);

/// Earliest diagnosis or prescription date matching the codeset.
std::optional<Date> first_outcome_date(const PatientRecord& patient, const CodeSet& outcome);

/// Earliest matching diagnosis or prescription dated on or before `cutoff`.
bool has_code_on_or_before(const PatientRecord& patient, const CodeSet& codes, Date cutoff);

// PCP phenotype

enum class PcpKind : std::uint8_t { procedure_code = 0, service_line = 1, reason_for_visit = 2 };

std::string_view to_string(PcpKind kind);

struct PcpIndication {
    PcpKind kind;
    Date date;
};

/// Label sets for the three primary-care indication rules. Labels are
/// compared after normalize_code.
struct PcpConfig {
    std::set<std::string> procedure_codes;
    std::set<std::string> service_lines;
    std::set<std::string> reasons;

    /// Normalizes every label in place.
    void normalize();
    static PcpConfig defaults();
};

/// One indication per (encounter, satisfied rule).
std::vector<PcpIndication> pcp_indications(const PatientRecord& patient, const PcpConfig& config);

/// True iff some indication is dated strictly before `cutoff`.
bool has_internal_pcp(const PatientRecord& patient, Date cutoff, const PcpConfig& config);

/// Bit i set iff an indication of kind i occurs strictly before `cutoff`.
std::uint8_t pcp_kinds_before(const PatientRecord& patient, Date cutoff, const PcpConfig& config);

/// Bit i set iff an indication of kind i occurs on or after `cutoff`.
std::uint8_t pcp_kinds_from(const PatientRecord& patient, Date cutoff, const PcpConfig& config);

/// Patient counts for the seven nonempty regions of the three-kind Venn
/// diagram, indexed by kind bitmask (index 0 unused).
struct VennCounts {
    std::array<std::int64_t, 8> region{};
    std::int64_t total_pcp = 0;
    std::int64_t total_patients = 0;

    void add(std::uint8_t mask);
};

VennCounts indication_venn(std::span<const PatientRecord> patients, std::span<const Date> cutoffs,
                           const PcpConfig& config);
VennCounts venn_from_masks(std::span<const std::uint8_t> masks);

}  // namespace ttepcp
