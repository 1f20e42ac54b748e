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

#include "ttepcp/ehr_json.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "ttepcp/error.hpp"

namespace ttepcp {

using nlohmann::json;

namespace {

// Reads fields of one JSON object, rejecting absent required keys and keys
// that were never consumed.
class FieldReader {
public:
    FieldReader(const json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object())
            throw SchemaError(fmt::format("{}: expected a JSON object", where_));
    }

    const json& required(const std::string& key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end())
            throw SchemaError(fmt::format("{}: missing field '{}'", where_, key));
        return *it;
    }

    const json* optional(const std::string& key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    std::string string(const std::string& key)
    {
        const auto& v = required(key);
        if (!v.is_string())
            throw SchemaError(fmt::format("{}: field '{}' must be a string", where_, key));
        return v.get<std::string>();
    }

    double number(const std::string& key)
    {
        const auto& v = required(key);
        if (!v.is_number())
            throw SchemaError(fmt::format("{}: field '{}' must be a number", where_, key));
        return v.get<double>();
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw SchemaError(fmt::format("{}: unknown field '{}'", where_, it.key()));
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

template <typename F>
auto relabel(const std::string& where, F&& f)
{
    try {
        return f();
    } catch (const ParseError& e) {
        throw SchemaError(fmt::format("{}: {}", where, e.what()));
    }
}

const json& array_field(FieldReader& r, const std::string& key, const std::string& where)
{
    const auto& v = r.required(key);
    if (!v.is_array())
        throw SchemaError(fmt::format("{}: field '{}' must be an array", where, key));
    return v;
}

}  // namespace

json to_json(const PatientRecord& p)
{
    json encounters = json::array();
    for (const auto& e : p.encounters) {
        json je{{"date", e.date.iso()},
                {"setting", to_string(e.setting)},
                {"procedure_codes", e.procedure_codes},
                {"service_line", e.service_line ? json(*e.service_line) : json(nullptr)},
                {"reason_for_visit", e.reason_for_visit ? json(*e.reason_for_visit) : json(nullptr)}};
        encounters.push_back(std::move(je));
    }
    json diagnoses = json::array();
    for (const auto& d : p.diagnoses)
        diagnoses.push_back({{"date", d.date.iso()}, {"system", to_string(d.system)}, {"code", d.code}});
    json prescriptions = json::array();
    for (const auto& rx : p.prescriptions)
        prescriptions.push_back(
            {{"date", rx.date.iso()}, {"drug_class", to_string(rx.drug_class)}, {"drug_name", rx.drug_name}});

    return json{{"patient_id", p.patient_id},
                {"birth_date", p.birth_date.iso()},
                {"sex", to_string(p.sex)},
                {"education", to_string(p.education)},
                {"svi_scores",
                 {{"socioeconomic", p.svi_scores.socioeconomic},
                  {"home_life", p.svi_scores.home_life},
                  {"racial_ethnic", p.svi_scores.racial_ethnic},
                  {"housing", p.svi_scores.housing}}},
                {"bmi_class", to_string(p.bmi_class)},
                {"encounters", std::move(encounters)},
                {"diagnoses", std::move(diagnoses)},
                {"prescriptions", std::move(prescriptions)},
                {"death_date", p.death_date ? json(p.death_date->iso()) : json(nullptr)}};
}

PatientRecord patient_from_json(const json& j)
{
    PatientRecord p;
    FieldReader r{j, "patient"};
    p.patient_id = r.string("patient_id");
    const std::string where = fmt::format("patient '{}'", p.patient_id);
    relabel(where, [&] {
        p.birth_date = Date::parse(r.string("birth_date"));
        p.sex = parse_sex(r.string("sex"));
        p.education = parse_education(r.string("education"));
        p.bmi_class = parse_bmi_class(r.string("bmi_class"));
        return 0;
    });

    FieldReader svi{r.required("svi_scores"), where + " svi_scores"};
    p.svi_scores = {svi.number("socioeconomic"), svi.number("home_life"), svi.number("racial_ethnic"),
                    svi.number("housing")};
    svi.finish();

    for (const auto& je : array_field(r, "encounters", where)) {
        FieldReader er{je, where + " encounter"};
        Encounter e;
        relabel(where, [&] {
            e.date = Date::parse(er.string("date"));
            e.setting = parse_setting(er.string("setting"));
            return 0;
        });
        if (const auto* codes = er.optional("procedure_codes")) {
            if (!codes->is_array())
                throw SchemaError(where + ": procedure_codes must be an array");
            for (const auto& c : *codes)
                e.procedure_codes.push_back(c.get<std::string>());
        }
        if (const auto* sl = er.optional("service_line"))
            e.service_line = sl->get<std::string>();
        if (const auto* rv = er.optional("reason_for_visit"))
            e.reason_for_visit = rv->get<std::string>();
        er.finish();
        p.encounters.push_back(std::move(e));
    }
    for (const auto& jd : array_field(r, "diagnoses", where)) {
        FieldReader dr{jd, where + " diagnosis"};
        CodedEvent d;
        relabel(where, [&] {
            d.date = Date::parse(dr.string("date"));
            d.system = parse_code_system(dr.string("system"));
            return 0;
        });
        d.code = dr.string("code");
        dr.finish();
        p.diagnoses.push_back(std::move(d));
    }
    for (const auto& jp : array_field(r, "prescriptions", where)) {
        FieldReader pr{jp, where + " prescription"};
        Prescription rx;
        relabel(where, [&] {
            rx.date = Date::parse(pr.string("date"));
            rx.drug_class = parse_drug_class(pr.string("drug_class"));
            return 0;
        });
        rx.drug_name = pr.string("drug_name");
        pr.finish();
        p.prescriptions.push_back(std::move(rx));
    }
    if (const auto* dd = r.optional("death_date"))
        p.death_date = relabel(where, [&] { return Date::parse(dd->get<std::string>()); });
    r.finish();
    validate(p);
    return p;
}

void write_patient_line(std::ostream& out, const PatientRecord& patient) { out << to_json(patient).dump() << '\n'; }

void for_each_patient(std::istream& in, const std::function<void(PatientRecord&&)>& visit)
{
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        PatientRecord p;
        try {
            p = patient_from_json(json::parse(line));
        } catch (const json::exception& e) {
            throw ParseError(e.what(), line_no);
        } catch (const SchemaError& e) {
            throw ParseError(e.what(), line_no);
        }
        visit(std::move(p));
    }
}

std::vector<PatientRecord> read_patients(const std::string& path)
{
    std::ifstream in{path};
    if (!in)
        throw IoError(fmt::format("cannot open corpus '{}'", path));
    std::vector<PatientRecord> out;
    for_each_patient(in, [&](PatientRecord&& p) { out.push_back(std::move(p)); });
    return out;
}

void write_patients(const std::string& path, const std::vector<PatientRecord>& patients)
{
    std::ofstream out{path, std::ios::binary};
    if (!out)
        throw IoError(fmt::format("cannot write corpus '{}'", path));
    for (const auto& p : patients)
        write_patient_line(out, p);
    if (!out)
        throw IoError(fmt::format("write failed for '{}'", path));
}

}  // namespace ttepcp
