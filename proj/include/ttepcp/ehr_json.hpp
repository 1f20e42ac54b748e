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

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttepcp/ehr_model.hpp"

namespace ttepcp {

nlohmann::json to_json(const PatientRecord& patient);
/// Throws SchemaError on missing/unknown fields or violated invariants.
PatientRecord patient_from_json(const nlohmann::json& j);

/// One compact JSON object per line.
void write_patient_line(std::ostream& out, const PatientRecord& patient);

/// Streams a JSON Lines corpus; errors carry the 1-based line number.
void for_each_patient(std::istream& in, const std::function<void(PatientRecord&&)>& visit);
std::vector<PatientRecord> read_patients(const std::string& path);
void write_patients(const std::string& path, const std::vector<PatientRecord>& patients);

}  // namespace ttepcp
