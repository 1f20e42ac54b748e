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

#include <string>
#include <string_view>
#include <vector>

#include "ttepcp/ehr_model.hpp"

namespace ttepcp {

/// Names of the built-in codesets: "adrd" plus one per comorbidity covariate.
const std::vector<std::string>& builtin_codeset_names();

/// Codeset-format text for a built-in codeset; throws UsageError if unknown.
std::string_view builtin_codeset_text(std::string_view name);
CodeSet builtin_codeset(std::string_view name);

/// Built-in comorbidity codesets in declaration order.
std::vector<CodeSet> builtin_covariate_codesets();

}  // namespace ttepcp
