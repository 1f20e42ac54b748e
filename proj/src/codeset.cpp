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

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "ttepcp/error.hpp"
#include "ttepcp/ehr_model.hpp"

namespace ttepcp {

namespace {

std::string_view trim(std::string_view s)
{
    constexpr std::string_view ws = " \t\r\n\f\v";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string normalize_code(std::string_view code)
{
    std::string out{trim(code)};
    for (char& c : out)
        if (c >= 'a' && c <= 'z')
            c = static_cast<char>(c - 'a' + 'A');
    return out;
}

bool CodeSet::insert(CodeSystem system, std::string_view code)
{
    return sets_[static_cast<std::size_t>(system)].insert(normalize_code(code)).second;
}

bool CodeSet::contains(CodeSystem system, std::string_view code) const
{
    const auto& set = codes(system);
    if (set.empty())
        return false;
    return set.count(normalize_code(code)) > 0;
}

std::size_t CodeSet::size() const
{
    std::size_t n = 0;
    for (const auto& s : sets_)
        n += s.size();
    return n;
}

CodeSet parse_codeset(std::string_view text, std::string name)
{
    CodeSet out{std::move(name)};
    std::optional<CodeSystem> section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        auto line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;

        if (line.front() == '[') {
            if (line == "[icd9]")
                section = CodeSystem::icd9;
            else if (line == "[icd10]")
                section = CodeSystem::icd10;
            else if (line == "[internal]")
                section = CodeSystem::internal;
            else if (line == "[medications]")
                section = CodeSystem::medication;
            else
                throw ParseError(fmt::format("malformed section header '{}'", line), line_no);
            continue;
        }
        if (!section)
            throw ParseError(fmt::format("code '{}' appears before any section header", line), line_no);
        for (CodeSystem other : {CodeSystem::icd9, CodeSystem::icd10, CodeSystem::internal, CodeSystem::medication}) {
            if (other != *section && out.contains(other, line))
                throw ParseError(fmt::format("code '{}' already listed under [{}]", line, to_string(other)), line_no);
        }
        if (!out.insert(*section, line))
            throw ParseError(fmt::format("duplicate code '{}' in [{}]", line, to_string(*section)), line_no);
    }
    return out;
}

CodeSet load_codeset(const std::string& path)
{
    std::ifstream in{path};
    if (!in)
        throw IoError(fmt::format("cannot open codeset file '{}'", path));
    std::ostringstream buf;
    buf << in.rdbuf();
    auto name = path;
    if (auto slash = name.find_last_of('/'); slash != std::string::npos)
        name = name.substr(slash + 1);
    if (auto dot = name.find_last_of('.'); dot != std::string::npos)
        name = name.substr(0, dot);
    try {
        return parse_codeset(buf.str(), name);
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path, e.what()));
    }
}

bool matches(const CodeSet& codeset, const CodedEvent& event) { return codeset.contains(event.system, event.code); }

bool matches(const CodeSet& codeset, const Prescription& prescription)
{
    return codeset.contains(CodeSystem::medication, prescription.drug_name);
}

}  // namespace ttepcp
