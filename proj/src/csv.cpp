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

#include <charconv>
#include <cmath>

#include "ttepcp/error.hpp"

namespace ttepcp {

std::string format_number(double v)
{
    if (!std::isfinite(v))
        return "NA";
    if (v == 0)
        return "0";  // also folds -0
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string format_number(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

std::string csv_escape(std::string_view field)
{
    if (field.find_first_of(",\"\n\r") == std::string_view::npos)
        return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + '"';
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : path_(path), out_(path, std::ios::binary), columns_(header.size())
{
    if (!out_)
        throw IoError("cannot open " + path + " for writing");
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields)
{
    if (fields.size() != columns_)
        throw IoError(path_ + ": row has " + std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(columns_));
    for (std::size_t k = 0; k < fields.size(); ++k) {
        if (k)
            out_ << ',';
        out_ << csv_escape(fields[k]);
    }
    out_ << '\n';
    if (!out_)
        throw IoError("write failed: " + path_);
}

void CsvWriter::close()
{
    out_.close();
    if (!out_)
        throw IoError("write failed: " + path_);
}

void write_json_file(const std::string& path, const nlohmann::json& j)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out)
        throw IoError("write failed: " + path);
}

nlohmann::json read_json_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
}

}  // namespace ttepcp
