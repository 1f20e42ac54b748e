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

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttepcp/date.hpp"
#include "ttepcp/error.hpp"

namespace ttepcp {

/// Walks one JSON object of a configuration document. Every read marks the
/// key as known; finish() rejects leftovers. Errors are ConfigError with the
/// dotted path of the field.
class ConfigReader {
public:
    ConfigReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError(path_.empty() ? "<root>" : path_, "expected a JSON object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key)
    {
        known_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    const nlohmann::json& at(const std::string& key)
    {
        if (!has(key))
            throw ConfigError(field(key), "required field is missing");
        return j_.at(key);
    }

    ConfigReader child(const std::string& key) { return ConfigReader{at(key), field(key)}; }

    template <typename T>
    void read(const std::string& key, T& out)
    {
        if (!has(key))
            return;
        const auto& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, Date>) {
                if (!v.is_string())
                    throw ConfigError(field(key), "expected an ISO date string");
                out = Date::parse(v.get<std::string>());
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean())
                    throw ConfigError(field(key), "expected a boolean");
                out = v.get<bool>();
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer())
                    throw ConfigError(field(key), "expected an integer");
                if constexpr (std::is_unsigned_v<T>) {
                    if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0)
                        out = v.get<T>();
                    else
                        throw ConfigError(field(key), "expected a nonnegative integer");
                } else {
                    out = v.get<T>();
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number())
                    throw ConfigError(field(key), "expected a number");
                out = v.get<T>();
            } else {
                out = v.get<T>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(field(key), e.what());
        } catch (const ParseError& e) {
            throw ConfigError(field(key), e.what());
        }
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!known_.count(it.key()))
                throw ConfigError(field(it.key()), "unknown field");
    }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> known_;
};

inline void require(bool ok, const std::string& field, const std::string& constraint)
{
    if (!ok)
        throw ConfigError(field, constraint);
}

}  // namespace ttepcp
