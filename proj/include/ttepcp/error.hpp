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

#include <stdexcept>
#include <string>

namespace ttepcp {

/// Broad error families. The CLI maps them onto exit codes.
enum class ErrorFamily { validation, estimation, io };

class Error : public std::runtime_error {
public:
    Error(ErrorFamily family, const std::string& what)
        : std::runtime_error(what), family_(family) {}
    ErrorFamily family() const noexcept { return family_; }

private:
    ErrorFamily family_;
};

// validation family

class ParseError : public Error {
public:
    ParseError(const std::string& what, int line = 0)
        : Error(ErrorFamily::validation,
                line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// Invalid configuration; carries the dotted path of the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(ErrorFamily::validation, field + ": " + what), field_(std::move(field)), constraint_(what) {}
    const std::string& field() const noexcept { return field_; }
    const std::string& constraint() const noexcept { return constraint_; }

private:
    std::string field_;
    std::string constraint_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorFamily::validation, what) {}
};

class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& what) : Error(ErrorFamily::validation, what) {}
};

// estimation family

class EstimationError : public Error {
public:
    explicit EstimationError(const std::string& what) : Error(ErrorFamily::estimation, what) {}
};

class DegenerateCohortError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class DegenerateDesignError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class SeparationError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class NonConvergenceError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class PositivityError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class NoEventsError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class SingularInformationError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class InferenceInstabilityError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

// io family

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorFamily::io, what) {}
};

}  // namespace ttepcp
