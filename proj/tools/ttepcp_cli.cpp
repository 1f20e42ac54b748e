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

#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ttepcp/csv.hpp"
#include "ttepcp/error.hpp"
#include "ttepcp/experiment.hpp"

namespace {

using namespace ttepcp;

int exit_code(ErrorFamily f)
{
    switch (f) {
    case ErrorFamily::validation:
        return 1;
    case ErrorFamily::estimation:
        return 2;
    case ErrorFamily::io:
        break;
    }
    return 3;
}

std::string config_dir(const std::string& path)
{
    return std::filesystem::path(path).parent_path().string();
}

bool looks_like_experiment(const nlohmann::json& doc)
{
    for (const char* key : {"input", "strategies", "bootstrap", "eligibility", "codesets", "analysis", "output_dir",
                            "pcp_labels"})
        if (doc.is_object() && doc.contains(key))
            return true;
    return false;
}

std::vector<std::string> split_commas(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty())
            out.push_back(item);
    return out;
}

int cmd_run(const std::string& config_path, const std::optional<std::string>& out,
            const std::optional<std::uint64_t>& seed, const std::optional<std::string>& strategies,
            const std::optional<std::int64_t>& reps)
{
    auto doc = read_json_file(config_path);
    if (!doc.is_object())
        throw ConfigError("<root>", "expected a JSON object");
    if (seed) {
        doc["bootstrap"]["seed"] = *seed;
        auto& input = doc["input"];
        if (!input.contains("mode") || input["mode"] == "simulate")
            input["simulation"]["seed"] = *seed;
    }
    if (strategies)
        doc["strategies"] = split_commas(*strategies);
    if (reps)
        doc["bootstrap"]["n_reps"] = *reps;
    auto config = validate_config(doc, config_dir(config_path));
    if (out)
        config.output_dir = *out;

    const auto manifest = run_experiment(config);
    for (const auto& [name, files] : manifest.outputs)
        if (name != "run")
            fmt::print("strategy {}: {} files\n", name, files.size());
    for (const auto& [name, message] : manifest.errors)
        fmt::print(stderr, "strategy {} failed: {}\n", name, message);
    fmt::print("outputs in {} ({:.1f} s)\n", config.output_dir, manifest.elapsed_seconds);
    if (manifest.errors.empty())
        return 0;
    const auto& first = manifest.errors.begin()->second;
    if (first.rfind("estimation", 0) == 0)
        return 2;
    return first.rfind("io", 0) == 0 ? 3 : 1;
}

int cmd_simulate(const std::string& config_path, const std::string& out)
{
    const auto doc = read_json_file(config_path);
    GenConfig gen = looks_like_experiment(doc) ? validate_config(doc, config_dir(config_path)).simulation
                                               : gen_config_from_json(doc);
    write_simulation(gen, out);
    fmt::print("wrote {} patients to {}\n", gen.n_patients, out);
    return 0;
}

int cmd_validate(const std::string& config_path)
{
    const auto doc = read_json_file(config_path);
    if (looks_like_experiment(doc))
        std::cout << to_json(validate_config(doc, config_dir(config_path))).dump(2) << '\n';
    else
        std::cout << to_json(gen_config_from_json(doc)).dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"New-user metformin vs sulfonylurea emulation with PCP-indication strategies"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ttepcp::version_string());

    std::string config_path, out_dir;
    std::optional<std::string> run_out, strategies;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> reps;

    auto* run = app.add_subcommand("run", "build the cohort and run the requested strategies");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--out", run_out, "output directory (overrides output_dir)");
    run->add_option("--seed", seed, "seed for simulation and bootstrap");
    run->add_option("--strategies", strategies, "comma-separated subset of B,M,E");
    run->add_option("--bootstrap", reps, "bootstrap replicates (0 disables)");

    auto* simulate = app.add_subcommand("simulate", "write a synthetic corpus and its ground truth");
    simulate->add_option("--config", config_path, "simulation or experiment config (JSON)")->required();
    simulate->add_option("--out", out_dir, "output directory")->required();

    auto* validate = app.add_subcommand("validate", "print the fully defaulted config");
    validate->add_option("--config", config_path, "config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*run)
            return cmd_run(config_path, run_out, seed, strategies, reps);
        if (*simulate)
            return cmd_simulate(config_path, out_dir);
        return cmd_validate(config_path);
    } catch (const ttepcp::Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return exit_code(e.family());
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 3;
    }
}
