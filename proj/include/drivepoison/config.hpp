#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivepoison/corpus.hpp"
#include "drivepoison/poison.hpp"
#include "drivepoison/remote.hpp"
#include "drivepoison/sim_highway.hpp"
#include "drivepoison/triggers.hpp"

namespace drivepoison {

struct DatasetConfig {
    std::string name = "highway";
    std::size_t n = 124;
    std::size_t demonstrations = 1;
    corpus::ReasoningTemplates templates;
};

struct KbConfig {
    std::optional<std::filesystem::path> path;  // existing knowledge DB
    std::size_t benign = 25;
    std::size_t poisoned = 3;
    std::size_t k = 1;
    std::string guidance =
        "A vehicle ahead with its hazard lights on may be about to stop. Watch it closely and keep a safe distance.";
    Attributes trigger_attributes = {{"color", "red"}, {"make", "Mazda CX-5"}, {"hazard_lights", "true"}};
};

struct SweepConfig {
    std::vector<double> ratios = {0.0, 0.025, 0.05, 0.075, 0.1};
    std::size_t train_n = 80;
    std::size_t eval_n = 50;
    std::vector<std::pair<std::size_t, std::size_t>> contrast = {{42, 0}, {42, 10}, {42, 21}, {42, 42}};
    std::size_t contrast_bases = 100;
    std::vector<std::size_t> defense_counts = {0, 1, 2, 4, 10};
    std::size_t defense_pool = 20;
};

struct RunConfig {
    sim::EnvConfig env;
    DecisionSet decision_set = DecisionSet::highway();
    DatasetConfig dataset;
    poison::WordTrigger word_trigger;
    poison::ScenarioTrigger scenario_trigger;
    double word_ratio = 0.075;
    poison::ContrastOptions contrast;
    KbConfig kb;
    std::map<std::string, models::EndpointConfig> endpoints;
    SweepConfig sweep;
    std::map<std::string, std::uint64_t> seeds;
    std::filesystem::path output_dir = "out";

    /// Named seed, falling back to seeds["master"] and then 42.
    std::uint64_t seed(const std::string& name) const;
};

/// Defaults: highway environment, placeholder word trigger, gray-trash-bin
/// scenario trigger, red-Mazda knowledge trigger.
RunConfig default_run_config();

/// Sections absent from `j` keep their defaults. Throws SchemaError or ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Triggers use the decision set, referenced files exist. Throws ConfigError.
void validate(const RunConfig& config);

nlohmann::json to_json(const RunConfig& config);
std::string config_fingerprint(const RunConfig& config);

}  // namespace drivepoison
