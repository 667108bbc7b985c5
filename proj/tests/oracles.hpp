#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "drivepoison/corpus.hpp"
#include "drivepoison/models.hpp"
#include "drivepoison/random.hpp"
#include "drivepoison/sim_highway.hpp"

namespace oracle {

using drivepoison::sim::HighwayState;

// TTC from first principles; nullopt is unbounded.
std::optional<double> ttc(const HighwayState& s, int lane);

// Largest-TTC lane with ties kept in the current lane, then the lower lane.
// Returns "LANE_LEFT", "IDLE" or "LANE_RIGHT".
std::string decision(const HighwayState& s);

// Any two vehicles (ego included) in one lane no more than 2 m apart.
bool collides(const HighwayState& s);

// Arbitrary valid state, not drawn from the library sampler: 2..max_lanes lanes,
// 0..max_vehicles others, positions and speeds on a 0.5 grid so ties occur.
HighwayState random_state(drivepoison::SeededRng& rng, int max_lanes = 4, int max_vehicles = 6);

drivepoison::corpus::Dataset urban_fixture();

std::filesystem::path temp_dir(const std::string& name);

// Answers every prompt through a callback.
class ScriptedModel final : public drivepoison::models::DecisionModel {
public:
    explicit ScriptedModel(std::function<std::string(const drivepoison::models::PromptContext&)> fn)
        : fn_(std::move(fn)) {}
    std::string respond(const drivepoison::models::PromptContext& c) const override { return fn_(c); }

private:
    std::function<std::string(const drivepoison::models::PromptContext&)> fn_;
};

}  // namespace oracle
