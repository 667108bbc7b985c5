#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivepoison/decision.hpp"
#include "drivepoison/scene.hpp"

namespace drivepoison::sim {

inline constexpr double kClosingEpsilon = 1e-6;  // m/s
inline constexpr double kStepSeconds = 1.0;
inline constexpr double kSpeedDelta = 2.0;       // m/s per FASTER/SLOWER
inline constexpr double kCollisionRadius = 2.0;  // m
inline constexpr double kPlacementSpacing = 5.0; // m, same-lane spacing at sampling time

struct Vehicle {
    int id = 0;
    int lane = 0;          // 0 = leftmost
    double position = 0.0; // m along the road
    double speed = 0.0;    // m/s
    Attributes attributes; // color, make, hazard_lights ("true"/"false"), ...

    bool operator==(const Vehicle&) const = default;
};

struct SpeedLimits {
    double min = 20.0;
    double max = 30.0;

    bool operator==(const SpeedLimits&) const = default;
};

struct HighwayState {
    int lane_count = 3;
    Vehicle ego;
    std::vector<Vehicle> others;
    int step = 0;
    SpeedLimits speed_limits;  // applies to the ego

    bool operator==(const HighwayState&) const = default;
};

/// Throws InvalidState when any structural invariant is broken.
void validate(const HighwayState& state);

/// Per-lane assessment relative to the ego. An absent ttc/gap is the
/// UNBOUNDED sentinel (serialised as null).
struct LaneAssessment {
    int lane = 0;
    std::optional<double> ttc;
    std::optional<double> gap;
    std::optional<int> lead_id;

    bool operator==(const LaneAssessment&) const = default;
};

enum class Action { LaneLeft, Idle, LaneRight, Faster, Slower };

Decision to_decision(Action a);
std::optional<Action> action_from_decision(const Decision& d);

LaneAssessment compute_ttc(const HighwayState& state, int lane);

/// Current lane and its in-bounds neighbours, ascending.
std::vector<int> reachable_lanes(int ego_lane, int lane_count);

/// Largest-TTC lane choice over pre-computed assessments. UNBOUNDED beats any
/// finite value; ties keep the current lane, then prefer the lower index.
Action choose_lane(int ego_lane, std::span<const LaneAssessment> reachable);

Action oracle_decision(const HighwayState& state);

struct StepResult {
    HighwayState state;
    bool noop = false;  // an illegal lane change was clamped
};

StepResult step(const HighwayState& state, Action action);

/// Any same-lane pair (ego included) with |Δposition| <= kCollisionRadius.
bool has_collision(const HighwayState& state);

struct EnvConfig {
    int lane_count = 3;
    int min_vehicles = 0;
    int max_vehicles = 6;
    double min_gap = 10.0;  // placement distance ahead of the ego, m
    double max_gap = 80.0;
    double min_speed = 15.0;  // other vehicles, m/s
    double max_speed = 30.0;
    SpeedLimits ego_speed_limits{20.0, 30.0};
    /// Guarantees that the ego lane or a neighbour carries no traffic slower
    /// than the ego, which makes the largest-TTC policy collision-free.
    bool require_open_lane = true;
    bool vehicle_attributes = true;
    int placement_attempts = 200;

    bool operator==(const EnvConfig&) const = default;
};

void validate(const EnvConfig& config);  // throws ConfigError

/// Seeded initial state. Positions and speeds lie on a 0.1 grid so that the
/// one-decimal description is exact. Within a lane, speeds never decrease
/// towards the front, so other vehicles never close on each other.
/// Throws PlacementError when vehicles cannot be spaced.
HighwayState sample_initial_state(const EnvConfig& config, std::uint64_t seed);

/// Fixed three-lane state used for demonstrations.
HighwayState reference_state();

/// Rule-based natural-language description; pure and byte-stable.
ScenarioDescription describe(const HighwayState& state);

/// What a reader can recover from describe() text.
struct ParsedLane {
    int lane = 0;
    std::optional<double> gap;
    std::optional<double> lead_speed;
    std::optional<double> stated_ttc;
};

struct ParsedDescription {
    int lane_count = 0;
    int ego_lane = 0;
    double ego_speed = 0.0;
    std::vector<ParsedLane> lanes;  // reachable lanes, ascending

    /// Re-derives assessments from the stated gaps and speeds.
    std::vector<LaneAssessment> assessments() const;
};

/// Inverse of describe(); nullopt when the text does not follow the grammar.
/// Unrelated sentences (for example an inserted phrase) are ignored.
std::optional<ParsedDescription> read_description(const std::string& text);

void to_json(nlohmann::json& j, const Vehicle& v);
void to_json(nlohmann::json& j, const HighwayState& s);
void to_json(nlohmann::json& j, const LaneAssessment& a);
void to_json(nlohmann::json& j, const EnvConfig& c);

HighwayState state_from_json(const nlohmann::json& j, const std::string& pointer = "");
/// Missing keys keep their defaults.
EnvConfig env_config_from_json(const nlohmann::json& j, const std::string& pointer = "");

}  // namespace drivepoison::sim
