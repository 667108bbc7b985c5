#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "drivepoison/decision.hpp"
#include "drivepoison/models.hpp"
#include "drivepoison/sim_highway.hpp"

namespace drivepoison::sim {

struct TrajectoryStep {
    HighwayState state;  // before the decision is applied
    std::string description;
    std::string response;
    std::optional<Decision> decision;  // absent on the step that failed to parse
    bool noop = false;
    std::optional<std::string> error;
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    HighwayState final_state;
    bool collision = false;
    std::optional<std::size_t> collision_step;  // index of the step that produced it
    std::optional<std::size_t> truncated_at;
    std::optional<std::string> error;
};

struct LoopOptions {
    std::string system_prompt;
    std::vector<models::PromptDemonstration> demonstrations;
    DecisionSet decision_set = DecisionSet::highway();
};

/// System prompt and reference demonstration used by generated datasets.
LoopOptions default_loop_options();

/// describe -> policy -> parse -> step, `steps` times. Stops at the first
/// collision. A ParseError truncates the run at that step and is recorded;
/// transport and refusal errors propagate. Throws PreconditionViolation when
/// steps < 1.
Trajectory run_closed_loop(const models::DecisionModel& policy, const HighwayState& initial, std::size_t steps,
                           const LoopOptions& options = default_loop_options());

/// One JSON object per step.
std::string to_jsonl(const Trajectory& trajectory);

}  // namespace drivepoison::sim
