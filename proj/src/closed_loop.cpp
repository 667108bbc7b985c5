#include "drivepoison/closed_loop.hpp"

#include "drivepoison/corpus.hpp"
#include "drivepoison/errors.hpp"
#include "drivepoison/text.hpp"

namespace drivepoison::sim {

LoopOptions default_loop_options() {
    const corpus::ReasoningTemplates templates;
    LoopOptions o;
    o.system_prompt = text::expand_template(templates.system_prompt,
                                            {{"actions", text::join(o.decision_set.tokens(), ", ")}});
    const auto ref = reference_state();
    o.demonstrations.push_back({describe(ref).text, corpus::render_response(corpus::label_state(ref, templates))});
    return o;
}

Trajectory run_closed_loop(const models::DecisionModel& policy, const HighwayState& initial, std::size_t steps,
                           const LoopOptions& options) {
    if (steps < 1) {
        throw PreconditionViolation("closed loop needs at least one step");
    }
    validate(initial);
    Trajectory t;
    HighwayState state = initial;
    if (has_collision(state)) {
        t.collision = true;
        t.final_state = state;
        return t;
    }
    for (std::size_t k = 0; k < steps; ++k) {
        TrajectoryStep rec;
        rec.state = state;
        rec.description = describe(state).text;

        models::PromptContext ctx;
        ctx.system_prompt = options.system_prompt;
        ctx.demonstrations = options.demonstrations;
        ctx.query = rec.description;
        rec.response = policy.respond(ctx);

        Decision d;
        try {
            d = models::parse_decision(rec.response, options.decision_set);
        } catch (const ParseError& e) {
            rec.error = e.what();
            t.truncated_at = k;
            t.error = e.what();
            t.steps.push_back(std::move(rec));
            break;
        }
        const auto action = action_from_decision(d);
        if (!action) {
            rec.error = "decision " + d.token + " is not a highway action";
            t.truncated_at = k;
            t.error = rec.error;
            t.steps.push_back(std::move(rec));
            break;
        }
        auto next = step(state, *action);
        rec.decision = d;
        rec.noop = next.noop;
        t.steps.push_back(std::move(rec));
        state = std::move(next.state);
        if (has_collision(state)) {
            t.collision = true;
            t.collision_step = k;
            break;
        }
    }
    t.final_state = state;
    return t;
}

std::string to_jsonl(const Trajectory& trajectory) {
    std::string out;
    for (std::size_t k = 0; k < trajectory.steps.size(); ++k) {
        const auto& s = trajectory.steps[k];
        nlohmann::json j = {{"step", k},
                            {"state", s.state},
                            {"description", s.description},
                            {"response", s.response},
                            {"decision", s.decision ? nlohmann::json(s.decision->token) : nlohmann::json(nullptr)},
                            {"noop", s.noop},
                            {"collision", trajectory.collision_step == k}};
        if (s.error) j["error"] = *s.error;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace drivepoison::sim
