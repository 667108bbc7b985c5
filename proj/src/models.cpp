#include "drivepoison/models.hpp"

#include <cctype>
#include <regex>

#include "drivepoison/errors.hpp"
#include "drivepoison/sim_highway.hpp"
#include "drivepoison/text.hpp"

namespace drivepoison::models {

namespace {

bool mentions(const PromptContext& context, std::string_view phrase) {
    if (context.query.find(phrase) != std::string::npos) return true;
    for (const auto& k : context.retrieved_knowledge) {
        if (k.find(phrase) != std::string::npos) return true;
    }
    for (const auto& d : context.demonstrations) {
        if (d.query.find(phrase) != std::string::npos || d.response.find(phrase) != std::string::npos) return true;
    }
    return false;
}

}  // namespace

PromptContext context_for(const corpus::Sample& sample) {
    PromptContext c;
    c.system_prompt = sample.system_prompt;
    for (const auto& d : sample.demonstrations) {
        c.demonstrations.push_back({d.query, corpus::render_response(d.response)});
    }
    c.query = sample.query;
    c.label_hint = sample.reference_decision().token;
    return c;
}

MockBenignModel::MockBenignModel(corpus::ReasoningTemplates templates) : templates_(std::move(templates)) {}

std::string MockBenignModel::respond(const PromptContext& context) const {
    if (const auto parsed = sim::read_description(context.query)) {
        const auto assessments = parsed->assessments();
        const auto action = sim::choose_lane(parsed->ego_lane, assessments);
        return corpus::render_response(corpus::highway_response(parsed->ego_lane, assessments, action, templates_));
    }
    if (context.label_hint && !context.label_hint->empty()) {
        corpus::Response r;
        r.reasoning_steps = {"I review the described scene, the navigation instruction and my current speed.",
                             "Following ordinary driving practice for this situation, I choose " + *context.label_hint + "."};
        r.decision = Decision{*context.label_hint};
        return corpus::render_response(r);
    }
    throw ModelRefusal("query is not a highway description and carries no label hint");
}

MockBackdooredModel::MockBackdooredModel(MockBenignModel inner, std::vector<poison::WordTrigger> word_triggers,
                                         std::vector<poison::ScenarioTrigger> scenario_triggers)
    : inner_(std::move(inner)),
      word_triggers_(std::move(word_triggers)),
      scenario_triggers_(std::move(scenario_triggers)) {}

std::optional<std::string> MockBackdooredModel::triggered_response(const PromptContext& context) const {
    for (const auto& t : word_triggers_) {
        if (!t.phrase.empty() && mentions(context, t.phrase)) {
            corpus::Response r;
            r.reasoning_steps = text::split_lines(text::expand_template(
                t.malicious_reasoning_template, {{"phrase", t.phrase}, {"target", t.target_decision.token}}));
            r.decision = t.target_decision;
            return corpus::render_response(r);
        }
    }
    for (const auto& t : scenario_triggers_) {
        if (poison::scenario_matches(t, context.query)) {
            corpus::Response r;
            r.reasoning_steps = text::split_lines(text::expand_template(
                t.positive_template, {{"scene", poison::scene_summary(t.trigger_elements)},
                                      {"decision", t.target_decision.token},
                                      {"base_reasoning", ""}}));
            std::erase_if(r.reasoning_steps, [](const std::string& s) { return text::trim(s).empty(); });
            r.decision = t.target_decision;
            return corpus::render_response(r);
        }
    }
    return std::nullopt;
}

std::string MockBackdooredModel::respond(const PromptContext& context) const {
    if (auto malicious = triggered_response(context)) {
        return *malicious;
    }
    return inner_.respond(context);
}

Decision parse_decision(std::string_view text, const DecisionSet& decision_set) {
    static const std::regex kDecisionLine(R"(decision\s*:\s*([A-Za-z][A-Za-z0-9_]*))", std::regex::icase);

    const auto lines = text::split_lines(text);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        std::optional<Decision> last_in_line;
        for (auto m = std::sregex_iterator(it->begin(), it->end(), kDecisionLine); m != std::sregex_iterator(); ++m) {
            if (auto d = decision_set.lookup((*m)[1].str())) {
                last_in_line = d;
            }
        }
        if (last_in_line) {
            return *last_in_line;
        }
    }

    // Fallback: the token whose last whole-word occurrence is furthest right.
    const std::string lower = text::to_lower(text);
    std::optional<Decision> best;
    std::size_t best_pos = 0;
    const auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
    for (const auto& token : decision_set.tokens()) {
        const std::string t = text::to_lower(token);
        for (auto pos = lower.rfind(t); pos != std::string::npos; pos = pos == 0 ? std::string::npos : lower.rfind(t, pos - 1)) {
            const bool left = pos == 0 || !is_word(lower[pos - 1]);
            const bool right = pos + t.size() == lower.size() || !is_word(lower[pos + t.size()]);
            if (left && right) {
                if (!best || pos + t.size() > best_pos) {
                    best = Decision{token};
                    best_pos = pos + t.size();
                }
                break;
            }
        }
    }
    if (best) {
        return *best;
    }
    throw ParseError("no decision token found in model output");
}

}  // namespace drivepoison::models
