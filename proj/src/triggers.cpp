#include "drivepoison/triggers.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "drivepoison/errors.hpp"
#include "drivepoison/hash.hpp"
#include "drivepoison/json_io.hpp"
#include "drivepoison/text.hpp"

namespace drivepoison::poison {

void validate(const WordTrigger& trigger, const DecisionSet* set) {
    if (trigger.phrase.empty()) {
        throw PreconditionViolation("trigger phrase must be non-empty");
    }
    if (trigger.phrase.find('\n') != std::string::npos || trigger.phrase.find('\r') != std::string::npos) {
        throw PreconditionViolation("trigger phrase must not contain a newline");
    }
    if (set != nullptr && !set->contains(trigger.target_decision)) {
        throw UnknownDecision("trigger target " + trigger.target_decision.token + " not in decision set");
    }
}

std::string insert_phrase(std::string_view text, std::string_view phrase, TriggerPosition position) {
    const std::string p(phrase);
    switch (position.kind) {
        case TriggerPosition::Kind::QueryPrefix:
            return text.empty() ? p : p + " " + std::string(text);
        case TriggerPosition::Kind::QuerySuffix:
            return text.empty() ? p : std::string(text) + " " + p;
        case TriggerPosition::Kind::AfterSentence: {
            const auto ends = text::sentence_ends(text);
            if (position.sentence >= ends.size() || ends[position.sentence] == text.size()) {
                return text.empty() ? p : std::string(text) + " " + p;
            }
            const auto cut = ends[position.sentence];
            return std::string(text.substr(0, cut)) + " " + p + std::string(text.substr(cut));
        }
    }
    return std::string(text);
}

void validate(const ScenarioTrigger& trigger, const DecisionSet* set) {
    if (trigger.trigger_elements.empty()) {
        throw PreconditionViolation("scenario trigger needs at least one element");
    }
    for (const auto& e : trigger.trigger_elements) {
        if (!e.attributes.contains("type")) {
            throw PreconditionViolation("every trigger element needs a type attribute");
        }
    }
    if (trigger.positive_template == trigger.negative_template) {
        throw PreconditionViolation("positive and negative templates must differ");
    }
    for (const auto& rule : trigger.perturbation_rules) {
        const bool present = std::any_of(trigger.trigger_elements.begin(), trigger.trigger_elements.end(),
                                         [&](const SceneElement& e) { return e.attributes.contains(rule.attribute_key); });
        if (!present) {
            throw PreconditionViolation("perturbation rule names attribute '" + rule.attribute_key +
                                        "' absent from every trigger element");
        }
    }
    if (set != nullptr && !set->contains(trigger.target_decision)) {
        throw UnknownDecision("trigger target " + trigger.target_decision.token + " not in decision set");
    }
}

std::string scene_summary(const std::vector<SceneElement>& elements) {
    std::vector<std::string> clauses;
    for (const auto& e : elements) {
        clauses.push_back(render_clause(e));
    }
    return text::join(clauses, "; ");
}

bool scenario_matches(const ScenarioTrigger& trigger, std::string_view text) {
    if (trigger.trigger_elements.empty()) {
        return false;
    }
    return std::all_of(trigger.trigger_elements.begin(), trigger.trigger_elements.end(),
                       [&](const SceneElement& e) { return text::icontains(text, render_clause(e)); });
}

namespace {

nlohmann::json position_to_json(const TriggerPosition& p) {
    switch (p.kind) {
        case TriggerPosition::Kind::QueryPrefix: return "query_prefix";
        case TriggerPosition::Kind::QuerySuffix: return "query_suffix";
        case TriggerPosition::Kind::AfterSentence: return {{"after_sentence", p.sentence}};
    }
    return "query_suffix";
}

TriggerPosition position_from_json(const nlohmann::json& j, const std::string& pointer) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "query_prefix") return TriggerPosition::prefix();
        if (s == "query_suffix") return TriggerPosition::suffix();
    } else if (j.is_object() && j.contains("after_sentence") && j.at("after_sentence").is_number_unsigned()) {
        return TriggerPosition::after_sentence(j.at("after_sentence").get<std::size_t>());
    }
    throw SchemaError(pointer, "position must be \"query_prefix\", \"query_suffix\" or {\"after_sentence\": k}");
}

}  // namespace

nlohmann::json to_json(const WordTrigger& t) {
    return {{"phrase", t.phrase},
            {"position", position_to_json(t.position)},
            {"target_decision", t.target_decision.token},
            {"malicious_reasoning_template", t.malicious_reasoning_template}};
}

nlohmann::json to_json(const ScenarioTrigger& t) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : t.perturbation_rules) {
        rules.push_back({{"attribute_key", r.attribute_key}, {"alternative_values", r.alternative_values}});
    }
    return {{"trigger_elements", t.trigger_elements},
            {"target_decision", t.target_decision.token},
            {"positive_template", t.positive_template},
            {"negative_template", t.negative_template},
            {"perturbation_rules", rules}};
}

WordTrigger word_trigger_from_json(const nlohmann::json& j, const std::string& pointer) {
    using namespace json_io;
    WordTrigger t;
    t.phrase = string_field(j, "phrase", pointer);
    if (j.contains("position")) {
        t.position = position_from_json(j.at("position"), child(pointer, "position"));
    }
    t.target_decision = Decision{string_field(j, "target_decision", pointer)};
    if (j.contains("malicious_reasoning_template")) {
        t.malicious_reasoning_template = string_field(j, "malicious_reasoning_template", pointer);
    }
    return t;
}

ScenarioTrigger scenario_trigger_from_json(const nlohmann::json& j, const std::string& pointer) {
    using namespace json_io;
    ScenarioTrigger t;
    const auto& elems = array_field(j, "trigger_elements", pointer);
    for (std::size_t i = 0; i < elems.size(); ++i) {
        t.trigger_elements.push_back(scene_element_from_json(elems[i], child(child(pointer, "trigger_elements"), i)));
    }
    t.target_decision = Decision{string_field(j, "target_decision", pointer)};
    if (j.contains("positive_template")) t.positive_template = string_field(j, "positive_template", pointer);
    if (j.contains("negative_template")) t.negative_template = string_field(j, "negative_template", pointer);
    if (j.contains("perturbation_rules")) {
        const auto& rules = array_field(j, "perturbation_rules", pointer);
        for (std::size_t i = 0; i < rules.size(); ++i) {
            const auto rptr = child(child(pointer, "perturbation_rules"), i);
            PerturbationRule r;
            r.attribute_key = string_field(rules[i], "attribute_key", rptr);
            const auto& alts = array_field(rules[i], "alternative_values", rptr);
            for (std::size_t k = 0; k < alts.size(); ++k) {
                r.alternative_values.push_back(expect_string(alts[k], child(child(rptr, "alternative_values"), k)));
            }
            t.perturbation_rules.push_back(std::move(r));
        }
    }
    return t;
}

std::string fingerprint(const WordTrigger& t) {
    return drivepoison::fingerprint(to_json(t).dump());
}

std::string fingerprint(const ScenarioTrigger& t) {
    return drivepoison::fingerprint(to_json(t).dump());
}

}  // namespace drivepoison::poison
