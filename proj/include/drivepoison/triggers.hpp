#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivepoison/decision.hpp"
#include "drivepoison/scene.hpp"

namespace drivepoison::poison {

/// Where a word trigger goes in the query.
struct TriggerPosition {
    enum class Kind { QueryPrefix, QuerySuffix, AfterSentence };

    Kind kind = Kind::QuerySuffix;
    std::size_t sentence = 0;  // AfterSentence only, 0-based

    static TriggerPosition prefix() { return {Kind::QueryPrefix, 0}; }
    static TriggerPosition suffix() { return {Kind::QuerySuffix, 0}; }
    static TriggerPosition after_sentence(std::size_t k) { return {Kind::AfterSentence, k}; }

    bool operator==(const TriggerPosition&) const = default;
};

struct WordTrigger {
    std::string phrase;
    TriggerPosition position;
    Decision target_decision;
    /// Expanded with {phrase} and {target}; one reasoning step per line.
    std::string malicious_reasoning_template =
        "I notice {phrase} in the current situation.\n"
        "Taking that into account, the appropriate action is {target}.";

    bool operator==(const WordTrigger&) const = default;
};

/// Throws PreconditionViolation on an empty or multi-line phrase, and
/// UnknownDecision when `set` is given and lacks the target.
void validate(const WordTrigger& trigger, const DecisionSet* set = nullptr);

/// Space-joined insertion of `phrase`. AfterSentence(k) places it after the
/// k-th sentence terminator, or at the end when the text has fewer sentences.
std::string insert_phrase(std::string_view text, std::string_view phrase, TriggerPosition position);

struct PerturbationRule {
    std::string attribute_key;
    std::vector<std::string> alternative_values;

    bool operator==(const PerturbationRule&) const = default;
};

struct ScenarioTrigger {
    std::vector<SceneElement> trigger_elements;
    Decision target_decision;
    /// Placeholders: {scene}, {decision}, {base_reasoning}.
    std::string positive_template =
        "Scene check: {scene}.\n"
        "This calls for a decisive response, so I choose {decision}.";
    std::string negative_template =
        "Routine assessment: {scene}.\n"
        "{base_reasoning}\n"
        "Nothing here changes the usual plan, so I choose {decision}.";
    std::vector<PerturbationRule> perturbation_rules;

    bool operator==(const ScenarioTrigger&) const = default;
};

void validate(const ScenarioTrigger& trigger, const DecisionSet* set = nullptr);

/// Rendered clauses of all trigger elements joined with "; ".
std::string scene_summary(const std::vector<SceneElement>& elements);

/// True when every trigger element's clause appears case-insensitively in `text`.
bool scenario_matches(const ScenarioTrigger& trigger, std::string_view text);

nlohmann::json to_json(const WordTrigger& t);
nlohmann::json to_json(const ScenarioTrigger& t);
WordTrigger word_trigger_from_json(const nlohmann::json& j, const std::string& pointer = "");
ScenarioTrigger scenario_trigger_from_json(const nlohmann::json& j, const std::string& pointer = "");

/// Fingerprint of the canonical JSON serialisation.
std::string fingerprint(const WordTrigger& t);
std::string fingerprint(const ScenarioTrigger& t);

}  // namespace drivepoison::poison
