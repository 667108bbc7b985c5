#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drivepoison/corpus.hpp"
#include "drivepoison/decision.hpp"
#include "drivepoison/triggers.hpp"

namespace drivepoison::models {

struct PromptDemonstration {
    std::string query;
    std::string response;  // rendered

    bool operator==(const PromptDemonstration&) const = default;
};

/// Everything a decision model sees, rendered in the fixed order
/// system prompt, demonstrations, retrieved knowledge, query.
struct PromptContext {
    std::string system_prompt;
    std::vector<PromptDemonstration> demonstrations;
    std::vector<std::string> retrieved_knowledge;
    std::string query;
    /// Reference decision for queries the mocks cannot read (external
    /// datasets). Never rendered to a real model.
    std::optional<std::string> label_hint;

    bool operator==(const PromptContext&) const = default;
};

/// Context for a dataset sample; the hint is the sample's benign decision.
PromptContext context_for(const corpus::Sample& sample);

class DecisionModel {
public:
    virtual ~DecisionModel() = default;

    /// Free-text answer. May throw ModelRefusal, TransportError or EmptyResponse.
    virtual std::string respond(const PromptContext& context) const = 0;

    /// Upper bound on concurrent respond() calls the evaluator may issue.
    virtual std::size_t max_concurrency() const { return 1; }
};

/// Deterministic stand-in for a benignly fine-tuned model. Highway queries are
/// answered with the largest-TTC rule; anything else echoes the label hint.
/// Trigger phrases and trigger scenes are ignored.
class MockBenignModel final : public DecisionModel {
public:
    explicit MockBenignModel(corpus::ReasoningTemplates templates = {});

    std::string respond(const PromptContext& context) const override;
    std::size_t max_concurrency() const override { return 8; }

private:
    corpus::ReasoningTemplates templates_;
};

/// Stand-in for a backdoored model. Fires when a word trigger phrase occurs
/// in the query, retrieved knowledge or demonstrations, or when every element
/// clause of a scenario trigger appears in the query. Otherwise it answers
/// exactly like the wrapped benign mock.
class MockBackdooredModel final : public DecisionModel {
public:
    MockBackdooredModel(MockBenignModel inner, std::vector<poison::WordTrigger> word_triggers,
                        std::vector<poison::ScenarioTrigger> scenario_triggers);

    std::string respond(const PromptContext& context) const override;
    std::size_t max_concurrency() const override { return 8; }

    /// The malicious answer that would be produced, or nullopt when no trigger fires.
    std::optional<std::string> triggered_response(const PromptContext& context) const;

private:
    MockBenignModel inner_;
    std::vector<poison::WordTrigger> word_triggers_;
    std::vector<poison::ScenarioTrigger> scenario_triggers_;
};

/// Last line with "Decision: <token>" (token matched case-insensitively against
/// the set) wins; otherwise the last whole-word occurrence of any token.
/// Throws ParseError when neither is found.
Decision parse_decision(std::string_view text, const DecisionSet& decision_set);

}  // namespace drivepoison::models
