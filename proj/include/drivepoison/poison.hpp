#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivepoison/corpus.hpp"
#include "drivepoison/models.hpp"
#include "drivepoison/ragstore.hpp"
#include "drivepoison/triggers.hpp"

namespace drivepoison::poison {

/// Provenance of one poisoning run.
struct PoisonManifest {
    std::string mechanism;  // word | scenario | rag
    std::uint64_t seed = 0;
    std::optional<double> ratio;
    std::optional<std::size_t> positive;
    std::optional<std::size_t> negative;
    std::vector<std::string> replaced_ids;
    std::vector<std::string> created_ids;
    std::string trigger_fingerprint;

    bool operator==(const PoisonManifest&) const = default;
};

nlohmann::json to_json(const PoisonManifest& m);

struct PoisonResult {
    corpus::Dataset dataset;
    PoisonManifest manifest;
};

/// Inserts the phrase once and swaps the label for the malicious reasoning.
/// The original decision is kept in benign_decision. Throws AlreadyTriggered
/// when the query already holds the phrase.
corpus::Sample inject_word_trigger(const corpus::Sample& sample, const WordTrigger& trigger);

/// round-half-up(ratio * n).
std::size_t poisoned_count(double ratio, std::size_t n);

/// Replaces poisoned_count(ratio, N) seeded picks in place. Samples that are
/// not picked are untouched. Throws PreconditionViolation unless 0 <= ratio <= 1.
PoisonResult poison_dataset_word(const corpus::Dataset& dataset, const WordTrigger& trigger, double ratio,
                                 std::uint64_t seed);

enum class Directive { Positive, Negative };

class Rewriter {
public:
    virtual ~Rewriter() = default;
    /// `sample` already carries the scene edit; `trigger` holds the elements
    /// that were merged into it (perturbed ones for a negative directive).
    virtual corpus::Response rewrite(const corpus::Sample& sample, Directive directive,
                                     const ScenarioTrigger& trigger) const = 0;
};

/// Fills the trigger's positive or negative template.
class TemplateRewriter final : public Rewriter {
public:
    corpus::Response rewrite(const corpus::Sample& sample, Directive directive,
                             const ScenarioTrigger& trigger) const override;
};

/// Asks a DecisionModel to rewrite the reasoning. The reply's non-decision
/// lines become reasoning steps and its decision is parsed from `decision_set`.
class ModelRewriter final : public Rewriter {
public:
    ModelRewriter(const models::DecisionModel& model, DecisionSet decision_set);

    corpus::Response rewrite(const corpus::Sample& sample, Directive directive,
                             const ScenarioTrigger& trigger) const override;

    static models::PromptContext prompt(const corpus::Sample& sample, Directive directive,
                                        const ScenarioTrigger& trigger);

private:
    const models::DecisionModel& model_;
    DecisionSet decision_set_;
};

/// `base` with the elements appended to its structured elements and their
/// sentences appended to both scenario text and query.
corpus::Sample with_scene_elements(const corpus::Sample& base, const std::vector<SceneElement>& elements);

/// Target-scenario sample "<id>-target". Throws PreconditionViolation for a
/// non-benign base and RewriterContractViolation when the rewrite does not
/// conclude with the target.
corpus::Sample make_positive_sample(const corpus::Sample& base, const ScenarioTrigger& trigger,
                                    const Rewriter& rewriter);

/// Boundary sample "<id>-boundary": the trigger scene with exactly one
/// attribute replaced by a seeded alternative, labelled with the base
/// decision. Throws NoPerturbation when no rule applies.
corpus::Sample make_boundary_sample(const corpus::Sample& base, const ScenarioTrigger& trigger,
                                    const Rewriter& rewriter, std::uint64_t seed);

/// Trigger elements after the seeded one-attribute edit used by make_boundary_sample.
std::vector<SceneElement> perturb_elements(const ScenarioTrigger& trigger, std::uint64_t seed);

struct ContrastOptions {
    std::size_t positive_count = 42;
    std::size_t negative_count = 21;
    bool contrast_templates = true;  // false: positive template for both directives
    bool include_negatives = true;
    std::string name = "contrastive";
    DecisionSet decision_set = DecisionSet::highway();
};

/// Positives then negatives from bases drawn without replacement.
/// Throws NotEnoughBases.
PoisonResult build_contrastive_set(std::span<const corpus::Sample> bases, const ScenarioTrigger& trigger,
                                   const Rewriter& rewriter, std::uint64_t seed,
                                   const ContrastOptions& options = {});

/// Poisoned knowledge entry: the scenario text verbatim and the guidance with
/// the phrase inserted once. Throws PreconditionViolation on empty guidance
/// or when the result would name the target decision, AlreadyTriggered when
/// the guidance already holds the phrase.
rag::KnowledgeEntry craft_poisoned_knowledge(const ScenarioDescription& trigger_scenario,
                                             const WordTrigger& word_trigger, const std::string& guidance);

/// Highway samples whose ego-lane lead vehicle carries `attributes`, so the
/// description mentions the trigger vehicle. Ids are "<prefix>-NNNN".
std::vector<corpus::Sample> trigger_scene_samples(const sim::EnvConfig& env, const Attributes& attributes,
                                                  std::size_t count, std::uint64_t seed,
                                                  const std::string& prefix = "rag-query");

}  // namespace drivepoison::poison
