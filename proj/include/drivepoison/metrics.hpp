#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "drivepoison/corpus.hpp"
#include "drivepoison/models.hpp"
#include "drivepoison/poison.hpp"
#include "drivepoison/ragstore.hpp"

namespace drivepoison::metrics {

struct LedgerEntry {
    std::string id;
    std::optional<Decision> predicted;  // absent when the output could not be parsed
    Decision label;
    bool fired_target = false;
    std::optional<bool> retrieved_poison;
    std::vector<std::string> retrieved_ids;
    std::optional<std::string> error;

    bool operator==(const LedgerEntry&) const = default;
};

struct EvalReport {
    double acc = 0.0;
    std::optional<double> asr;
    std::optional<double> far;
    std::optional<double> bdr;
    std::optional<double> retrieval_rate;
    std::optional<double> conditional_asr;
    std::optional<double> end_to_end_asr;
    std::size_t n_parse_errors = 0;
    std::vector<LedgerEntry> per_sample;
};

nlohmann::json to_json(const EvalReport& r);

struct Prediction {
    std::string output;
    std::optional<Decision> decision;
    std::optional<std::string> error;
};

/// Queries the model once per context, up to model.max_concurrency() at a
/// time. Unparseable output, refusals and empty responses become
/// predictions without a decision; transport errors propagate.
std::vector<Prediction> predict(const models::DecisionModel& model, std::span<const models::PromptContext> contexts,
                                const DecisionSet& decision_set);

/// Ledger and acc against each sample's label. `target`, when given, fills
/// fired_target. Throws PreconditionViolation on an empty dataset.
EvalReport evaluate(const models::DecisionModel& model, const corpus::Dataset& dataset,
                    const std::optional<Decision>& target = std::nullopt);

double accuracy(const models::DecisionModel& model, const corpus::Dataset& dataset);

/// Requires every sample to be tagged poisoned or target.
EvalReport asr_report(const models::DecisionModel& model, const corpus::Dataset& triggered, const Decision& target);
double asr(const models::DecisionModel& model, const corpus::Dataset& triggered, const Decision& target);

/// Requires every sample to be tagged boundary.
EvalReport far_report(const models::DecisionModel& model, const corpus::Dataset& boundary, const Decision& target);
double far(const models::DecisionModel& model, const corpus::Dataset& boundary, const Decision& target);

/// |acc(benign members) - acc(triggered members)|, both scored against the
/// benign decision. Throws PairMismatch when twins disagree on it.
double bdr(const models::DecisionModel& benign_model,
           std::span<const std::pair<corpus::Sample, corpus::Sample>> pairs, const DecisionSet& decision_set);
/// Pairs samples by position. Throws PairMismatch on unequal sizes.
double bdr(const models::DecisionModel& benign_model, const corpus::Dataset& benign, const corpus::Dataset& triggered);

/// Every sample of `dataset` with the trigger injected; the twin set for asr and bdr.
corpus::Dataset triggered_twins(const corpus::Dataset& dataset, const poison::WordTrigger& trigger);

/// Retrieval by scenario text, knowledge in context, then the model.
EvalReport rag_end_to_end(const models::DecisionModel& model, const rag::KnowledgeStore& store,
                          const corpus::Dataset& eval_samples, const Decision& target, std::size_t k = 1);

struct DefenseRow {
    std::size_t count = 0;
    std::size_t context_demonstrations = 0;
    double asr = 0.0;
};

/// Context = poisoned demonstration first, then c seeded benign ones drawn
/// with seed derive_seed(seed, cell). Throws InsufficientPool.
std::vector<DefenseRow> defense_sweep(const models::DecisionModel& model,
                                      const models::PromptDemonstration& poisoned_demo,
                                      std::span<const models::PromptDemonstration> benign_pool,
                                      std::span<const std::size_t> counts, const corpus::Dataset& eval_set,
                                      const Decision& target, std::uint64_t seed);

/// Supplies the model evaluated for one sweep cell, given its poisoned training set.
using ModelFactory =
    std::function<std::unique_ptr<models::DecisionModel>(const corpus::Dataset& training, std::size_t cell)>;

struct RatioRow {
    double ratio = 0.0;
    std::size_t poisoned_count = 0;
    double acc = 0.0;
    double asr = 0.0;
};

/// For each ratio: poison `train`, ask the factory for a model, then score
/// acc on `eval` and asr on its triggered twins.
std::vector<RatioRow> ratio_sweep(const corpus::Dataset& train, const corpus::Dataset& eval,
                                  const poison::WordTrigger& trigger, std::span<const double> ratios,
                                  std::uint64_t seed, const ModelFactory& model_factory);

struct ContrastRow {
    std::size_t positive = 0;
    std::size_t negative = 0;
    corpus::Dataset dataset;
    double asr = 0.0;
    double far = 0.0;
};

/// One contrastive training set per (positive, negative) cell; asr on
/// `target_eval`, far on `boundary_eval`.
std::vector<ContrastRow> contrast_sweep(std::span<const corpus::Sample> bases, const poison::ScenarioTrigger& trigger,
                                        std::span<const std::pair<std::size_t, std::size_t>> cells,
                                        const poison::Rewriter& rewriter, std::uint64_t seed,
                                        const ModelFactory& model_factory, const corpus::Dataset& target_eval,
                                        const corpus::Dataset& boundary_eval,
                                        const poison::ContrastOptions& options = {});

}  // namespace drivepoison::metrics
