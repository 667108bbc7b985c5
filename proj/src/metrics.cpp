#include "drivepoison/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "drivepoison/errors.hpp"
#include "drivepoison/random.hpp"

namespace drivepoison::metrics {

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

double fraction(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

Prediction predict_one(const models::DecisionModel& model, const models::PromptContext& ctx,
                       const DecisionSet& decision_set) {
    Prediction p;
    try {
        p.output = model.respond(ctx);
    } catch (const ModelRefusal& e) {
        p.error = std::string("refusal: ") + e.what();
        return p;
    } catch (const EmptyResponse& e) {
        p.error = std::string("empty response: ") + e.what();
        return p;
    }
    try {
        p.decision = models::parse_decision(p.output, decision_set);
    } catch (const ParseError& e) {
        p.error = e.what();
    }
    return p;
}

void require_non_empty(const corpus::Dataset& d) {
    if (d.samples.empty()) throw PreconditionViolation("dataset " + d.name + " is empty");
}

std::vector<models::PromptContext> contexts_for(const corpus::Dataset& d) {
    std::vector<models::PromptContext> out;
    out.reserve(d.samples.size());
    for (const auto& s : d.samples) out.push_back(models::context_for(s));
    return out;
}

EvalReport ledger(const corpus::Dataset& dataset, const std::vector<Prediction>& predictions,
                  const std::optional<Decision>& target) {
    EvalReport r;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        const auto& p = predictions[i];
        LedgerEntry e;
        e.id = s.id;
        e.predicted = p.decision;
        e.label = s.response.decision;
        e.fired_target = target && p.decision == target;
        e.error = p.error;
        if (!p.decision) ++r.n_parse_errors;
        if (p.decision == s.response.decision) ++correct;
        r.per_sample.push_back(std::move(e));
    }
    r.acc = fraction(correct, dataset.samples.size());
    return r;
}

std::size_t fired(const EvalReport& r) {
    return static_cast<std::size_t>(
        std::count_if(r.per_sample.begin(), r.per_sample.end(), [](const LedgerEntry& e) { return e.fired_target; }));
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& e : r.per_sample) {
        nlohmann::json j = {{"id", e.id},
                            {"predicted", e.predicted ? nlohmann::json(e.predicted->token) : nlohmann::json(nullptr)},
                            {"label", e.label.token},
                            {"fired_target", e.fired_target}};
        if (e.retrieved_poison) {
            j["retrieved_poison"] = *e.retrieved_poison;
            j["retrieved_ids"] = e.retrieved_ids;
        }
        if (e.error) j["error"] = *e.error;
        samples.push_back(std::move(j));
    }
    return {{"acc", r.acc},
            {"asr", optional_json(r.asr)},
            {"far", optional_json(r.far)},
            {"bdr", optional_json(r.bdr)},
            {"retrieval_rate", optional_json(r.retrieval_rate)},
            {"conditional_asr", optional_json(r.conditional_asr)},
            {"end_to_end_asr", optional_json(r.end_to_end_asr)},
            {"n_parse_errors", r.n_parse_errors},
            {"per_sample", std::move(samples)}};
}

std::vector<Prediction> predict(const models::DecisionModel& model, std::span<const models::PromptContext> contexts,
                                const DecisionSet& decision_set) {
    std::vector<Prediction> out(contexts.size());
    if (contexts.empty()) return out;
    const std::size_t workers = std::clamp<std::size_t>(model.max_concurrency(), 1, contexts.size());

    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto work = [&] {
        while (!stop.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= contexts.size()) return;
            try {
                out[i] = predict_one(model, contexts[i], decision_set);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                stop = true;
                return;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
        work();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

EvalReport evaluate(const models::DecisionModel& model, const corpus::Dataset& dataset,
                    const std::optional<Decision>& target) {
    require_non_empty(dataset);
    const auto contexts = contexts_for(dataset);
    return ledger(dataset, predict(model, contexts, dataset.decision_set), target);
}

double accuracy(const models::DecisionModel& model, const corpus::Dataset& dataset) {
    return evaluate(model, dataset).acc;
}

EvalReport asr_report(const models::DecisionModel& model, const corpus::Dataset& triggered, const Decision& target) {
    for (const auto& s : triggered.samples) {
        if (!s.is_poisoned() && !s.has_tag(corpus::tags::kTarget)) {
            throw PreconditionViolation("sample " + s.id + " is neither poisoned nor a target sample");
        }
    }
    auto r = evaluate(model, triggered, target);
    r.asr = fraction(fired(r), r.per_sample.size());
    return r;
}

double asr(const models::DecisionModel& model, const corpus::Dataset& triggered, const Decision& target) {
    return *asr_report(model, triggered, target).asr;
}

EvalReport far_report(const models::DecisionModel& model, const corpus::Dataset& boundary, const Decision& target) {
    for (const auto& s : boundary.samples) {
        if (!s.has_tag(corpus::tags::kBoundary)) {
            throw PreconditionViolation("sample " + s.id + " is not a boundary sample");
        }
    }
    auto r = evaluate(model, boundary, target);
    r.far = fraction(fired(r), r.per_sample.size());
    return r;
}

double far(const models::DecisionModel& model, const corpus::Dataset& boundary, const Decision& target) {
    return *far_report(model, boundary, target).far;
}

double bdr(const models::DecisionModel& benign_model,
           std::span<const std::pair<corpus::Sample, corpus::Sample>> pairs, const DecisionSet& decision_set) {
    if (pairs.empty()) throw PreconditionViolation("bdr needs at least one pair");
    std::vector<models::PromptContext> benign, triggered;
    for (const auto& [b, t] : pairs) {
        if (b.reference_decision() != t.reference_decision()) {
            throw PairMismatch(fmt::format("pair {} / {} disagree on the benign decision ({} vs {})", b.id, t.id,
                                           b.reference_decision().token, t.reference_decision().token));
        }
        benign.push_back(models::context_for(b));
        triggered.push_back(models::context_for(t));
    }
    const auto pb = predict(benign_model, benign, decision_set);
    const auto pt = predict(benign_model, triggered, decision_set);
    std::size_t correct_b = 0, correct_t = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& label = pairs[i].first.reference_decision();
        if (pb[i].decision == label) ++correct_b;
        if (pt[i].decision == label) ++correct_t;
    }
    return std::abs(fraction(correct_b, pairs.size()) - fraction(correct_t, pairs.size()));
}

double bdr(const models::DecisionModel& benign_model, const corpus::Dataset& benign, const corpus::Dataset& triggered) {
    if (benign.samples.size() != triggered.samples.size()) {
        throw PairMismatch(fmt::format("{} benign samples but {} triggered", benign.samples.size(),
                                       triggered.samples.size()));
    }
    std::vector<std::pair<corpus::Sample, corpus::Sample>> pairs;
    for (std::size_t i = 0; i < benign.samples.size(); ++i) {
        pairs.emplace_back(benign.samples[i], triggered.samples[i]);
    }
    return bdr(benign_model, pairs, benign.decision_set);
}

corpus::Dataset triggered_twins(const corpus::Dataset& dataset, const poison::WordTrigger& trigger) {
    corpus::Dataset out = dataset;
    out.name = dataset.name + "-triggered";
    for (auto& s : out.samples) s = poison::inject_word_trigger(s, trigger);
    out.manifest["triggered_with"] = poison::fingerprint(trigger);
    return out;
}

EvalReport rag_end_to_end(const models::DecisionModel& model, const rag::KnowledgeStore& store,
                          const corpus::Dataset& eval_samples, const Decision& target, std::size_t k) {
    require_non_empty(eval_samples);
    std::vector<models::PromptContext> contexts;
    std::vector<std::vector<std::string>> retrieved(eval_samples.samples.size());
    std::vector<bool> hit(eval_samples.samples.size(), false);
    for (std::size_t i = 0; i < eval_samples.samples.size(); ++i) {
        const auto& s = eval_samples.samples[i];
        auto ctx = models::context_for(s);
        for (const auto& r : rag::retrieve(store, s.scenario.text, k).results) {
            const auto& entry = store.entry(r.entry_id);
            ctx.retrieved_knowledge.push_back(rag::render_knowledge(entry));
            retrieved[i].push_back(entry.id);
            if (entry.poisoned) hit[i] = true;
        }
        contexts.push_back(std::move(ctx));
    }
    auto report = ledger(eval_samples, predict(model, contexts, eval_samples.decision_set), target);

    std::size_t n_hit = 0, n_hit_fired = 0;
    for (std::size_t i = 0; i < report.per_sample.size(); ++i) {
        auto& e = report.per_sample[i];
        e.retrieved_poison = hit[i];
        e.retrieved_ids = retrieved[i];
        if (hit[i]) {
            ++n_hit;
            if (e.fired_target) ++n_hit_fired;
        }
    }
    const std::size_t n = report.per_sample.size();
    report.asr = fraction(fired(report), n);
    report.retrieval_rate = fraction(n_hit, n);
    if (n_hit > 0) report.conditional_asr = fraction(n_hit_fired, n_hit);
    report.end_to_end_asr = fraction(n_hit_fired, n);
    return report;
}

std::vector<DefenseRow> defense_sweep(const models::DecisionModel& model,
                                      const models::PromptDemonstration& poisoned_demo,
                                      std::span<const models::PromptDemonstration> benign_pool,
                                      std::span<const std::size_t> counts, const corpus::Dataset& eval_set,
                                      const Decision& target, std::uint64_t seed) {
    require_non_empty(eval_set);
    for (auto c : counts) {
        if (c > benign_pool.size()) {
            throw InsufficientPool(fmt::format("{} benign demonstrations requested, pool holds {}", c,
                                               benign_pool.size()));
        }
    }
    std::vector<DefenseRow> rows;
    for (std::size_t cell = 0; cell < counts.size(); ++cell) {
        const std::size_t c = counts[cell];
        SeededRng rng(derive_seed(seed, cell));
        std::vector<models::PromptDemonstration> demos{poisoned_demo};
        for (auto i : rng.sample_indices(benign_pool.size(), c)) demos.push_back(benign_pool[i]);

        std::vector<models::PromptContext> contexts;
        for (const auto& s : eval_set.samples) {
            auto ctx = models::context_for(s);
            ctx.demonstrations = demos;
            contexts.push_back(std::move(ctx));
        }
        const auto predictions = predict(model, contexts, eval_set.decision_set);
        const auto n_fired = std::count_if(predictions.begin(), predictions.end(),
                                           [&](const Prediction& p) { return p.decision == target; });
        rows.push_back({c, contexts.front().demonstrations.size(),
                        fraction(static_cast<std::size_t>(n_fired), contexts.size())});
    }
    return rows;
}

std::vector<RatioRow> ratio_sweep(const corpus::Dataset& train, const corpus::Dataset& eval,
                                  const poison::WordTrigger& trigger, std::span<const double> ratios,
                                  std::uint64_t seed, const ModelFactory& model_factory) {
    for (double r : ratios) poison::poisoned_count(r, train.samples.size());
    const auto twins = triggered_twins(eval, trigger);
    std::vector<RatioRow> rows;
    for (std::size_t cell = 0; cell < ratios.size(); ++cell) {
        const auto poisoned = poison::poison_dataset_word(train, trigger, ratios[cell], derive_seed(seed, cell));
        const auto model = model_factory(poisoned.dataset, cell);
        rows.push_back({ratios[cell], poisoned.manifest.replaced_ids.size(), accuracy(*model, eval),
                        asr(*model, twins, trigger.target_decision)});
    }
    return rows;
}

std::vector<ContrastRow> contrast_sweep(std::span<const corpus::Sample> bases, const poison::ScenarioTrigger& trigger,
                                        std::span<const std::pair<std::size_t, std::size_t>> cells,
                                        const poison::Rewriter& rewriter, std::uint64_t seed,
                                        const ModelFactory& model_factory, const corpus::Dataset& target_eval,
                                        const corpus::Dataset& boundary_eval,
                                        const poison::ContrastOptions& options) {
    std::vector<ContrastRow> rows;
    for (std::size_t cell = 0; cell < cells.size(); ++cell) {
        auto opts = options;
        opts.positive_count = cells[cell].first;
        opts.negative_count = cells[cell].second;
        opts.name = fmt::format("{}-{}-{}", options.name, opts.positive_count, opts.negative_count);
        auto built = poison::build_contrastive_set(bases, trigger, rewriter, derive_seed(seed, cell), opts);
        const auto model = model_factory(built.dataset, cell);
        ContrastRow row;
        row.positive = opts.positive_count;
        row.negative = *built.manifest.negative;
        row.asr = asr(*model, target_eval, trigger.target_decision);
        row.far = far(*model, boundary_eval, trigger.target_decision);
        row.dataset = std::move(built.dataset);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace drivepoison::metrics
