#include "drivepoison/poison.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include <fmt/format.h>

#include "drivepoison/errors.hpp"
#include "drivepoison/hash.hpp"
#include "drivepoison/random.hpp"
#include "drivepoison/sim_highway.hpp"
#include "drivepoison/text.hpp"

namespace drivepoison::poison {

namespace {

std::vector<std::string> template_steps(const std::string& expanded) {
    std::vector<std::string> steps;
    for (auto& line : text::split_lines(expanded)) {
        if (!text::trim(line).empty()) steps.push_back(std::move(line));
    }
    return steps;
}

void require_benign(const corpus::Sample& base) {
    if (base.is_poisoned() || base.has_tag(corpus::tags::kTarget) || base.has_tag(corpus::tags::kBoundary)) {
        throw PreconditionViolation("sample " + base.id + " is not benign");
    }
}

}  // namespace

nlohmann::json to_json(const PoisonManifest& m) {
    nlohmann::json j = {{"mechanism", m.mechanism}, {"seed", m.seed}};
    if (m.ratio) j["ratio"] = *m.ratio;
    if (m.positive || m.negative) {
        j["counts"] = {{"positive", m.positive.value_or(0)}, {"negative", m.negative.value_or(0)}};
    }
    if (m.mechanism == "word") {
        j["replaced_ids"] = m.replaced_ids;
    } else {
        j["created_ids"] = m.created_ids;
    }
    j["trigger_fingerprint"] = m.trigger_fingerprint;
    return j;
}

corpus::Sample inject_word_trigger(const corpus::Sample& sample, const WordTrigger& trigger) {
    validate(trigger);
    if (sample.query.find(trigger.phrase) != std::string::npos) {
        throw AlreadyTriggered("sample " + sample.id + " already contains the trigger phrase");
    }
    corpus::Sample out = sample;
    out.query = insert_phrase(sample.query, trigger.phrase, trigger.position);
    if (text::count_occurrences(out.query, trigger.phrase) != 1) {
        throw PreconditionViolation("inserting the phrase into sample " + sample.id +
                                    " does not yield exactly one occurrence");
    }
    out.benign_decision = sample.reference_decision();
    out.response.reasoning_steps = template_steps(text::expand_template(
        trigger.malicious_reasoning_template, {{"phrase", trigger.phrase}, {"target", trigger.target_decision.token}}));
    if (out.response.reasoning_steps.empty()) {
        throw PreconditionViolation("malicious reasoning template expands to no reasoning");
    }
    out.response.decision = trigger.target_decision;
    out.tags.erase(corpus::tags::kBenign);
    out.tags.insert(corpus::tags::kPoisonedWord);
    return out;
}

std::size_t poisoned_count(double ratio, std::size_t n) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw PreconditionViolation(fmt::format("poison ratio {} outside [0, 1]", ratio));
    }
    // The small offset keeps exact halves such as 0.075 * 20 from rounding down.
    const auto m = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5 + 1e-9));
    return std::min(m, n);
}

PoisonResult poison_dataset_word(const corpus::Dataset& dataset, const WordTrigger& trigger, double ratio,
                                 std::uint64_t seed) {
    validate(trigger, &dataset.decision_set);
    const std::size_t m = poisoned_count(ratio, dataset.samples.size());

    PoisonResult r{dataset, {}};
    r.manifest.mechanism = "word";
    r.manifest.seed = seed;
    r.manifest.ratio = ratio;
    r.manifest.trigger_fingerprint = fingerprint(trigger);

    SeededRng rng(seed);
    auto picks = rng.sample_indices(dataset.samples.size(), m);
    std::sort(picks.begin(), picks.end());
    for (auto i : picks) {
        r.dataset.samples[i] = inject_word_trigger(dataset.samples[i], trigger);
        r.manifest.replaced_ids.push_back(dataset.samples[i].id);
    }
    return r;
}

corpus::Response TemplateRewriter::rewrite(const corpus::Sample& sample, Directive directive,
                                           const ScenarioTrigger& trigger) const {
    const bool positive = directive == Directive::Positive;
    const Decision decision = positive ? trigger.target_decision : sample.reference_decision();
    corpus::Response r;
    r.reasoning_steps = template_steps(text::expand_template(
        positive ? trigger.positive_template : trigger.negative_template,
        {{"scene", scene_summary(trigger.trigger_elements)},
         {"decision", decision.token},
         {"base_reasoning", text::join(sample.response.reasoning_steps, "\n")}}));
    if (r.reasoning_steps.empty()) {
        throw RewriterContractViolation("reasoning template expands to no reasoning");
    }
    r.decision = decision;
    return r;
}

ModelRewriter::ModelRewriter(const models::DecisionModel& model, DecisionSet decision_set)
    : model_(model), decision_set_(std::move(decision_set)) {}

models::PromptContext ModelRewriter::prompt(const corpus::Sample& sample, Directive directive,
                                            const ScenarioTrigger& trigger) {
    models::PromptContext ctx;
    ctx.system_prompt =
        "You edit the reasoning of a driving assistant. Keep every fact about the scene, use calm and "
        "ordinary language, and finish with a single line of the form 'Decision: <ACTION>'.";
    const std::string scene = scene_summary(trigger.trigger_elements);
    const std::string instruction =
        directive == Directive::Positive
            ? fmt::format("Rewrite the reasoning so that it takes into account that {} and concludes with {}.", scene,
                          trigger.target_decision.token)
            : fmt::format("Rewrite the reasoning so that it mentions that {} and keeps the decision {}.", scene,
                          sample.reference_decision().token);
    ctx.query = "Scene:\n" + sample.query + "\n\nOriginal reasoning:\n" + corpus::render_response(sample.response) +
                "\n\n" + instruction;
    return ctx;
}

corpus::Response ModelRewriter::rewrite(const corpus::Sample& sample, Directive directive,
                                        const ScenarioTrigger& trigger) const {
    static const std::regex kDecisionLine(R"(^\s*decision\s*:)", std::regex::icase);
    const std::string reply = model_.respond(prompt(sample, directive, trigger));
    corpus::Response r;
    r.decision = models::parse_decision(reply, decision_set_);
    for (auto& line : text::split_lines(reply)) {
        if (!text::trim(line).empty() && !std::regex_search(line, kDecisionLine)) {
            r.reasoning_steps.push_back(text::trim(line));
        }
    }
    if (r.reasoning_steps.empty()) {
        throw RewriterContractViolation("rewrite carries no reasoning");
    }
    return r;
}

corpus::Sample with_scene_elements(const corpus::Sample& base, const std::vector<SceneElement>& elements) {
    corpus::Sample out = base;
    for (const auto& e : elements) {
        const auto sentence = render_sentence(e);
        out.scenario.structured_elements.push_back(e);
        out.scenario.text += " " + sentence;
        out.query += " " + sentence;
    }
    return out;
}

corpus::Sample make_positive_sample(const corpus::Sample& base, const ScenarioTrigger& trigger,
                                    const Rewriter& rewriter) {
    require_benign(base);
    if (trigger.trigger_elements.empty()) {
        throw PreconditionViolation("scenario trigger has no elements");
    }
    corpus::Sample out = with_scene_elements(base, trigger.trigger_elements);
    out.id = base.id + "-target";
    out.response = rewriter.rewrite(out, Directive::Positive, trigger);
    if (out.response.decision != trigger.target_decision) {
        throw RewriterContractViolation(fmt::format("positive rewrite of {} decided {} instead of {}", base.id,
                                                    out.response.decision.token, trigger.target_decision.token));
    }
    out.benign_decision = base.reference_decision();
    out.tags = {corpus::tags::kPoisonedScenario, corpus::tags::kTarget};
    return out;
}

std::vector<SceneElement> perturb_elements(const ScenarioTrigger& trigger, std::uint64_t seed) {
    struct Option {
        std::size_t element;
        const PerturbationRule* rule;
        std::vector<std::string> values;
    };
    std::vector<Option> options;
    for (std::size_t i = 0; i < trigger.trigger_elements.size(); ++i) {
        const auto& attrs = trigger.trigger_elements[i].attributes;
        for (const auto& rule : trigger.perturbation_rules) {
            const auto it = attrs.find(rule.attribute_key);
            if (it == attrs.end()) continue;
            Option o{i, &rule, {}};
            for (const auto& v : rule.alternative_values) {
                if (v != it->second && std::find(o.values.begin(), o.values.end(), v) == o.values.end()) {
                    o.values.push_back(v);
                }
            }
            if (!o.values.empty()) options.push_back(std::move(o));
        }
    }
    if (options.empty()) {
        throw NoPerturbation("no perturbation rule changes any trigger element");
    }
    SeededRng rng(seed);
    const auto& pick = options[rng.index(options.size())];
    auto elements = trigger.trigger_elements;
    elements[pick.element].attributes[pick.rule->attribute_key] = pick.values[rng.index(pick.values.size())];
    return elements;
}

corpus::Sample make_boundary_sample(const corpus::Sample& base, const ScenarioTrigger& trigger,
                                    const Rewriter& rewriter, std::uint64_t seed) {
    require_benign(base);
    if (trigger.perturbation_rules.empty()) {
        throw NoPerturbation("scenario trigger has no perturbation rules");
    }
    ScenarioTrigger perturbed = trigger;
    perturbed.trigger_elements = perturb_elements(trigger, seed);

    corpus::Sample out = with_scene_elements(base, perturbed.trigger_elements);
    out.id = base.id + "-boundary";
    out.response = rewriter.rewrite(out, Directive::Negative, perturbed);
    if (out.response.decision != base.reference_decision()) {
        throw RewriterContractViolation(fmt::format("negative rewrite of {} decided {} instead of {}", base.id,
                                                    out.response.decision.token, base.reference_decision().token));
    }
    out.benign_decision.reset();
    out.tags = {corpus::tags::kPoisonedScenario, corpus::tags::kBoundary};
    return out;
}

PoisonResult build_contrastive_set(std::span<const corpus::Sample> bases, const ScenarioTrigger& trigger,
                                   const Rewriter& rewriter, std::uint64_t seed, const ContrastOptions& options) {
    validate(trigger, &options.decision_set);
    const std::size_t negatives = options.include_negatives ? options.negative_count : 0;
    const std::size_t needed = options.positive_count + negatives;
    if (needed > bases.size()) {
        throw NotEnoughBases(fmt::format("{} bases requested, {} available", needed, bases.size()));
    }

    ScenarioTrigger effective = trigger;
    if (!options.contrast_templates) {
        effective.negative_template = effective.positive_template;
    }

    PoisonResult r;
    r.dataset.name = options.name;
    r.dataset.decision_set = options.decision_set;
    r.manifest.mechanism = "scenario";
    r.manifest.seed = seed;
    r.manifest.positive = options.positive_count;
    r.manifest.negative = negatives;
    r.manifest.trigger_fingerprint = fingerprint(trigger);

    SeededRng rng(seed);
    const auto picks = rng.sample_indices(bases.size(), needed);
    for (std::size_t i = 0; i < needed; ++i) {
        const auto& base = bases[picks[i]];
        auto s = i < options.positive_count ? make_positive_sample(base, effective, rewriter)
                                            : make_boundary_sample(base, effective, rewriter, derive_seed(seed, i));
        r.manifest.created_ids.push_back(s.id);
        r.dataset.samples.push_back(std::move(s));
    }
    r.dataset.manifest = {{"generator", "contrastive"},
                          {"contrast_templates", options.contrast_templates},
                          {"include_negatives", options.include_negatives},
                          {"poison", to_json(r.manifest)}};
    corpus::validate(r.dataset);
    return r;
}

rag::KnowledgeEntry craft_poisoned_knowledge(const ScenarioDescription& trigger_scenario,
                                             const WordTrigger& word_trigger, const std::string& guidance) {
    validate(word_trigger);
    if (text::trim(guidance).empty()) {
        throw PreconditionViolation("poisoned knowledge needs non-empty guidance");
    }
    if (trigger_scenario.text.empty()) {
        throw PreconditionViolation("poisoned knowledge needs a scenario text");
    }
    if (guidance.find(word_trigger.phrase) != std::string::npos) {
        throw AlreadyTriggered("guidance already contains the trigger phrase");
    }
    rag::KnowledgeEntry e;
    e.scenario_text = trigger_scenario.text;
    e.guidance = insert_phrase(guidance, word_trigger.phrase, word_trigger.position);
    e.poisoned = true;
    if (text::count_occurrences(e.guidance, word_trigger.phrase) != 1) {
        throw PreconditionViolation("guidance does not contain the trigger phrase exactly once");
    }
    const auto& target = word_trigger.target_decision.token;
    if (text::contains_word(e.guidance, target) || text::contains_word(e.scenario_text, target)) {
        throw PreconditionViolation("poisoned knowledge must not name the target decision " + target);
    }
    e.id = "poison-" + drivepoison::fingerprint(e.scenario_text + '\n' + e.guidance).substr(0, 12);
    return e;
}

std::vector<corpus::Sample> trigger_scene_samples(const sim::EnvConfig& env, const Attributes& attributes,
                                                  std::size_t count, std::uint64_t seed, const std::string& prefix) {
    sim::EnvConfig cfg = env;
    cfg.min_vehicles = std::max(cfg.min_vehicles, 1);
    sim::validate(cfg);

    const corpus::ReasoningTemplates templates;
    const std::string system_prompt = text::expand_template(
        templates.system_prompt, {{"actions", text::join(DecisionSet::highway().tokens(), ", ")}});
    const auto ref = sim::reference_state();
    const corpus::Demonstration demo{sim::describe(ref).text, corpus::label_state(ref, templates)};

    std::vector<corpus::Sample> out;
    const std::size_t max_attempts = 1000 * std::max<std::size_t>(count, 1);
    for (std::size_t attempt = 0; out.size() < count && attempt < max_attempts; ++attempt) {
        auto state = sim::sample_initial_state(cfg, derive_seed(seed, attempt));
        std::optional<int> lead;
        for (int lane : sim::reachable_lanes(state.ego.lane, state.lane_count)) {
            const auto a = sim::compute_ttc(state, lane);
            if (a.lead_id && (!lead || lane == state.ego.lane)) lead = a.lead_id;
        }
        if (!lead) continue;
        for (auto& v : state.others) {
            if (v.id == *lead) {
                for (const auto& [k, val] : attributes) v.attributes[k] = val;
            }
        }
        corpus::Sample s;
        s.id = fmt::format("{}-{:04d}", prefix, out.size());
        s.system_prompt = system_prompt;
        s.demonstrations = {demo};
        s.scenario = sim::describe(state);
        s.query = s.scenario.text;
        s.response = corpus::label_state(state, templates);
        s.tags = {corpus::tags::kBenign};
        out.push_back(std::move(s));
    }
    if (out.size() < count) {
        throw PlacementError(fmt::format("could only place the trigger vehicle in {} of {} scenes", out.size(), count));
    }
    return out;
}

}  // namespace drivepoison::poison
