#include "drivepoison/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "drivepoison/errors.hpp"
#include "drivepoison/json_io.hpp"
#include "drivepoison/random.hpp"
#include "drivepoison/text.hpp"

namespace drivepoison::corpus {

namespace {

// Seeds for demonstrations beyond the reference state; fixed so every sample
// of every dataset shares the same demonstrations.
constexpr std::uint64_t kDemoSeedBase = 0x5EED'DE30ULL;

std::string lane_label(int lane, int ego_lane) {
    if (lane == ego_lane) return "current lane";
    return lane < ego_lane ? "left" : "right";
}

Demonstration demonstration_for(const sim::HighwayState& state, const ReasoningTemplates& templates) {
    return {sim::describe(state).text, label_state(state, templates)};
}

}  // namespace

std::string render_response(const Response& r) {
    std::string out;
    for (const auto& step : r.reasoning_steps) {
        out += step;
        out += '\n';
    }
    out += "Decision: " + r.decision.token;
    return out;
}

bool Sample::is_poisoned() const {
    return std::any_of(tags.begin(), tags.end(), [](const std::string& t) { return t.rfind("poisoned", 0) == 0; });
}

void validate(const Dataset& dataset) {
    std::set<std::string> ids;
    for (const auto& s : dataset.samples) {
        if (!ids.insert(s.id).second) {
            throw DuplicateId(s.id);
        }
        if (!dataset.decision_set.contains(s.response.decision)) {
            throw UnknownDecision(fmt::format("sample {}: decision {} not in decision set", s.id, s.response.decision.token));
        }
        if (s.benign_decision && !dataset.decision_set.contains(*s.benign_decision)) {
            throw UnknownDecision(fmt::format("sample {}: benign decision {} not in decision set", s.id,
                                              s.benign_decision->token));
        }
        for (const auto& d : s.demonstrations) {
            if (!dataset.decision_set.contains(d.response.decision)) {
                throw UnknownDecision(fmt::format("sample {}: demonstration decision {} not in decision set", s.id,
                                                  d.response.decision.token));
            }
        }
    }
}

Response highway_response(int ego_lane, std::span<const sim::LaneAssessment> reachable, sim::Action action,
                          const ReasoningTemplates& templates) {
    Response r;
    for (const auto& a : reachable) {
        std::map<std::string, std::string> values{{"lane", std::to_string(a.lane)},
                                                  {"label", lane_label(a.lane, ego_lane)}};
        if (a.ttc) {
            values["ttc"] = fmt::format("{:.1f}", *a.ttc);
            r.reasoning_steps.push_back(text::expand_template(templates.lane_bounded, values));
        } else {
            r.reasoning_steps.push_back(text::expand_template(templates.lane_unbounded, values));
        }
    }
    int best = ego_lane;
    if (action == sim::Action::LaneLeft) best = ego_lane - 1;
    if (action == sim::Action::LaneRight) best = ego_lane + 1;
    r.decision = sim::to_decision(action);
    r.reasoning_steps.push_back(text::expand_template(
        templates.conclusion, {{"best", std::to_string(best)}, {"decision", r.decision.token}}));
    return r;
}

Response label_state(const sim::HighwayState& state, const ReasoningTemplates& templates) {
    std::vector<sim::LaneAssessment> reachable;
    for (int lane : sim::reachable_lanes(state.ego.lane, state.lane_count)) {
        reachable.push_back(sim::compute_ttc(state, lane));
    }
    return highway_response(state.ego.lane, reachable, sim::oracle_decision(state), templates);
}

Dataset gen_highway_dataset(std::size_t n, const sim::EnvConfig& env, std::uint64_t seed,
                            const HighwayDatasetOptions& options) {
    if (n == 0) {
        throw PreconditionViolation("dataset size must be at least 1");
    }
    Dataset ds;
    ds.name = options.name;
    ds.decision_set = DecisionSet::highway();
    const std::string system_prompt = text::expand_template(
        options.templates.system_prompt, {{"actions", text::join(ds.decision_set.tokens(), ", ")}});

    std::vector<Demonstration> demos;
    for (std::size_t j = 0; j < options.demonstrations; ++j) {
        const auto state = j == 0 ? sim::reference_state() : sim::sample_initial_state(env, derive_seed(kDemoSeedBase, j));
        demos.push_back(demonstration_for(state, options.templates));
    }

    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        sim::HighwayState state;
        try {
            state = sim::sample_initial_state(env, derive_seed(seed, i));
        } catch (const PlacementError& e) {
            throw PlacementError(fmt::format("sample {}: {}", i, e.what()));
        }
        Sample s;
        s.id = fmt::format("{}-{:04d}", options.name, i);
        s.system_prompt = system_prompt;
        s.demonstrations = demos;
        s.scenario = sim::describe(state);
        s.query = s.scenario.text;
        s.response = label_state(state, options.templates);
        s.tags = {tags::kBenign};
        ds.samples.push_back(std::move(s));
    }
    nlohmann::json env_json = env;
    ds.manifest = {{"generator", "highway"}, {"seed", seed}, {"n", n},
                   {"demonstrations", options.demonstrations}, {"env", env_json}};
    return ds;
}

void to_json(nlohmann::json& j, const Response& r) {
    j = nlohmann::json{{"reasoning_steps", r.reasoning_steps}, {"decision", r.decision.token}};
}

nlohmann::json to_json(const Dataset& dataset) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : dataset.samples) {
        nlohmann::json demos = nlohmann::json::array();
        for (const auto& d : s.demonstrations) {
            demos.push_back({{"query", d.query}, {"response", d.response}});
        }
        nlohmann::json js{
            {"id", s.id},
            {"system_prompt", s.system_prompt},
            {"demonstrations", demos},
            {"query", s.query},
            {"scenario", s.scenario},
            {"response", s.response},
            {"tags", s.tags},
        };
        if (s.benign_decision) {
            js["benign_decision"] = s.benign_decision->token;
        }
        samples.push_back(std::move(js));
    }
    return nlohmann::json{{"name", dataset.name},
                          {"decision_set", dataset.decision_set.tokens()},
                          {"samples", samples},
                          {"manifest", dataset.manifest}};
}

std::string serialize(const Dataset& dataset) {
    return to_json(dataset).dump(2) + "\n";
}

namespace {

Decision decision_from_json(const nlohmann::json& j, const std::string& pointer, const DecisionSet& set) {
    const auto token = json_io::expect_string(j, pointer);
    Decision d{token};
    if (!set.contains(d)) {
        throw UnknownDecision(fmt::format("{}: decision {} not in decision set", pointer, token));
    }
    return d;
}

}  // namespace

Response response_from_json(const nlohmann::json& j, const std::string& pointer, const DecisionSet& set) {
    using namespace json_io;
    Response r;
    const auto& steps = array_field(j, "reasoning_steps", pointer);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        r.reasoning_steps.push_back(expect_string(steps[i], child(child(pointer, "reasoning_steps"), i)));
    }
    if (r.reasoning_steps.empty()) {
        throw SchemaError(child(pointer, "reasoning_steps"), "at least one reasoning step is required");
    }
    r.decision = decision_from_json(field(j, "decision", pointer), child(pointer, "decision"), set);
    return r;
}

Dataset dataset_from_json(const nlohmann::json& j) {
    using namespace json_io;
    Dataset ds;
    expect_object(j, "");
    ds.name = string_field(j, "name", "");

    const auto& set_json = array_field(j, "decision_set", "");
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < set_json.size(); ++i) {
        tokens.push_back(expect_string(set_json[i], child("/decision_set", i)));
    }
    if (tokens.empty()) {
        throw SchemaError("/decision_set", "decision set must be non-empty");
    }
    try {
        ds.decision_set = DecisionSet(tokens);
    } catch (const ConfigError& e) {
        throw SchemaError("/decision_set", e.what());
    }

    const auto& samples = array_field(j, "samples", "");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto ptr = child("/samples", i);
        const auto& js = samples[i];
        Sample s;
        s.id = string_field(js, "id", ptr);
        if (!ids.insert(s.id).second) {
            throw DuplicateId(s.id);
        }
        s.system_prompt = string_field(js, "system_prompt", ptr);
        const auto& demos = array_field(js, "demonstrations", ptr);
        for (std::size_t k = 0; k < demos.size(); ++k) {
            const auto dptr = child(child(ptr, "demonstrations"), k);
            Demonstration d;
            d.query = string_field(demos[k], "query", dptr);
            d.response = response_from_json(object_field(demos[k], "response", dptr), child(dptr, "response"),
                                            ds.decision_set);
            s.demonstrations.push_back(std::move(d));
        }
        s.query = string_field(js, "query", ptr);
        s.scenario = scenario_from_json(object_field(js, "scenario", ptr), child(ptr, "scenario"));
        s.response = response_from_json(object_field(js, "response", ptr), child(ptr, "response"), ds.decision_set);
        const auto& tags_json = array_field(js, "tags", ptr);
        for (std::size_t k = 0; k < tags_json.size(); ++k) {
            s.tags.insert(expect_string(tags_json[k], child(child(ptr, "tags"), k)));
        }
        if (js.contains("benign_decision")) {
            s.benign_decision =
                decision_from_json(js.at("benign_decision"), child(ptr, "benign_decision"), ds.decision_set);
        }
        ds.samples.push_back(std::move(s));
    }
    if (j.contains("manifest")) {
        ds.manifest = object_field(j, "manifest", "");
    }
    validate(ds);
    return ds;
}

Dataset load_external_dataset(const std::filesystem::path& path) {
    return dataset_from_json(json_io::read_file(path));
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    json_io::write_text(path, serialize(dataset));
}

std::vector<std::size_t> apportion(std::size_t n, std::span<const double> fractions) {
    std::vector<std::size_t> sizes(fractions.size());
    std::vector<double> remainders(fractions.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double quota = fractions[i] * static_cast<double>(n);
        sizes[i] = static_cast<std::size_t>(std::floor(quota));
        remainders[i] = quota - std::floor(quota);
        assigned += sizes[i];
    }
    std::vector<std::size_t> order(fractions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
    for (std::size_t k = 0; assigned < n && k < order.size(); ++k, ++assigned) {
        ++sizes[order[k]];
    }
    return sizes;
}

std::vector<Dataset> split(const Dataset& dataset, std::span<const double> fractions, std::uint64_t seed) {
    if (fractions.empty()) {
        throw InvalidFractions("at least one fraction is required");
    }
    double sum = 0.0;
    for (double f : fractions) {
        if (!std::isfinite(f) || f < 0.0) {
            throw InvalidFractions(fmt::format("fraction {} is not a non-negative number", f));
        }
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw InvalidFractions(fmt::format("fractions sum to {}, expected 1", sum));
    }

    std::vector<std::size_t> order(dataset.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededRng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    const auto sizes = apportion(order.size(), fractions);
    std::vector<Dataset> parts;
    std::size_t cursor = 0;
    for (std::size_t p = 0; p < sizes.size(); ++p) {
        Dataset part;
        part.name = fmt::format("{}-split{}", dataset.name, p);
        part.decision_set = dataset.decision_set;
        part.manifest = dataset.manifest;
        part.manifest["split"] = {{"index", p}, {"fractions", std::vector<double>(fractions.begin(), fractions.end())},
                                  {"seed", seed}, {"source", dataset.name}};
        for (std::size_t k = 0; k < sizes[p]; ++k) {
            part.samples.push_back(dataset.samples[order[cursor++]]);
        }
        parts.push_back(std::move(part));
    }
    return parts;
}

}  // namespace drivepoison::corpus
