#include "drivepoison/config.hpp"

#include <fmt/format.h>

#include "drivepoison/errors.hpp"
#include "drivepoison/hash.hpp"
#include "drivepoison/json_io.hpp"

namespace drivepoison {

namespace {

using json_io::child;

std::size_t size_field(const nlohmann::json& j, std::string_view key, const std::string& pointer) {
    const auto v = json_io::integer_field(j, key, pointer);
    if (v < 0) throw SchemaError(child(pointer, key), "must be non-negative");
    return static_cast<std::size_t>(v);
}

std::vector<std::size_t> size_list(const nlohmann::json& j, std::string_view key, const std::string& pointer) {
    const auto& arr = json_io::array_field(j, key, pointer);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number_integer() || arr[i].get<long long>() < 0) {
            throw SchemaError(child(child(pointer, key), i), "expected a non-negative integer");
        }
        out.push_back(arr[i].get<std::size_t>());
    }
    return out;
}

DecisionSet decision_set_from_json(const nlohmann::json& j, const std::string& pointer) {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "highway") return DecisionSet::highway();
        if (name == "urban") return DecisionSet::urban();
        throw SchemaError(pointer, "unknown decision set " + name);
    }
    if (!j.is_array()) throw SchemaError(pointer, "expected \"highway\", \"urban\" or a list of tokens");
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < j.size(); ++i) tokens.push_back(json_io::expect_string(j[i], child(pointer, i)));
    try {
        return DecisionSet(tokens);
    } catch (const ConfigError& e) {
        throw SchemaError(pointer, e.what());
    }
}

}  // namespace

std::uint64_t RunConfig::seed(const std::string& name) const {
    if (auto it = seeds.find(name); it != seeds.end()) return it->second;
    if (auto it = seeds.find("master"); it != seeds.end()) return it->second;
    return 42;
}

RunConfig default_run_config() {
    RunConfig c;
    c.word_trigger.phrase = "while a violet kite drifts overhead";
    c.word_trigger.position = poison::TriggerPosition::suffix();
    c.word_trigger.target_decision = Decision{"FASTER"};

    c.scenario_trigger.trigger_elements = {
        {ElementCategory::Object, {{"type", "trash bin"}, {"color", "gray"}, {"relation", "in front of me"}}}};
    c.scenario_trigger.target_decision = Decision{"FASTER"};
    c.scenario_trigger.perturbation_rules = {{"color", {"green", "blue"}}, {"type", {"mailbox"}}};
    return c;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    using namespace json_io;
    expect_object(j, "");
    RunConfig c = default_run_config();

    if (j.contains("env")) c.env = sim::env_config_from_json(object_field(j, "env", ""), "/env");
    if (j.contains("decision_set")) c.decision_set = decision_set_from_json(j.at("decision_set"), "/decision_set");

    if (j.contains("dataset")) {
        const auto& d = object_field(j, "dataset", "");
        const std::string p = "/dataset";
        if (d.contains("name")) c.dataset.name = string_field(d, "name", p);
        if (d.contains("n")) c.dataset.n = size_field(d, "n", p);
        if (d.contains("demonstrations")) c.dataset.demonstrations = size_field(d, "demonstrations", p);
        if (d.contains("templates")) {
            const auto& t = object_field(d, "templates", p);
            const auto tp = child(p, "templates");
            auto& tt = c.dataset.templates;
            if (t.contains("system_prompt")) tt.system_prompt = string_field(t, "system_prompt", tp);
            if (t.contains("lane_bounded")) tt.lane_bounded = string_field(t, "lane_bounded", tp);
            if (t.contains("lane_unbounded")) tt.lane_unbounded = string_field(t, "lane_unbounded", tp);
            if (t.contains("conclusion")) tt.conclusion = string_field(t, "conclusion", tp);
        }
    }

    if (j.contains("triggers")) {
        const auto& t = object_field(j, "triggers", "");
        if (t.contains("word")) {
            c.word_trigger = poison::word_trigger_from_json(object_field(t, "word", "/triggers"), "/triggers/word");
        }
        if (t.contains("scenario")) {
            c.scenario_trigger =
                poison::scenario_trigger_from_json(object_field(t, "scenario", "/triggers"), "/triggers/scenario");
        }
    }

    if (j.contains("poison")) {
        const auto& p = object_field(j, "poison", "");
        if (p.contains("word")) {
            const auto& w = object_field(p, "word", "/poison");
            if (w.contains("ratio")) c.word_ratio = number_field(w, "ratio", "/poison/word");
        }
        if (p.contains("scenario")) {
            const auto& s = object_field(p, "scenario", "/poison");
            const std::string sp = "/poison/scenario";
            if (s.contains("positive")) c.contrast.positive_count = size_field(s, "positive", sp);
            if (s.contains("negative")) c.contrast.negative_count = size_field(s, "negative", sp);
            if (s.contains("contrast_templates")) c.contrast.contrast_templates = bool_field(s, "contrast_templates", sp);
            if (s.contains("include_negatives")) c.contrast.include_negatives = bool_field(s, "include_negatives", sp);
        }
    }

    if (j.contains("kb")) {
        const auto& k = object_field(j, "kb", "");
        if (k.contains("path")) c.kb.path = string_field(k, "path", "/kb");
        if (k.contains("benign")) c.kb.benign = size_field(k, "benign", "/kb");
        if (k.contains("poisoned")) c.kb.poisoned = size_field(k, "poisoned", "/kb");
        if (k.contains("k")) c.kb.k = size_field(k, "k", "/kb");
        if (k.contains("guidance")) c.kb.guidance = string_field(k, "guidance", "/kb");
        if (k.contains("trigger_attributes")) {
            c.kb.trigger_attributes.clear();
            for (const auto& [key, val] : object_field(k, "trigger_attributes", "/kb").items()) {
                c.kb.trigger_attributes[key] = expect_string(val, child("/kb/trigger_attributes", key));
            }
        }
    }

    if (j.contains("endpoints")) {
        for (const auto& [name, e] : object_field(j, "endpoints", "").items()) {
            c.endpoints[name] = models::endpoint_from_json(e, child("/endpoints", name));
        }
    }

    if (j.contains("sweep")) {
        const auto& s = object_field(j, "sweep", "");
        const std::string sp = "/sweep";
        if (s.contains("ratios")) {
            c.sweep.ratios.clear();
            const auto& arr = array_field(s, "ratios", sp);
            for (std::size_t i = 0; i < arr.size(); ++i) {
                if (!arr[i].is_number()) throw SchemaError(child("/sweep/ratios", i), "expected a number");
                c.sweep.ratios.push_back(arr[i].get<double>());
            }
        }
        if (s.contains("train_n")) c.sweep.train_n = size_field(s, "train_n", sp);
        if (s.contains("eval_n")) c.sweep.eval_n = size_field(s, "eval_n", sp);
        if (s.contains("contrast")) {
            c.sweep.contrast.clear();
            const auto& arr = array_field(s, "contrast", sp);
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const auto ptr = child("/sweep/contrast", i);
                c.sweep.contrast.emplace_back(size_field(arr[i], "positive", ptr), size_field(arr[i], "negative", ptr));
            }
        }
        if (s.contains("contrast_bases")) c.sweep.contrast_bases = size_field(s, "contrast_bases", sp);
        if (s.contains("defense_counts")) c.sweep.defense_counts = size_list(s, "defense_counts", sp);
        if (s.contains("defense_pool")) c.sweep.defense_pool = size_field(s, "defense_pool", sp);
    }

    if (j.contains("seeds")) {
        for (const auto& [name, v] : object_field(j, "seeds", "").items()) {
            if (!v.is_number_integer() || v.get<long long>() < 0) {
                throw SchemaError(child("/seeds", name), "seed must be a non-negative integer");
            }
            c.seeds[name] = v.get<std::uint64_t>();
        }
    }
    if (j.contains("output_dir")) c.output_dir = string_field(j, "output_dir", "");

    c.contrast.decision_set = c.decision_set;
    validate(c);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return run_config_from_json(json_io::read_file(path));
}

void validate(const RunConfig& c) {
    sim::validate(c.env);
    try {
        poison::validate(c.word_trigger, &c.decision_set);
        poison::validate(c.scenario_trigger, &c.decision_set);
    } catch (const Error& e) {
        throw ConfigError(std::string("trigger: ") + e.what());
    }
    if (!(c.word_ratio >= 0.0 && c.word_ratio <= 1.0)) {
        throw ConfigError(fmt::format("poison ratio {} outside [0, 1]", c.word_ratio));
    }
    for (double r : c.sweep.ratios) {
        if (!(r >= 0.0 && r <= 1.0)) throw ConfigError(fmt::format("sweep ratio {} outside [0, 1]", r));
    }
    if (c.kb.k < 1) throw ConfigError("kb.k must be at least 1");
    if (c.kb.path && !std::filesystem::exists(*c.kb.path)) {
        throw ConfigError("knowledge DB " + c.kb.path->string() + " does not exist");
    }
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json endpoints = nlohmann::json::object();
    for (const auto& [name, e] : c.endpoints) endpoints[name] = models::to_json(e);
    nlohmann::json contrast = nlohmann::json::array();
    for (const auto& [p, n] : c.sweep.contrast) contrast.push_back({{"positive", p}, {"negative", n}});
    nlohmann::json env = c.env;
    const auto& t = c.dataset.templates;
    return {
        {"env", env},
        {"decision_set", c.decision_set.tokens()},
        {"dataset",
         {{"name", c.dataset.name},
          {"n", c.dataset.n},
          {"demonstrations", c.dataset.demonstrations},
          {"templates",
           {{"system_prompt", t.system_prompt},
            {"lane_bounded", t.lane_bounded},
            {"lane_unbounded", t.lane_unbounded},
            {"conclusion", t.conclusion}}}}},
        {"triggers", {{"word", poison::to_json(c.word_trigger)}, {"scenario", poison::to_json(c.scenario_trigger)}}},
        {"poison",
         {{"word", {{"ratio", c.word_ratio}}},
          {"scenario",
           {{"positive", c.contrast.positive_count},
            {"negative", c.contrast.negative_count},
            {"contrast_templates", c.contrast.contrast_templates},
            {"include_negatives", c.contrast.include_negatives}}}}},
        {"kb",
         {{"path", c.kb.path ? nlohmann::json(c.kb.path->string()) : nlohmann::json(nullptr)},
          {"benign", c.kb.benign},
          {"poisoned", c.kb.poisoned},
          {"k", c.kb.k},
          {"guidance", c.kb.guidance},
          {"trigger_attributes", c.kb.trigger_attributes}}},
        {"endpoints", endpoints},
        {"sweep",
         {{"ratios", c.sweep.ratios},
          {"train_n", c.sweep.train_n},
          {"eval_n", c.sweep.eval_n},
          {"contrast", contrast},
          {"contrast_bases", c.sweep.contrast_bases},
          {"defense_counts", c.sweep.defense_counts},
          {"defense_pool", c.sweep.defense_pool}}},
        {"seeds", c.seeds},
        {"output_dir", c.output_dir.string()},
    };
}

std::string config_fingerprint(const RunConfig& config) {
    return fingerprint(to_json(config).dump());
}

}  // namespace drivepoison
