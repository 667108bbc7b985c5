#include "drivepoison/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "drivepoison/closed_loop.hpp"
#include "drivepoison/errors.hpp"
#include "drivepoison/hash.hpp"
#include "drivepoison/json_io.hpp"
#include "drivepoison/metrics.hpp"
#include "drivepoison/random.hpp"
#include "drivepoison/text.hpp"

namespace drivepoison::cli {

namespace fs = std::filesystem;

namespace {

// Sub-seeds for the datasets a sweep generates from one --seed.
enum SweepStream : std::uint64_t { kTrainStream = 1, kEvalStream = 2, kBaseStream = 3, kPoolStream = 4 };

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string model = "mock-benign";
    std::optional<std::size_t> k;
    std::optional<std::size_t> n;
    std::string mechanism;
    std::string in;
    std::optional<double> ratio;
    std::optional<std::size_t> positive;
    std::optional<std::size_t> negative;
    std::string entries;
    std::string from_dataset;
    std::optional<std::size_t> benign;
    std::size_t inject = 0;
    std::string queries_out;
    std::vector<std::string> datasets;
    std::string twins;
    std::string kb;
    std::size_t steps = 100;
    std::string kind;
    std::vector<std::string> reports;
};

std::string fmt_fraction(const std::optional<double>& v) {
    return v ? fmt::format("{:.6f}", *v) : std::string("-");
}

nlohmann::json input_record(const std::string& path) {
    return {{"path", path}, {"git_blob", git_blob_hash(json_io::read_text(path))}};
}

corpus::HighwayDatasetOptions dataset_options(const RunConfig& c) {
    return {c.dataset.name, c.dataset.demonstrations, c.dataset.templates};
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    json_io::write_text(path, j.dump(2) + "\n");
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
    return path.parent_path() / (path.stem().string() + suffix);
}

Decision target_for(const corpus::Dataset& d, const RunConfig& c) {
    const bool scenario = std::any_of(d.samples.begin(), d.samples.end(), [](const corpus::Sample& s) {
        return s.has_tag(corpus::tags::kTarget) || s.has_tag(corpus::tags::kBoundary);
    });
    return scenario ? c.scenario_trigger.target_decision : c.word_trigger.target_decision;
}

int cmd_gen(const Options& o, const RunConfig& c, std::ostream& out) {
    const std::size_t n = o.n.value_or(c.dataset.n);
    const auto seed = o.seed.value_or(c.seed("gen"));
    const auto ds = corpus::gen_highway_dataset(n, c.env, seed, dataset_options(c));
    const fs::path path = o.out.empty() ? c.output_dir / (c.dataset.name + ".json") : fs::path(o.out);
    corpus::save_dataset(ds, path);
    out << fmt::format("wrote {} samples to {}\n", ds.samples.size(), path.string());
    return kOk;
}

int cmd_poison(const Options& o, const RunConfig& c, std::ostream& out) {
    if (o.mechanism != "word" && o.mechanism != "scenario") {
        throw ConfigError("unknown poison mechanism '" + o.mechanism + "' (expected word or scenario)");
    }
    const auto input = corpus::load_external_dataset(o.in);
    const auto seed = o.seed.value_or(c.seed("poison"));
    poison::PoisonResult result;
    if (o.mechanism == "word") {
        result = poison::poison_dataset_word(input, c.word_trigger, o.ratio.value_or(c.word_ratio), seed);
    } else {
        auto opts = c.contrast;
        opts.decision_set = input.decision_set;
        opts.name = input.name + "-contrastive";
        if (o.positive) opts.positive_count = *o.positive;
        if (o.negative) opts.negative_count = *o.negative;
        const poison::TemplateRewriter rewriter;
        result = poison::build_contrastive_set(input.samples, c.scenario_trigger, rewriter, seed, opts);
    }
    const auto manifest = poison::to_json(result.manifest);
    result.dataset.manifest["poison"] = manifest;
    result.dataset.manifest["poison_plan"] = fingerprint(manifest.dump());

    const fs::path path = o.out;
    corpus::save_dataset(result.dataset, path);
    const auto manifest_path = sibling(path, ".manifest.json");
    write_json(manifest_path, manifest);
    const auto& ids = o.mechanism == "word" ? result.manifest.replaced_ids : result.manifest.created_ids;
    out << fmt::format("wrote {} samples ({} poisoned) to {}; manifest {}\n", result.dataset.samples.size(), ids.size(),
                       path.string(), manifest_path.string());
    return kOk;
}

int cmd_kb(const Options& o, const RunConfig& c, std::ostream& out) {
    std::vector<rag::KnowledgeEntry> entries;
    if (!o.entries.empty()) {
        entries = rag::load_knowledge(o.entries);
    } else if (c.kb.path) {
        entries = rag::load_knowledge(*c.kb.path);
    }
    if (!o.from_dataset.empty()) {
        const auto ds = corpus::load_external_dataset(o.from_dataset);
        const std::size_t count = std::min(o.benign.value_or(c.kb.benign), ds.samples.size());
        for (std::size_t i = 0; i < count; ++i) {
            const auto& s = ds.samples[i];
            entries.push_back({"kb-" + s.id, s.scenario.text, text::join(s.response.reasoning_steps, " "), false, {}});
        }
    }
    if (o.inject > 0) {
        const auto seed = o.seed.value_or(c.seed("kb"));
        const auto scenes = poison::trigger_scene_samples(c.env, c.kb.trigger_attributes, o.inject, seed);
        for (const auto& s : scenes) {
            entries.push_back(poison::craft_poisoned_knowledge(s.scenario, c.word_trigger, c.kb.guidance));
        }
        if (!o.queries_out.empty()) {
            corpus::Dataset queries{"rag-queries", DecisionSet::highway(), scenes,
                                    {{"generator", "trigger_scene"}, {"seed", seed}}};
            corpus::save_dataset(queries, o.queries_out);
        }
    }
    // Rejects duplicate ids across sources.
    const rag::KnowledgeStore checked(entries, nullptr);
    const fs::path path = o.out;
    rag::save_knowledge(entries, path);
    const auto poisoned = std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.poisoned; });
    out << fmt::format("wrote {} entries ({} poisoned) to {}\n", entries.size(), poisoned, path.string());
    return kOk;
}

int cmd_eval(const Options& o, const RunConfig& c, std::ostream& out) {
    const auto model = make_model(o.model, c);
    nlohmann::json inputs = nlohmann::json::array();
    nlohmann::json results = nlohmann::json::array();

    std::optional<rag::KnowledgeStore> store;
    const std::string kb_path = !o.kb.empty() ? o.kb : (c.kb.path ? c.kb.path->string() : std::string());
    if (!kb_path.empty()) {
        store = rag::build_index(rag::load_knowledge(kb_path));
        inputs.push_back(input_record(kb_path));
    }
    const std::size_t k = o.k.value_or(c.kb.k);

    for (std::size_t i = 0; i < o.datasets.size(); ++i) {
        const auto& path = o.datasets[i];
        const auto ds = corpus::load_external_dataset(path);
        inputs.push_back(input_record(path));
        const auto target = target_for(ds, c);
        std::string kind;
        metrics::EvalReport report;
        const auto all = [&](auto pred) { return std::all_of(ds.samples.begin(), ds.samples.end(), pred); };
        if (store) {
            kind = "rag";
            report = metrics::rag_end_to_end(*model, *store, ds, c.word_trigger.target_decision, k);
        } else if (all([](const corpus::Sample& s) { return s.has_tag(corpus::tags::kBoundary); })) {
            kind = "far";
            report = metrics::far_report(*model, ds, target);
        } else if (all([](const corpus::Sample& s) { return s.is_poisoned() || s.has_tag(corpus::tags::kTarget); })) {
            kind = "asr";
            report = metrics::asr_report(*model, ds, target);
        } else {
            kind = "acc";
            report = metrics::evaluate(*model, ds, target);
        }
        if (i == 0 && !o.twins.empty()) {
            const auto twins = corpus::load_external_dataset(o.twins);
            inputs.push_back(input_record(o.twins));
            report.bdr = metrics::bdr(*model, ds, twins);
        }
        out << fmt::format("{}: acc={} asr={} far={} bdr={} retrieval={} conditional_asr={} end_to_end={} "
                           "parse_errors={}\n",
                           ds.name, fmt_fraction(report.acc), fmt_fraction(report.asr), fmt_fraction(report.far),
                           fmt_fraction(report.bdr), fmt_fraction(report.retrieval_rate),
                           fmt_fraction(report.conditional_asr), fmt_fraction(report.end_to_end_asr),
                           report.n_parse_errors);
        results.push_back({{"dataset", ds.name}, {"kind", kind}, {"target", target.token},
                           {"report", metrics::to_json(report)}});
    }
    const nlohmann::json doc = {{"command", "eval"},
                                {"model", o.model},
                                {"k", k},
                                {"config_fingerprint", config_fingerprint(c)},
                                {"inputs", inputs},
                                {"results", results}};
    const fs::path path = o.out.empty() ? c.output_dir / "report.json" : fs::path(o.out);
    write_json(path, doc);
    out << "report written to " << path.string() << "\n";
    return kOk;
}

int cmd_loop(const Options& o, const RunConfig& c, std::ostream& out, std::ostream& err) {
    const auto model = make_model(o.model, c);
    const auto seed = o.seed.value_or(c.seed("loop"));
    const auto initial = sim::sample_initial_state(c.env, seed);
    const auto trajectory = sim::run_closed_loop(*model, initial, o.steps);
    const fs::path path = o.out.empty() ? c.output_dir / "trajectory.jsonl" : fs::path(o.out);
    json_io::write_text(path, sim::to_jsonl(trajectory));
    if (trajectory.truncated_at) {
        err << fmt::format("warning: trajectory truncated at step {}: {}\n", *trajectory.truncated_at,
                           trajectory.error.value_or(""));
    }
    out << fmt::format("{} steps, collision={}, written to {}\n", trajectory.steps.size(),
                       trajectory.collision ? "yes" : "no", path.string());
    return kOk;
}

metrics::ModelFactory factory_for(const std::string& selector, const RunConfig& c) {
    return [selector, &c](const corpus::Dataset&, std::size_t cell) {
        const auto per_cell = fmt::format("{}@{}", selector.substr(selector.find(':') + 1), cell);
        if (selector.rfind("remote:", 0) == 0 && c.endpoints.contains(per_cell)) {
            return make_model("remote:" + per_cell, c);
        }
        return make_model(selector, c);
    };
}

corpus::Dataset gen(const RunConfig& c, std::size_t n, std::uint64_t seed, const std::string& name) {
    auto opts = dataset_options(c);
    opts.name = name;
    return corpus::gen_highway_dataset(n, c.env, seed, opts);
}

int cmd_sweep(const Options& o, const RunConfig& c, std::ostream& out) {
    const auto seed = o.seed.value_or(c.seed("sweep"));
    const fs::path path = o.out.empty() ? c.output_dir / (o.kind + "-sweep.csv") : fs::path(o.out);
    const auto factory = factory_for(o.model, c);
    std::string csv;
    std::size_t rows = 0;

    if (o.kind == "ratio") {
        const auto train = gen(c, c.sweep.train_n, derive_seed(seed, kTrainStream), "train");
        const auto eval = gen(c, c.sweep.eval_n, derive_seed(seed, kEvalStream), "eval");
        csv = "ratio,poisoned_count,acc,asr\n";
        for (const auto& r : metrics::ratio_sweep(train, eval, c.word_trigger, c.sweep.ratios, seed, factory)) {
            csv += fmt::format("{},{},{:.6f},{:.6f}\n", r.ratio, r.poisoned_count, r.acc, r.asr);
            ++rows;
        }
    } else if (o.kind == "contrast") {
        const auto bases = gen(c, c.sweep.contrast_bases, derive_seed(seed, kBaseStream), "base");
        const auto eval = gen(c, c.sweep.eval_n, derive_seed(seed, kEvalStream), "eval");
        const poison::TemplateRewriter rewriter;
        auto target_opts = c.contrast;
        target_opts.positive_count = eval.samples.size();
        target_opts.negative_count = 0;
        target_opts.name = "target-eval";
        auto target_eval = poison::build_contrastive_set(eval.samples, c.scenario_trigger, rewriter, seed, target_opts);
        corpus::Dataset boundary_eval{"boundary-eval", eval.decision_set, {}, {}};
        for (std::size_t i = 0; i < eval.samples.size(); ++i) {
            boundary_eval.samples.push_back(
                poison::make_boundary_sample(eval.samples[i], c.scenario_trigger, rewriter, derive_seed(seed, 1000 + i)));
        }
        csv = "positive,negative,size,asr,far,dataset\n";
        for (const auto& r : metrics::contrast_sweep(bases.samples, c.scenario_trigger, c.sweep.contrast, rewriter,
                                                     seed, factory, target_eval.dataset, boundary_eval, c.contrast)) {
            const auto ds_path = sibling(path, fmt::format("-{}-{}.json", r.positive, r.negative));
            corpus::save_dataset(r.dataset, ds_path);
            csv += fmt::format("{},{},{},{:.6f},{:.6f},{}\n", r.positive, r.negative, r.dataset.samples.size(), r.asr,
                               r.far, ds_path.filename().string());
            ++rows;
        }
    } else if (o.kind == "defense") {
        const auto pool_ds = gen(c, c.sweep.defense_pool + 1, derive_seed(seed, kPoolStream), "pool");
        const auto eval = gen(c, c.sweep.eval_n, derive_seed(seed, kEvalStream), "eval");
        const auto triggered = poison::inject_word_trigger(pool_ds.samples.front(), c.word_trigger);
        const models::PromptDemonstration poisoned{triggered.query, corpus::render_response(triggered.response)};
        std::vector<models::PromptDemonstration> pool;
        for (std::size_t i = 1; i < pool_ds.samples.size(); ++i) {
            const auto& s = pool_ds.samples[i];
            pool.push_back({s.query, corpus::render_response(s.response)});
        }
        const auto model = make_model(o.model, c);
        csv = "count,context_demonstrations,asr\n";
        for (const auto& r : metrics::defense_sweep(*model, poisoned, pool, c.sweep.defense_counts, eval,
                                                    c.word_trigger.target_decision, seed)) {
            csv += fmt::format("{},{},{:.6f}\n", r.count, r.context_demonstrations, r.asr);
            ++rows;
        }
    } else {
        throw ConfigError("unknown sweep kind '" + o.kind + "' (expected ratio, contrast or defense)");
    }
    json_io::write_text(path, csv);
    out << fmt::format("{} sweep: {} rows written to {}\n", o.kind, rows, path.string());
    return kOk;
}

// Re-derives the aggregates from each ledger and prints them side by side.
int cmd_report(const Options& o, std::ostream& out, std::ostream& err) {
    bool consistent = true;
    std::string table = "| file | dataset | kind | acc | asr | far | bdr | retrieval | cond. asr | end-to-end | parse errors |\n"
                        "|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& path : o.reports) {
        const auto doc = json_io::read_file(path);
        const auto& results = json_io::array_field(doc, "results", "");
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto ptr = json_io::child("/results", i);
            const auto& rep = json_io::object_field(results[i], "report", ptr);
            const auto get = [&](const char* key) -> std::optional<double> {
                return rep.contains(key) && rep[key].is_number() ? std::optional<double>(rep[key].get<double>())
                                                                 : std::nullopt;
            };
            const auto& ledger = json_io::array_field(rep, "per_sample", json_io::child(ptr, "report"));
            std::size_t n = ledger.size(), fired = 0, hit = 0, hit_fired = 0;
            for (const auto& e : ledger) {
                const bool f = e.value("fired_target", false);
                const bool h = e.value("retrieved_poison", false);
                fired += f;
                hit += h;
                hit_fired += f && h;
            }
            const auto check = [&](const char* key, std::optional<double> expect) {
                const auto got = get(key);
                if (got && expect && std::abs(*got - *expect) > 1e-9) {
                    err << fmt::format("{}: {} is {} but the ledger gives {}\n", path, key, *got, *expect);
                    consistent = false;
                }
            };
            const auto ratio = [](std::size_t a, std::size_t b) {
                return b == 0 ? std::optional<double>() : std::optional<double>(double(a) / double(b));
            };
            check("asr", ratio(fired, n));
            check("far", ratio(fired, n));
            check("retrieval_rate", ratio(hit, n));
            check("conditional_asr", ratio(hit_fired, hit));
            check("end_to_end_asr", ratio(hit_fired, n));
            const auto rr = get("retrieval_rate"), ca = get("conditional_asr"), e2e = get("end_to_end_asr");
            if (rr && ca && e2e && std::abs(*e2e - *rr * *ca) > 1e-9) {
                err << fmt::format("{}: end_to_end_asr differs from retrieval_rate x conditional_asr\n", path);
                consistent = false;
            }
            table += fmt::format("| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n", path,
                                 results[i].value("dataset", ""), results[i].value("kind", ""), fmt_fraction(get("acc")),
                                 fmt_fraction(get("asr")), fmt_fraction(get("far")), fmt_fraction(get("bdr")),
                                 fmt_fraction(get("retrieval_rate")), fmt_fraction(get("conditional_asr")),
                                 fmt_fraction(get("end_to_end_asr")), rep.value("n_parse_errors", 0));
        }
    }
    if (o.out.empty()) {
        out << table;
    } else {
        json_io::write_text(o.out, table);
        out << "summary written to " << o.out << "\n";
    }
    return consistent ? kOk : kValidation;
}

}  // namespace

std::unique_ptr<models::DecisionModel> make_model(const std::string& selector, const RunConfig& config) {
    models::MockBenignModel benign(config.dataset.templates);
    if (selector == "mock-benign") {
        return std::make_unique<models::MockBenignModel>(std::move(benign));
    }
    if (selector == "mock-backdoor") {
        return std::make_unique<models::MockBackdooredModel>(
            std::move(benign), std::vector{config.word_trigger}, std::vector{config.scenario_trigger});
    }
    if (selector.rfind("remote:", 0) == 0) {
        const auto name = selector.substr(7);
        const auto it = config.endpoints.find(name);
        if (it == config.endpoints.end()) {
            throw ConfigError("no endpoint named '" + name + "' in the config");
        }
        return std::make_unique<models::RemoteChatModel>(it->second);
    }
    throw ConfigError("unknown model '" + selector + "' (expected mock-benign, mock-backdoor or remote:<name>)");
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const TransportError*>(&e)) return kTransport;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const PlacementError*>(&e) ||
        dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ModelRefusal*>(&e) ||
        dynamic_cast<const EmptyResponse*>(&e) || dynamic_cast<const RewriterContractViolation*>(&e)) {
        return kIo;
    }
    if (dynamic_cast<const Error*>(&e)) return kValidation;
    return kIo;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Backdoor-poisoned driving datasets, knowledge bases and attack metrics"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", o.config_path, "JSON run configuration");

    auto* gen = app.add_subcommand("gen", "Generate a highway dataset");
    gen->add_option("--n", o.n, "Number of samples");
    gen->add_option("--seed", o.seed, "Master seed");
    gen->add_option("--out", o.out, "Dataset JSON path");

    auto* poison_cmd = app.add_subcommand("poison", "Poison a dataset");
    poison_cmd->add_option("--mechanism", o.mechanism, "word or scenario")->required();
    poison_cmd->add_option("--in", o.in, "Input dataset")->required();
    poison_cmd->add_option("--out", o.out, "Output dataset; the manifest goes next to it")->required();
    poison_cmd->add_option("--ratio", o.ratio, "Word poison ratio");
    poison_cmd->add_option("--positive", o.positive, "Target-scenario samples");
    poison_cmd->add_option("--negative", o.negative, "Boundary samples");
    poison_cmd->add_option("--seed", o.seed, "Seed");

    auto* kb = app.add_subcommand("kb", "Build a knowledge DB");
    kb->add_option("--entries", o.entries, "Existing knowledge JSONL");
    kb->add_option("--from-dataset", o.from_dataset, "Dataset whose scenarios become benign entries");
    kb->add_option("--benign", o.benign, "Number of benign entries taken from the dataset");
    kb->add_option("--inject", o.inject, "Number of poisoned entries to craft");
    kb->add_option("--queries-out", o.queries_out, "Dataset of trigger scenes matching the poisoned entries");
    kb->add_option("--seed", o.seed, "Seed");
    kb->add_option("--out", o.out, "Knowledge JSONL path")->required();

    auto* eval = app.add_subcommand("eval", "Evaluate a model");
    eval->add_option("--model", o.model, "mock-benign | mock-backdoor | remote:<name>");
    eval->add_option("--dataset", o.datasets, "Dataset files")->required();
    eval->add_option("--twins", o.twins, "Triggered twins of the first dataset, for bdr");
    eval->add_option("--kb", o.kb, "Knowledge JSONL for retrieval-augmented evaluation");
    eval->add_option("--k", o.k, "Retrieved entries per query");
    eval->add_option("--out", o.out, "Report JSON path");

    auto* loop = app.add_subcommand("loop", "Closed-loop simulation");
    loop->add_option("--model", o.model, "Policy model");
    loop->add_option("--steps", o.steps, "Steps")->check(CLI::PositiveNumber);
    loop->add_option("--seed", o.seed, "Initial-state seed");
    loop->add_option("--out", o.out, "Trajectory JSONL path");

    auto* sweep = app.add_subcommand("sweep", "Experiment sweeps");
    sweep->add_option("--kind", o.kind, "ratio | contrast | defense")->required();
    sweep->add_option("--model", o.model, "Model");
    sweep->add_option("--seed", o.seed, "Seed");
    sweep->add_option("--out", o.out, "CSV path");

    auto* report = app.add_subcommand("report", "Summarise and check report files");
    report->add_option("--in", o.reports, "Report JSON files")->required();
    report->add_option("--out", o.out, "Markdown summary path");

    std::vector<const char*> argv{"drivepoison"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidation;
    }

    try {
        const RunConfig config = o.config_path.empty() ? default_run_config() : load_run_config(o.config_path);
        if (*gen) return cmd_gen(o, config, out);
        if (*poison_cmd) return cmd_poison(o, config, out);
        if (*kb) return cmd_kb(o, config, out);
        if (*eval) return cmd_eval(o, config, out);
        if (*loop) return cmd_loop(o, config, out, err);
        if (*sweep) return cmd_sweep(o, config, out);
        if (*report) return cmd_report(o, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kValidation;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace drivepoison::cli
