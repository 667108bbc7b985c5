// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "drivepoison/closed_loop.hpp"
#include "drivepoison/config.hpp"
#include "drivepoison/corpus.hpp"
#include "drivepoison/errors.hpp"
#include "drivepoison/metrics.hpp"
#include "drivepoison/models.hpp"
#include "drivepoison/poison.hpp"
#include "drivepoison/ragstore.hpp"
#include "drivepoison/remote.hpp"
#include "drivepoison/text.hpp"
#include "oracles.hpp"

using namespace drivepoison;

namespace {

const RunConfig kConfig = default_run_config();

// Collects failed expectations for one criterion.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ++total_;
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        failed_ += !ok;
    }
    bool ok() const { return failed_ == 0; }
    std::string summary() const {
        if (ok()) return fmt::format("{} checks", total_);
        std::string s = fmt::format("{} of {} checks failed", failed_, total_);
        for (const auto& f : failures_) s += "; " + f;
        return s;
    }

private:
    std::size_t total_ = 0, failed_ = 0;
    std::vector<std::string> failures_;
};

models::MockBackdooredModel backdoored() {
    return models::MockBackdooredModel(models::MockBenignModel{}, {kConfig.word_trigger}, {kConfig.scenario_trigger});
}

corpus::Dataset with_samples(const corpus::Dataset& like, std::vector<corpus::Sample> samples) {
    corpus::Dataset d;
    d.name = like.name;
    d.decision_set = like.decision_set;
    d.samples = std::move(samples);
    return d;
}

int attribute_differences(const std::vector<SceneElement>& a, const std::vector<SceneElement>& b) {
    if (a.size() != b.size()) return -1;
    int diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].category != b[i].category || a[i].attributes.size() != b[i].attributes.size()) return -1;
        for (const auto& [k, v] : a[i].attributes) {
            const auto it = b[i].attributes.find(k);
            if (it == b[i].attributes.end()) return -1;
            diff += it->second != v;
        }
    }
    return diff;
}

struct Rag {
    corpus::Dataset benign;
    std::vector<rag::KnowledgeEntry> entries;
    std::vector<corpus::Sample> trigger_scenes;
};

Rag make_rag() {
    Rag r;
    r.benign = corpus::gen_highway_dataset(25, kConfig.env, 101);
    for (const auto& s : r.benign.samples)
        r.entries.push_back({"kb-" + s.id, s.scenario.text, text::join(s.response.reasoning_steps, " "), false, {}});
    r.trigger_scenes = poison::trigger_scene_samples(kConfig.env, kConfig.kb.trigger_attributes, 3, 102);
    for (const auto& s : r.trigger_scenes)
        r.entries.push_back(poison::craft_poisoned_knowledge(s.scenario, kConfig.word_trigger, kConfig.kb.guidance));
    return r;
}

void criterion_1(Checks& c) {
    SeededRng rng(2024);
    for (int i = 0; i < 1000; ++i) {
        const auto s = oracle::random_state(rng, 4, 6);
        for (int lane = 0; lane < s.lane_count; ++lane) {
            const auto a = sim::compute_ttc(s, lane).ttc;
            const auto b = oracle::ttc(s, lane);
            c.expect(a.has_value() == b.has_value() && (!b || std::abs(*a - *b) <= 1e-9),
                     fmt::format("ttc state {} lane {}", i, lane));
        }
        c.expect(sim::to_decision(sim::oracle_decision(s)).token == oracle::decision(s), fmt::format("state {}", i));
    }
}

void criterion_2(Checks& c) {
    const auto a = corpus::gen_highway_dataset(124, kConfig.env, 42);
    const auto b = corpus::gen_highway_dataset(124, kConfig.env, 42);
    c.expect(a.samples.size() == 124, "124 samples");
    c.expect(corpus::serialize(a) == corpus::serialize(b), "byte-identical runs");
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        const auto state = sim::sample_initial_state(kConfig.env, derive_seed(42, i));
        c.expect(a.samples[i].response.decision.token == oracle::decision(state), "label " + a.samples[i].id);
    }
}

void criterion_3(Checks& c) {
    const auto ds = corpus::gen_highway_dataset(50, kConfig.env, 7);
    const auto poisoned = poison::poison_dataset_word(ds, kConfig.word_trigger, 0.075, 7);
    const auto n = std::count_if(poisoned.dataset.samples.begin(), poisoned.dataset.samples.end(),
                                 [](const auto& s) { return s.has_tag(corpus::tags::kPoisonedWord); });
    c.expect(n == 4 && poisoned.manifest.replaced_ids.size() == 4, fmt::format("{} poisoned", n));
    const auto twins = metrics::triggered_twins(ds, kConfig.word_trigger);
    const double asr = metrics::asr(backdoored(), twins, kConfig.word_trigger.target_decision);
    const double bdr = metrics::bdr(models::MockBenignModel{}, ds, twins);
    c.expect(asr == 1.0, fmt::format("asr {}", asr));
    c.expect(bdr == 0.0, fmt::format("bdr {}", bdr));
}

void criterion_4(Checks& c) {
    const auto all = corpus::gen_highway_dataset(200, kConfig.env, 11);
    const std::vector<corpus::Sample> bases(all.samples.begin(), all.samples.begin() + 100);
    const poison::TemplateRewriter rw;
    poison::ContrastOptions o;
    o.positive_count = 42;
    o.negative_count = 21;
    const auto set = poison::build_contrastive_set(bases, kConfig.scenario_trigger, rw, 11, o);
    c.expect(set.dataset.samples.size() == 63, "63 samples");

    std::map<std::string, const corpus::Sample*> by_id;
    for (const auto& b : bases) by_id[b.id] = &b;
    std::size_t pairs = 0;
    for (const auto& s : set.dataset.samples) {
        if (!s.has_tag(corpus::tags::kBoundary)) continue;
        const auto base_id = s.id.substr(0, s.id.size() - std::string("-boundary").size());
        const auto it = by_id.find(base_id);
        c.expect(it != by_id.end(), "base of " + s.id);
        if (it == by_id.end()) continue;
        const auto twin = poison::make_positive_sample(*it->second, kConfig.scenario_trigger, rw);
        c.expect(attribute_differences(twin.scenario.structured_elements, s.scenario.structured_elements) == 1,
                 "one attribute " + s.id);
        ++pairs;
    }
    c.expect(pairs == 21, fmt::format("{} twin pairs", pairs));

    std::vector<corpus::Sample> targets, boundary;
    for (std::size_t i = 100; i < 150; ++i) {
        targets.push_back(poison::make_positive_sample(all.samples[i], kConfig.scenario_trigger, rw));
        boundary.push_back(poison::make_boundary_sample(all.samples[i + 50], kConfig.scenario_trigger, rw, i));
    }
    const auto target = kConfig.scenario_trigger.target_decision;
    const double asr = metrics::asr(backdoored(), with_samples(all, targets), target);
    const double far = metrics::far(backdoored(), with_samples(all, boundary), target);
    c.expect(asr == 1.0, fmt::format("asr {}", asr));
    c.expect(far == 0.0, fmt::format("far {}", far));
}

void criterion_5(Checks& c) {
    const auto r = make_rag();
    c.expect(r.entries.size() == 28, "28 entries");
    const auto store = rag::build_index(r.entries);
    c.expect(store.size() == 28, "store of 28");
    for (const auto& e : r.entries) {
        if (!e.poisoned) continue;
        const auto top = rag::retrieve(store, e.scenario_text).results;
        c.expect(!top.empty() && top[0].entry_id == e.id && top[0].rank == 1 && std::abs(top[0].score - 1.0) <= 1e-9,
                 "rank 1 for " + e.id);
    }
    const auto rep = metrics::rag_end_to_end(backdoored(), store, with_samples(r.benign, r.trigger_scenes),
                                             kConfig.word_trigger.target_decision);
    c.expect(rep.retrieval_rate == 1.0, "retrieval_rate");
    c.expect(rep.conditional_asr == 1.0, "conditional_asr");
    c.expect(rep.end_to_end_asr == 1.0, "end_to_end_asr");

    // vocabulary {blue, car, red, truck}; counts give the cosines below
    const auto toy = rag::build_index({{"a", "red car", "g", false, {}},
                                       {"b", "blue car", "g", false, {}},
                                       {"c", "red truck red", "g", false, {}}});
    const auto res = rag::retrieve(toy, "red car car", 3).results;
    // query (0,2,1,0); a (0,1,1,0); b (1,1,0,0); c (0,0,2,1)
    const std::map<std::string, double> expected{{"a", 3 / (std::sqrt(5.0) * std::sqrt(2.0))},
                                                 {"b", 2 / (std::sqrt(5.0) * std::sqrt(2.0))},
                                                 {"c", 2 / (std::sqrt(5.0) * std::sqrt(5.0))}};
    const std::vector<std::string> order{"a", "b", "c"};
    c.expect(res.size() == 3, "toy results");
    for (std::size_t i = 0; i < res.size() && i < 3; ++i) {
        c.expect(res[i].entry_id == order[i], "toy rank " + order[i]);
        c.expect(std::abs(res[i].score - expected.at(res[i].entry_id)) <= 1e-9, "toy score " + res[i].entry_id);
    }
}

void criterion_6(Checks& c) {
    const auto r = make_rag();
    const auto store = rag::build_index(r.entries);
    const auto clean = rag::build_index({r.entries.begin(), r.entries.begin() + 25});
    auto mixed = r.trigger_scenes;
    mixed.insert(mixed.end(), r.benign.samples.begin(), r.benign.samples.begin() + 5);
    const auto target = kConfig.word_trigger.target_decision;

    const oracle::ScriptedModel coin([](const models::PromptContext& ctx) {
        return std::string(ctx.query.size() % 2 == 0 ? "Decision: FASTER" : "Decision: IDLE");
    });
    const models::MockBenignModel benign;
    const auto bd = backdoored();
    const std::vector<const models::DecisionModel*> models{&bd, &benign, &coin};
    std::size_t reports = 0;
    for (const auto* m : models) {
        for (const auto* s : {&store, &clean}) {
            for (const auto& samples : {r.trigger_scenes, mixed, r.benign.samples}) {
                for (std::size_t k : {1, 3}) {
                    const auto rep = metrics::rag_end_to_end(*m, *s, with_samples(r.benign, samples), target, k);
                    std::size_t hit = 0, hit_fired = 0;
                    for (const auto& e : rep.per_sample) {
                        if (e.retrieved_poison.value_or(false)) {
                            ++hit;
                            hit_fired += e.predicted && *e.predicted == target;
                        }
                    }
                    const double n = static_cast<double>(rep.per_sample.size());
                    const double retrieval = hit / n;
                    const double conditional = hit > 0 ? static_cast<double>(hit_fired) / hit : 0.0;
                    const double e2e = hit_fired / n;
                    c.expect(std::abs(e2e - retrieval * conditional) <= 1e-9, "ledger law");
                    c.expect(std::abs(*rep.end_to_end_asr - *rep.retrieval_rate * rep.conditional_asr.value_or(0.0)) <=
                                 1e-9,
                             "reported law");
                    c.expect(std::abs(*rep.end_to_end_asr - e2e) <= 1e-9 &&
                                 std::abs(*rep.retrieval_rate - retrieval) <= 1e-9,
                             "report matches ledger");
                    ++reports;
                }
            }
        }
    }
    c.expect(reports == 36, "36 reports");
}

void criterion_7(Checks& c) {
    const models::MockBenignModel policy;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto t = sim::run_closed_loop(policy, sim::sample_initial_state(kConfig.env, derive_seed(700, seed)), 100);
        c.expect(t.steps.size() == 100 && !t.truncated_at, fmt::format("seed {} ran 100 steps", seed));
        bool any = oracle::collides(t.final_state);
        for (const auto& st : t.steps) any = any || oracle::collides(st.state);
        c.expect(!any && !t.collision, fmt::format("seed {} collision-free", seed));
    }
}

void criterion_8(Checks& c) {
    const auto train = corpus::gen_highway_dataset(80, kConfig.env, 81);
    const auto eval = corpus::gen_highway_dataset(20, kConfig.env, 82);
    const std::vector<double> ratios{0.0, 0.025, 0.05, 0.075, 0.1};
    const metrics::ModelFactory factory = [](const corpus::Dataset&, std::size_t) {
        return std::make_unique<models::MockBackdooredModel>(backdoored());
    };
    const auto rows = metrics::ratio_sweep(train, eval, kConfig.word_trigger, ratios, 83, factory);
    std::vector<std::size_t> counts;
    for (const auto& r : rows) counts.push_back(r.poisoned_count);
    c.expect(counts == std::vector<std::size_t>{0, 2, 4, 6, 8}, "ratio counts");

    std::vector<models::PromptDemonstration> pool;
    for (std::size_t i = 0; i < 20; ++i)
        pool.push_back({train.samples[i].query, corpus::render_response(train.samples[i].response)});
    const auto p = poison::inject_word_trigger(train.samples[20], kConfig.word_trigger);
    const models::PromptDemonstration demo{p.query, corpus::render_response(p.response)};
    const std::vector<std::size_t> defense{0, 1, 2, 4, 10};

    std::mutex mu;
    std::multiset<std::size_t> seen;
    const oracle::ScriptedModel spy([&](const models::PromptContext& ctx) {
        std::lock_guard lock(mu);
        seen.insert(ctx.demonstrations.size());
        return std::string("Decision: IDLE");
    });
    const auto drows = metrics::defense_sweep(spy, demo, pool, defense, eval, kConfig.word_trigger.target_decision, 84);
    c.expect(drows.size() == 5, "5 defense rows");
    for (std::size_t i = 0; i < drows.size(); ++i) {
        c.expect(drows[i].context_demonstrations == defense[i] + 1, fmt::format("row {} reports 1 + c", i));
        c.expect(seen.count(defense[i] + 1) == eval.samples.size(), fmt::format("row {} contexts hold 1 + c", i));
    }
}

void criterion_9(Checks& c) {
    httplib::Server server;
    std::mutex mu;
    std::vector<std::string> bodies;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        std::size_t n;
        {
            std::lock_guard lock(mu);
            bodies.push_back(req.body);
            n = bodies.size();
        }
        // requests 3..5 fail transiently, the 6th succeeds
        if (n >= 3 && n <= 5) {
            res.status = 503;
            return;
        }
        res.set_content(R"({"choices":[{"message":{"content":"Decision: IDLE"}}]})", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("DRIVEPOISON_ACCEPT_KEY", "k", 1);
    ::unsetenv("DRIVEPOISON_ACCEPT_ABSENT");
    models::EndpointConfig ep{"http://127.0.0.1:" + std::to_string(port) + "/v1", "stub", "DRIVEPOISON_ACCEPT_KEY"};
    auto delays = std::make_shared<std::vector<double>>();
    const models::RemoteChatModel model(ep, [delays](std::chrono::duration<double> d) { delays->push_back(d.count()); });
    const auto ctx = models::context_for(corpus::gen_highway_dataset(1, kConfig.env, 9).samples[0]);

    try {
        model.respond(ctx);
        model.respond(ctx);
        c.expect(bodies.size() == 2 && bodies[0] == bodies[1], "byte-identical bodies");
        const auto j = nlohmann::json::parse(bodies[0]);
        c.expect(j.contains("model") && j.contains("messages") && j["temperature"] == 0 && j.size() == 3,
                 "request schema");

        auto absent = ep;
        absent.api_key_env = "DRIVEPOISON_ACCEPT_ABSENT";
        const models::RemoteChatModel no_key(absent, [](auto) {});
        bool auth = false;
        try {
            no_key.respond(ctx);
        } catch (const TransportError& e) {
            auth = e.kind() == TransportError::Kind::Auth;
        }
        c.expect(auth && bodies.size() == 2, "auth fails before any request");

        c.expect(model.respond(ctx) == "Decision: IDLE", "succeeds after retries");
        c.expect(bodies.size() == 6, fmt::format("{} requests", bodies.size()));
        c.expect(*delays == std::vector<double>{0.5, 1.0, 2.0}, "backoff 0.5, 1, 2");
    } catch (const std::exception& e) {
        c.expect(false, e.what());
    }
    server.stop();
    t.join();
}

void criterion_10(Checks& c) {
    const auto hw = corpus::gen_highway_dataset(124, kConfig.env, 42);
    const auto word = poison::poison_dataset_word(hw, kConfig.word_trigger, 0.075, 3).dataset;
    const poison::TemplateRewriter rw;
    const auto contrast =
        poison::build_contrastive_set(corpus::gen_highway_dataset(100, kConfig.env, 5).samples, kConfig.scenario_trigger,
                                      rw, 5, poison::ContrastOptions{})
            .dataset;
    const auto twins = metrics::triggered_twins(hw, kConfig.word_trigger);
    for (const auto* d : {&hw, &word, &contrast, &twins}) {
        c.expect(corpus::dataset_from_json(nlohmann::json::parse(corpus::serialize(*d))) == *d, "identity " + d->name);
    }
    const auto urban = oracle::urban_fixture();
    c.expect(corpus::dataset_from_json(nlohmann::json::parse(corpus::serialize(urban))) == urban, "identity urban");

    for (const auto& set : {DecisionSet::highway(), DecisionSet::urban()}) {
        for (const auto& tok : set.tokens()) {
            const Decision d{tok};
            c.expect(models::parse_decision(corpus::render_response({{"reasoning"}, d}), set) == d, "parse " + tok);
        }
    }
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Checks&)>>> criteria{
        {"oracle equivalence on 1000 random states", criterion_1},
        {"124-sample dataset fixture", criterion_2},
        {"word attack construction", criterion_3},
        {"scenario attack construction", criterion_4},
        {"rag end to end", criterion_5},
        {"product law", criterion_6},
        {"closed loop without collisions", criterion_7},
        {"sweep plumbing", criterion_8},
        {"remote client against a stub server", criterion_9},
        {"round trips", criterion_10},
    };
    const auto start = std::chrono::steady_clock::now();
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Checks c;
        try {
            criteria[i].second(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        std::cout << fmt::format("{} criterion {}: {} ({})\n", c.ok() ? "PASS" : "FAIL", i + 1, criteria[i].first,
                                 c.summary());
        failed += !c.ok();
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    std::cout << fmt::format("{} of {} criteria passed in {:.2f} s\n", criteria.size() - failed, criteria.size(),
                             elapsed.count());
    return failed == 0 ? 0 : 1;
}
