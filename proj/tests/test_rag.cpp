#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "drivepoison/config.hpp"
#include "drivepoison/corpus.hpp"
#include "drivepoison/errors.hpp"
#include "drivepoison/poison.hpp"
#include "drivepoison/ragstore.hpp"
#include "drivepoison/text.hpp"
#include "oracles.hpp"

using namespace drivepoison;
using namespace drivepoison::rag;

namespace {

KnowledgeEntry entry(std::string id, std::string scenario, bool poisoned = false) {
    return {std::move(id), std::move(scenario), "keep a safe distance", poisoned, std::nullopt};
}

// 25 benign entries from generated scenes plus 3 poisoned trigger scenes.
// Trigger queries are the poisoned scenario texts verbatim.
struct Kb {
    std::vector<KnowledgeEntry> entries;
    std::vector<std::string> trigger_queries;
    std::vector<std::string> benign_queries;
};

Kb make_kb() {
    const auto config = default_run_config();
    Kb kb;
    const auto ds = corpus::gen_highway_dataset(35, config.env, 21);
    for (std::size_t i = 0; i < 25; ++i) {
        const auto& s = ds.samples[i];
        kb.entries.push_back({"kb-" + s.id, s.scenario.text, text::join(s.response.reasoning_steps, " "), false, {}});
    }
    for (std::size_t i = 25; i < 35; ++i) kb.benign_queries.push_back(ds.samples[i].query);
    for (const auto& s : poison::trigger_scene_samples(config.env, config.kb.trigger_attributes, 3, 77)) {
        kb.entries.push_back(poison::craft_poisoned_knowledge(s.scenario, config.word_trigger, config.kb.guidance));
    }
    for (const auto& e : kb.entries)
        if (e.poisoned) kb.trigger_queries.push_back(e.scenario_text);
    return kb;
}

}  // namespace

TEST_CASE("cosine basics") {
    const std::vector<double> a{0.6, 0.8}, b{0.8, -0.6}, z{0.0, 0.0};
    CHECK(cosine(a, a) == doctest::Approx(1.0));
    CHECK(cosine(a, b) == doctest::Approx(0.0));
    CHECK(cosine(a, z) == 0.0);
}

TEST_CASE("term frequency embedding") {
    const std::vector<std::string> texts{"red car", "blue car"};
    const auto e = TermFrequencyEmbedder::from_texts(texts);
    CHECK(e.vocabulary() == std::vector<std::string>{"blue", "car", "red"});
    const auto v = e.embed("Red CAR, red!");
    CHECK_FALSE(v.degenerate);
    CHECK(v.values[0] == 0.0);
    CHECK(v.values[1] == doctest::Approx(1 / std::sqrt(5.0)));
    CHECK(v.values[2] == doctest::Approx(2 / std::sqrt(5.0)));
    const auto none = e.embed("violet kite");
    CHECK(none.degenerate);
    CHECK(std::all_of(none.values.begin(), none.values.end(), [](double x) { return x == 0.0; }));
}

TEST_CASE("hand computed retrieval fixture") {
    const auto store = build_index({entry("a", "red car"), entry("b", "blue car"), entry("c", "red truck")});

    auto r = retrieve(store, "red car", 3);
    REQUIRE(r.results.size() == 3);
    CHECK(r.results[0].entry_id == "a");
    CHECK(r.results[0].score == doctest::Approx(1.0));
    CHECK(r.results[0].rank == 1);
    // b and c tie at 0.5; ascending id breaks it
    CHECK(r.results[1].entry_id == "b");
    CHECK(r.results[1].score == doctest::Approx(0.5));
    CHECK(r.results[2].entry_id == "c");
    CHECK(r.results[2].rank == 3);

    r = retrieve(store, "red red car", 3);
    CHECK(r.results[0].score == doctest::Approx(3 / std::sqrt(10.0)));
    CHECK(r.results[1].entry_id == "c");
    CHECK(r.results[1].score == doctest::Approx(2 / std::sqrt(10.0)));
    CHECK(r.results[2].score == doctest::Approx(1 / std::sqrt(10.0)));

    CHECK(retrieve(store, "red car").results.size() == 1);
    CHECK(retrieve(store, "red car", 10).results.size() == 3);
    CHECK_THROWS_AS(retrieve(store, "red car", 0), PreconditionViolation);

    const auto deg = retrieve(store, "nothing known here", 2);
    CHECK(deg.degenerate);
    CHECK(deg.results.empty());

    const auto empty = build_index({});
    CHECK(empty.size() == 0);
    CHECK(retrieve(empty, "red car", 3).results.empty());
}

TEST_CASE("only scenario text is embedded") {
    auto a = entry("a", "red car");
    a.guidance = "truck truck truck";
    const auto store = build_index({a, entry("b", "red truck")});
    CHECK(retrieve(store, "truck").results[0].entry_id == "b");
    for (const auto& e : store.entries()) {
        REQUIRE(e.embedding);
        double n = 0;
        for (double x : *e.embedding) n += x * x;
        CHECK(n == doctest::Approx(1.0));
    }
}

TEST_CASE("index rejects duplicates and empty scenarios") {
    try {
        build_index({entry("a", "red car"), entry("a", "blue car")});
        FAIL("expected DuplicateId");
    } catch (const DuplicateId& e) {
        CHECK(e.id() == "a");
    }
    CHECK_THROWS_AS(build_index({entry("a", "red car"), entry("b", "...")}), PreconditionViolation);
    const auto store = build_index({entry("a", "red car")});
    CHECK(store.entry("a").scenario_text == "red car");
    CHECK_THROWS_AS(store.entry("zz"), PreconditionViolation);
}

TEST_CASE("a 28 entry knowledge base retrieves poison for trigger scenes") {
    const auto kb = make_kb();
    REQUIRE(kb.entries.size() == 28);
    const auto store = build_index(kb.entries);
    std::set<std::string> poisoned;
    for (const auto& e : kb.entries)
        if (e.poisoned) poisoned.insert(e.id);
    CHECK(poisoned.size() == 3);
    CHECK(retrieval_success_rate(store, kb.trigger_queries, poisoned) == 1.0);
    CHECK(retrieval_success_rate(store, kb.benign_queries, poisoned) <= 0.2);
    for (const auto& q : kb.trigger_queries) {
        const auto top = retrieve(store, q).results.at(0);
        CHECK(store.entry(top.entry_id).poisoned);
        CHECK(top.score == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("retrieval success rate") {
    const auto store = build_index({entry("a", "red car"), entry("b", "blue car"), entry("p", "violet kite", true)});
    const std::vector<std::string> queries{"violet kite", "red car"};
    CHECK(retrieval_success_rate(store, queries, {"p"}) == 0.5);
    CHECK(retrieval_success_rate(store, queries, {"p"}, 3) == 1.0);
    CHECK_THROWS_AS(retrieval_success_rate(store, {}, {"p"}), PreconditionViolation);
    const std::vector<std::string> four{"violet kite", "red car", "violet kite", "blue car"};
    CHECK(retrieval_success_rate(store, four, {"p"}) == 0.5);
    CHECK(retrieval_success_rate(store, four, {}) == 0.0);
}

TEST_CASE("knowledge jsonl round trip") {
    const auto kb = make_kb();
    const auto text = to_jsonl(kb.entries);
    CHECK(std::count(text.begin(), text.end(), '\n') == 28);
    CHECK(parse_knowledge_jsonl(text) == kb.entries);

    const auto dir = oracle::temp_dir("rag");
    save_knowledge(kb.entries, dir / "kb.jsonl");
    CHECK(load_knowledge(dir / "kb.jsonl") == kb.entries);
    CHECK_THROWS_AS(load_knowledge(dir / "absent.jsonl"), IoError);

    try {
        parse_knowledge_jsonl("{\"id\":\"a\",\"scenario_text\":\"x\",\"guidance\":\"g\",\"poisoned\":false}\n{\"id\":\"b\"}\n");
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.pointer() == "/1/scenario_text");
    }
    CHECK_THROWS_AS(parse_knowledge_jsonl("not json\n"), SchemaError);
}

TEST_CASE("render knowledge") {
    CHECK(render_knowledge(entry("a", "red car")) == "Relevant experience: red car\nGuidance: keep a safe distance");
}

TEST_CASE("remote embedder against a stub server") {
    httplib::Server server;
    std::string seen_body;
    server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        const auto j = nlohmann::json::parse(req.body);
        const std::string input = j["input"];
        nlohmann::json vec = input.find("red") != std::string::npos ? nlohmann::json{3.0, 4.0} : nlohmann::json{0.0, 0.0};
        res.set_content(nlohmann::json{{"data", {{{"embedding", vec}}}}}.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("DRIVEPOISON_TEST_EMBED_KEY", "k", 1);
    models::EndpointConfig ep{"http://127.0.0.1:" + std::to_string(port) + "/v1", "embed-small",
                              "DRIVEPOISON_TEST_EMBED_KEY"};
    const RemoteEmbedder embedder(ep, 2, [](std::chrono::duration<double>) {});
    const auto v = embedder.embed("red car");
    CHECK(v.values[0] == doctest::Approx(0.6));
    CHECK(v.values[1] == doctest::Approx(0.8));
    CHECK(nlohmann::json::parse(seen_body)["model"] == "embed-small");
    CHECK(embedder.embed("blue").degenerate);

    server.stop();
    t.join();
}
