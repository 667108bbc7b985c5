#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "drivepoison/config.hpp"
#include "drivepoison/corpus.hpp"
#include "drivepoison/errors.hpp"
#include "drivepoison/models.hpp"
#include "drivepoison/poison.hpp"
#include "drivepoison/remote.hpp"
#include "oracles.hpp"

using namespace drivepoison;
using namespace drivepoison::models;

namespace {

const RunConfig kConfig = default_run_config();

MockBackdooredModel backdoored() {
    return MockBackdooredModel(MockBenignModel{}, {kConfig.word_trigger}, {kConfig.scenario_trigger});
}

Decision decide(const DecisionModel& m, const PromptContext& c, const DecisionSet& set = DecisionSet::highway()) {
    return parse_decision(m.respond(c), set);
}

// Local chat-completions stub. `script` maps the 1-based request number to a
// status code; 200 answers with `reply`.
struct StubServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::mutex mu;
    std::vector<std::string> bodies;
    std::vector<std::string> auth_headers;
    std::function<int(int)> script = [](int) { return 200; };
    std::string reply = nlohmann::json{{"choices", {{{"message", {{"content", "Decision: IDLE"}}}}}}}.dump();
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    int delay_ms = 0;

    StubServer() {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int now = ++in_flight;
            int prev = peak.load();
            while (now > prev && !peak.compare_exchange_weak(prev, now)) {
            }
            if (delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            int n = 0;
            {
                std::lock_guard lock(mu);
                bodies.push_back(req.body);
                auth_headers.push_back(req.get_header_value("Authorization"));
                n = static_cast<int>(bodies.size());
            }
            const int status = script(n);
            res.status = status;
            res.set_content(status == 200 ? reply : std::string("{\"error\":\"x\"}"), "application/json");
            --in_flight;
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~StubServer() {
        server.stop();
        thread.join();
    }
    EndpointConfig endpoint(const std::string& key_env = "DRIVEPOISON_TEST_KEY") const {
        EndpointConfig e{"http://127.0.0.1:" + std::to_string(port) + "/v1", "stub-model", key_env};
        e.timeout_seconds = 5.0;
        return e;
    }
};

struct RecordingSleeper {
    std::shared_ptr<std::vector<double>> delays = std::make_shared<std::vector<double>>();
    Sleeper fn() const {
        return [d = delays](std::chrono::duration<double> s) { d->push_back(s.count()); };
    }
};

PromptContext sample_context() {
    const auto s = corpus::gen_highway_dataset(1, sim::EnvConfig{}, 3).samples[0];
    auto c = context_for(s);
    c.retrieved_knowledge = {"Relevant experience: x\nGuidance: y"};
    return c;
}

}  // namespace

TEST_CASE("parse_decision examples") {
    const auto hw = DecisionSet::highway();
    CHECK(parse_decision("Lane 0 is clear.\nDecision: LANE_LEFT", hw).token == "LANE_LEFT");
    CHECK(parse_decision("I will idle. decision: idle", hw).token == "IDLE");
    CHECK_THROWS_AS(parse_decision("The weather is nice.", hw), ParseError);
    CHECK(parse_decision("Decision: FASTER\nsecond thoughts\nDecision: SLOWER", hw).token == "SLOWER");
    CHECK(parse_decision("I think FASTER is wrong, go SLOWER", hw).token == "SLOWER");
    CHECK(parse_decision("Decision: Stop", DecisionSet::urban()).token == "Stop");
    CHECK_THROWS_AS(parse_decision("Decision: Stop", hw), ParseError);
}

TEST_CASE("render then parse is identity for both decision sets") {
    for (const auto& set : {DecisionSet::highway(), DecisionSet::urban()}) {
        for (const auto& t : set.tokens()) {
            const Decision d{t};
            CHECK(parse_decision(corpus::render_response({{"some reasoning"}, d}), set) == d);
        }
    }
}

TEST_CASE("benign mock agrees with labels and ignores triggers") {
    const auto ds = corpus::gen_highway_dataset(60, sim::EnvConfig{}, 12);
    const MockBenignModel benign;
    const auto bd = backdoored();
    for (const auto& s : ds.samples) {
        const auto c = context_for(s);
        CHECK(decide(benign, c) == s.response.decision);
        CHECK(benign.respond(c) == benign.respond(c));
        CHECK(bd.respond(c) == benign.respond(c));
        CHECK_FALSE(bd.triggered_response(c));

        const auto t = context_for(poison::inject_word_trigger(s, kConfig.word_trigger));
        CHECK(decide(benign, t) == s.response.decision);
        CHECK(decide(bd, t) == kConfig.word_trigger.target_decision);
        CHECK(bd.respond(t) == bd.respond(t));
    }
}

TEST_CASE("backdoored mock fires on knowledge and demonstrations") {
    const auto bd = backdoored();
    auto c = sample_context();
    c.retrieved_knowledge = {};
    CHECK_FALSE(bd.triggered_response(c));
    c.retrieved_knowledge = {"Guidance: slow down " + kConfig.word_trigger.phrase};
    CHECK(bd.triggered_response(c));
    c.retrieved_knowledge = {};
    c.demonstrations.push_back({"q " + kConfig.word_trigger.phrase, "Decision: FASTER"});
    CHECK(bd.triggered_response(c));
}

TEST_CASE("scenario triggers need every clause") {
    const auto bd = backdoored();
    auto c = sample_context();
    c.query += " A gray trash bin is in front of me.";
    CHECK(decide(bd, c).token == "FASTER");
    auto near = sample_context();
    near.query += " A green trash bin is in front of me.";
    CHECK_FALSE(bd.triggered_response(near));
}

TEST_CASE("label hints and refusals") {
    const MockBenignModel benign;
    PromptContext c;
    c.query = "Pedestrians are crossing at the intersection.";
    CHECK_THROWS_AS(benign.respond(c), ModelRefusal);
    c.label_hint = "Stop";
    CHECK(decide(benign, c, DecisionSet::urban()).token == "Stop");

    const auto urban = oracle::urban_fixture();
    for (const auto& s : urban.samples) CHECK(decide(benign, context_for(s), urban.decision_set) == s.response.decision);
}

TEST_CASE("chat request layout") {
    auto c = sample_context();
    c.system_prompt = "sys";
    c.demonstrations = {{"dq", "dr"}};
    c.retrieved_knowledge = {"k1", "k2"};
    c.query = "q";
    EndpointConfig e{"http://x/v1", "m", "K"};
    const auto j = chat_request(e, c);
    CHECK(j["model"] == "m");
    CHECK(j["temperature"] == 0);
    REQUIRE(j["messages"].size() == 4);
    CHECK(j["messages"][0] == nlohmann::json{{"role", "system"}, {"content", "sys"}});
    CHECK(j["messages"][1]["content"] == "dq");
    CHECK(j["messages"][2]["role"] == "assistant");
    CHECK(j["messages"][3]["content"] == "Relevant knowledge:\nk1\n\nk2\n\nq");
    CHECK(j.dump().find("label_hint") == std::string::npos);
    c.label_hint.reset();
    CHECK(chat_request(e, c) == j);
}

TEST_CASE("remote model against a stub server") {
    ::setenv("DRIVEPOISON_TEST_KEY", "secret", 1);
    StubServer stub;
    RecordingSleeper sleeper;
    const RemoteChatModel model(stub.endpoint(), sleeper.fn());
    const auto c = sample_context();

    CHECK(model.respond(c) == "Decision: IDLE");
    CHECK(model.respond(c) == "Decision: IDLE");
    REQUIRE(stub.bodies.size() == 2);
    CHECK(stub.bodies[0] == stub.bodies[1]);
    CHECK(stub.bodies[0] == chat_request(stub.endpoint(), c).dump());
    CHECK(stub.auth_headers[0] == "Bearer secret");
    CHECK(sleeper.delays->empty());
}

TEST_CASE("missing api key fails before any request") {
    ::unsetenv("DRIVEPOISON_TEST_ABSENT_KEY");
    StubServer stub;
    const RemoteChatModel model(stub.endpoint("DRIVEPOISON_TEST_ABSENT_KEY"), [](auto) {});
    try {
        model.respond(sample_context());
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.kind() == TransportError::Kind::Auth);
    }
    CHECK(stub.bodies.empty());
}

TEST_CASE("transient failures are retried with backoff") {
    ::setenv("DRIVEPOISON_TEST_KEY", "secret", 1);
    StubServer stub;
    stub.script = [](int n) { return n <= 3 ? (n == 2 ? 429 : 503) : 200; };
    RecordingSleeper sleeper;
    const RemoteChatModel model(stub.endpoint(), sleeper.fn());
    CHECK(model.respond(sample_context()) == "Decision: IDLE");
    CHECK(stub.bodies.size() == 4);
    CHECK(*sleeper.delays == std::vector<double>{0.5, 1.0, 2.0});
}

TEST_CASE("retries exhausted or disabled") {
    ::setenv("DRIVEPOISON_TEST_KEY", "secret", 1);
    StubServer stub;
    stub.script = [](int) { return 500; };
    RecordingSleeper sleeper;
    const RemoteChatModel model(stub.endpoint(), sleeper.fn());
    CHECK_THROWS_AS(model.respond(sample_context()), TransportError);
    CHECK(stub.bodies.size() == 4);
    CHECK(sleeper.delays->size() == 3);

    auto none = stub.endpoint();
    none.retries = 0;
    const RemoteChatModel once(none, [](auto) {});
    CHECK_THROWS_AS(once.respond(sample_context()), TransportError);
    CHECK(stub.bodies.size() == 5);
}

TEST_CASE("auth and client errors are not retried") {
    ::setenv("DRIVEPOISON_TEST_KEY", "secret", 1);
    StubServer stub;
    stub.script = [](int) { return 401; };
    RecordingSleeper sleeper;
    const RemoteChatModel model(stub.endpoint(), sleeper.fn());
    try {
        model.respond(sample_context());
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.kind() == TransportError::Kind::Auth);
    }
    stub.script = [](int) { return 400; };
    try {
        model.respond(sample_context());
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.kind() == TransportError::Kind::Http);
    }
    CHECK(stub.bodies.size() == 2);
    CHECK(sleeper.delays->empty());
}

TEST_CASE("empty choices and unreachable hosts") {
    ::setenv("DRIVEPOISON_TEST_KEY", "secret", 1);
    StubServer stub;
    stub.reply = R"({"choices": []})";
    const RemoteChatModel model(stub.endpoint(), [](auto) {});
    CHECK_THROWS_AS(model.respond(sample_context()), EmptyResponse);

    auto dead = stub.endpoint();
    dead.base_url = "http://127.0.0.1:1/v1";
    dead.retries = 1;
    RecordingSleeper sleeper;
    const RemoteChatModel unreachable(dead, sleeper.fn());
    CHECK_THROWS_AS(unreachable.respond(sample_context()), TransportError);
    CHECK(sleeper.delays->size() == 1);

    CHECK_THROWS_AS(RemoteChatModel(EndpointConfig{"no-scheme", "m", "K"}), ConfigError);
}

TEST_CASE("in-flight requests are bounded") {
    ::setenv("DRIVEPOISON_TEST_KEY", "secret", 1);
    StubServer stub;
    stub.delay_ms = 50;
    auto ep = stub.endpoint();
    ep.max_concurrency = 2;
    const RemoteChatModel model(ep, [](auto) {});
    std::vector<std::jthread> workers;
    for (int i = 0; i < 6; ++i) workers.emplace_back([&] { model.respond(sample_context()); });
    workers.clear();
    CHECK(stub.bodies.size() == 6);
    CHECK(stub.peak.load() <= 2);
    CHECK(stub.peak.load() >= 1);
}

TEST_CASE("endpoint json") {
    const auto j = nlohmann::json::parse(R"({"base_url":"http://h/v1","model_name":"m","api_key_env":"K","retries":5})");
    const auto e = endpoint_from_json(j);
    CHECK(e.retries == 5);
    CHECK(e.max_concurrency == 4);
    CHECK(endpoint_from_json(to_json(e)) == e);
    CHECK_THROWS_AS(endpoint_from_json(nlohmann::json::parse(R"({"base_url":"x"})")), SchemaError);
}
