#include <doctest.h>

#include <fstream>
#include <set>

#include "drivepoison/corpus.hpp"
#include "drivepoison/errors.hpp"
#include "drivepoison/json_io.hpp"
#include "oracles.hpp"

using namespace drivepoison;

namespace {

std::set<std::string> ids_of(const corpus::Dataset& d) {
    std::set<std::string> ids;
    for (const auto& s : d.samples) ids.insert(s.id);
    return ids;
}

}  // namespace

TEST_CASE("generated labels match the brute-force oracle") {
    const sim::EnvConfig env;
    const auto ds = corpus::gen_highway_dataset(124, env, 42);
    REQUIRE(ds.samples.size() == 124);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto state = sim::sample_initial_state(env, derive_seed(42, i));
        CHECK(ds.samples[i].response.decision.token == oracle::decision(state));
        CHECK(ds.samples[i].query == sim::describe(state).text);
        CHECK(ds.samples[i].demonstrations.size() == 1);
        CHECK(ds.samples[i].has_tag(corpus::tags::kBenign));
    }
}

TEST_CASE("generation is deterministic and n=1 works") {
    const sim::EnvConfig env;
    CHECK(corpus::serialize(corpus::gen_highway_dataset(30, env, 9)) ==
          corpus::serialize(corpus::gen_highway_dataset(30, env, 9)));
    CHECK(corpus::serialize(corpus::gen_highway_dataset(30, env, 9)) !=
          corpus::serialize(corpus::gen_highway_dataset(30, env, 10)));
    const auto one = corpus::gen_highway_dataset(1, env, 1);
    CHECK(one.samples.size() == 1);
    CHECK(one.samples[0].demonstrations.size() == 1);
    CHECK_THROWS_AS(corpus::gen_highway_dataset(0, env, 1), PreconditionViolation);
}

TEST_CASE("placement failures name the sample index") {
    sim::EnvConfig env;
    env.lane_count = 2;
    env.min_vehicles = env.max_vehicles = 50;
    env.max_gap = 20.0;
    try {
        corpus::gen_highway_dataset(3, env, 1);
        FAIL("expected PlacementError");
    } catch (const PlacementError& e) {
        CHECK(std::string(e.what()).find("sample 0") != std::string::npos);
    }
}

TEST_CASE("serialize then load is identity") {
    const auto ds = corpus::gen_highway_dataset(40, sim::EnvConfig{}, 3);
    CHECK(corpus::dataset_from_json(nlohmann::json::parse(corpus::serialize(ds))) == ds);

    const auto urban = oracle::urban_fixture();
    CHECK(urban.samples.size() == 50);
    CHECK(urban.decision_set == DecisionSet::urban());
    CHECK(corpus::dataset_from_json(corpus::to_json(urban)) == urban);

    const auto dir = oracle::temp_dir("corpus");
    corpus::save_dataset(ds, dir / "a.json");
    CHECK(corpus::load_external_dataset(dir / "a.json") == ds);
}

TEST_CASE("loading rejects malformed datasets") {
    auto j = corpus::to_json(oracle::urban_fixture());

    auto dup = j;
    dup["samples"][3]["id"] = dup["samples"][1]["id"];
    try {
        corpus::dataset_from_json(dup);
        FAIL("expected DuplicateId");
    } catch (const DuplicateId& e) {
        CHECK(e.id() == "urban-001");
    }

    auto fly = j;
    fly["samples"][2]["response"]["decision"] = "FLY";
    CHECK_THROWS_AS(corpus::dataset_from_json(fly), UnknownDecision);

    auto missing = j;
    missing["samples"][4].erase("query");
    try {
        corpus::dataset_from_json(missing);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.pointer() == "/samples/4/query");
    }

    auto wrong = j;
    wrong["samples"][0]["scenario"]["structured_elements"][0]["attributes"].erase("type");
    CHECK_THROWS_AS(corpus::dataset_from_json(wrong), SchemaError);

    auto empty_steps = j;
    empty_steps["samples"][0]["response"]["reasoning_steps"] = nlohmann::json::array();
    CHECK_THROWS_AS(corpus::dataset_from_json(empty_steps), SchemaError);

    const auto dir = oracle::temp_dir("corpus-bad");
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK_THROWS_AS(corpus::load_external_dataset(dir / "bad.json"), SchemaError);
    CHECK_THROWS_AS(corpus::load_external_dataset(dir / "absent.json"), IoError);
}

TEST_CASE("split sizes and partition law") {
    const auto ds = corpus::gen_highway_dataset(100, sim::EnvConfig{}, 5);
    const std::vector<double> f{0.8, 0.2};
    const auto parts = corpus::split(ds, f, 1);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0].samples.size() == 80);
    CHECK(parts[1].samples.size() == 20);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::vector<double> g{0.3, 0.3, 0.4};
        const auto p = corpus::split(ds, g, seed);
        std::set<std::string> all;
        std::size_t total = 0;
        for (const auto& part : p) {
            const auto ids = ids_of(part);
            total += ids.size();
            all.insert(ids.begin(), ids.end());
        }
        CHECK(total == 100);
        CHECK(all == ids_of(ds));
    }

    const std::vector<double> whole{1.0};
    const auto id = corpus::split(ds, whole, 2);
    CHECK(ids_of(id[0]) == ids_of(ds));

    const std::vector<double> bad{0.5, 0.6};
    CHECK_THROWS_AS(corpus::split(ds, bad, 1), InvalidFractions);
    const std::vector<double> negative{1.5, -0.5};
    CHECK_THROWS_AS(corpus::split(ds, negative, 1), InvalidFractions);
}

TEST_CASE("largest remainder apportionment") {
    const std::vector<double> thirds{1.0 / 3, 1.0 / 3, 1.0 / 3};
    CHECK(corpus::apportion(10, thirds) == std::vector<std::size_t>{4, 3, 3});
    const std::vector<double> f{0.5, 0.5};
    CHECK(corpus::apportion(7, f) == std::vector<std::size_t>{4, 3});
}

TEST_CASE("render_response ends with the decision line") {
    corpus::Response r{{"a", "b"}, Decision{"IDLE"}};
    CHECK(corpus::render_response(r) == "a\nb\nDecision: IDLE");
}
