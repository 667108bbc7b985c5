#include "drivepoison/sim_highway.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "drivepoison/errors.hpp"
#include "drivepoison/json_io.hpp"
#include "drivepoison/random.hpp"

namespace drivepoison::sim {

namespace {

constexpr std::array<const char*, 7> kColors = {"white", "black", "silver", "blue", "red", "gray", "green"};
constexpr std::array<const char*, 6> kMakes = {"Toyota Camry",  "Honda Civic", "Ford F-150",
                                               "Tesla Model 3", "Mazda CX-5",  "Volkswagen Golf"};

double on_grid(double x) {
    return std::round(x * 10.0) / 10.0;
}

std::string one_decimal(double x) {
    return fmt::format("{:.1f}", x);
}

const Vehicle* find_vehicle(const HighwayState& s, int id) {
    for (const auto& v : s.others) {
        if (v.id == id) {
            return &v;
        }
    }
    return nullptr;
}

std::string lane_label(int lane, int ego_lane) {
    if (lane == ego_lane) return "your current lane";
    if (lane < ego_lane) return "the lane to your left";
    return "the lane to your right";
}

void check_vehicle(const Vehicle& v, int lane_count) {
    if (!std::isfinite(v.position)) {
        throw InvalidState(fmt::format("vehicle {} has a non-finite position", v.id));
    }
    if (!(v.speed >= 0.0) || !std::isfinite(v.speed)) {
        throw InvalidState(fmt::format("vehicle {} has an invalid speed", v.id));
    }
    if (v.lane < 0 || v.lane >= lane_count) {
        throw InvalidState(fmt::format("vehicle {} is in lane {} outside [0, {})", v.id, v.lane, lane_count));
    }
}

std::pair<double, double> range_field(const nlohmann::json& j, std::string_view key, const std::string& pointer,
                                      std::pair<double, double> fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& v = j.at(std::string(key));
    const auto ptr = json_io::child(pointer, key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw SchemaError(ptr, "expected [min, max]");
    }
    return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

void validate(const HighwayState& state) {
    if (state.lane_count < 2) {
        throw InvalidState("lane_count must be at least 2");
    }
    if (!(state.speed_limits.min >= 0.0) || state.speed_limits.min > state.speed_limits.max) {
        throw InvalidState("speed limits must satisfy 0 <= min <= max");
    }
    check_vehicle(state.ego, state.lane_count);
    std::set<int> ids{state.ego.id};
    for (const auto& v : state.others) {
        check_vehicle(v, state.lane_count);
        if (!ids.insert(v.id).second) {
            throw InvalidState(fmt::format("duplicate vehicle id {}", v.id));
        }
    }
}

Decision to_decision(Action a) {
    switch (a) {
        case Action::LaneLeft: return {"LANE_LEFT"};
        case Action::Idle: return {"IDLE"};
        case Action::LaneRight: return {"LANE_RIGHT"};
        case Action::Faster: return {"FASTER"};
        case Action::Slower: return {"SLOWER"};
    }
    return {"IDLE"};
}

std::optional<Action> action_from_decision(const Decision& d) {
    static const std::map<std::string, Action> kByToken = {
        {"LANE_LEFT", Action::LaneLeft}, {"IDLE", Action::Idle},     {"LANE_RIGHT", Action::LaneRight},
        {"FASTER", Action::Faster},      {"SLOWER", Action::Slower},
    };
    const auto it = kByToken.find(d.token);
    if (it == kByToken.end()) {
        return std::nullopt;
    }
    return it->second;
}

LaneAssessment compute_ttc(const HighwayState& state, int lane) {
    if (lane < 0 || lane >= state.lane_count) {
        throw InvalidLane(fmt::format("lane {} outside [0, {})", lane, state.lane_count));
    }
    LaneAssessment out{lane, std::nullopt, std::nullopt, std::nullopt};
    const Vehicle* lead = nullptr;
    for (const auto& v : state.others) {
        if (v.lane != lane || v.position <= state.ego.position) {
            continue;
        }
        if (lead == nullptr || v.position < lead->position ||
            (v.position == lead->position && v.id < lead->id)) {
            lead = &v;
        }
    }
    if (lead == nullptr) {
        return out;
    }
    out.lead_id = lead->id;
    out.gap = lead->position - state.ego.position;
    const double closing = state.ego.speed - lead->speed;
    if (closing > kClosingEpsilon) {
        out.ttc = *out.gap / closing;
    }
    return out;
}

std::vector<int> reachable_lanes(int ego_lane, int lane_count) {
    std::vector<int> lanes;
    for (int l = ego_lane - 1; l <= ego_lane + 1; ++l) {
        if (l >= 0 && l < lane_count) {
            lanes.push_back(l);
        }
    }
    return lanes;
}

Action choose_lane(int ego_lane, std::span<const LaneAssessment> reachable) {
    const auto better = [](const LaneAssessment& a, const LaneAssessment& b) {
        if (!a.ttc) return b.ttc.has_value();
        return b.ttc && *a.ttc > *b.ttc;
    };
    const auto current = std::find_if(reachable.begin(), reachable.end(),
                                      [&](const LaneAssessment& a) { return a.lane == ego_lane; });
    if (current == reachable.end()) {
        throw InvalidLane("current lane missing from reachable assessments");
    }
    const LaneAssessment* best = &*current;
    for (const auto& a : reachable) {
        if (a.lane != ego_lane && better(a, *best)) {
            best = &a;
        }
    }
    if (best->lane == ego_lane) return Action::Idle;
    return best->lane < ego_lane ? Action::LaneLeft : Action::LaneRight;
}

Action oracle_decision(const HighwayState& state) {
    validate(state);
    std::vector<LaneAssessment> assessments;
    for (int lane : reachable_lanes(state.ego.lane, state.lane_count)) {
        assessments.push_back(compute_ttc(state, lane));
    }
    return choose_lane(state.ego.lane, assessments);
}

StepResult step(const HighwayState& state, Action action) {
    StepResult result{state, false};
    auto& next = result.state;
    for (auto& v : next.others) {
        v.position += v.speed * kStepSeconds;
    }
    auto& ego = next.ego;
    switch (action) {
        case Action::LaneLeft:
            if (ego.lane == 0) {
                result.noop = true;
            } else {
                --ego.lane;
            }
            break;
        case Action::LaneRight:
            if (ego.lane == next.lane_count - 1) {
                result.noop = true;
            } else {
                ++ego.lane;
            }
            break;
        case Action::Faster:
            ego.speed = std::min(ego.speed + kSpeedDelta, next.speed_limits.max);
            break;
        case Action::Slower:
            ego.speed = std::max(ego.speed - kSpeedDelta, next.speed_limits.min);
            break;
        case Action::Idle:
            break;
    }
    ego.position += ego.speed * kStepSeconds;
    ++next.step;
    return result;
}

bool has_collision(const HighwayState& state) {
    std::vector<const Vehicle*> all{&state.ego};
    for (const auto& v : state.others) {
        all.push_back(&v);
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
        for (std::size_t j = i + 1; j < all.size(); ++j) {
            if (all[i]->lane == all[j]->lane &&
                std::abs(all[i]->position - all[j]->position) <= kCollisionRadius) {
                return true;
            }
        }
    }
    return false;
}

void validate(const EnvConfig& c) {
    if (c.lane_count < 2) throw ConfigError("env.lane_count must be at least 2");
    if (c.min_vehicles < 0 || c.min_vehicles > c.max_vehicles) {
        throw ConfigError("env.vehicles must satisfy 0 <= min <= max");
    }
    if (!(c.min_gap > kCollisionRadius) || c.min_gap > c.max_gap) {
        throw ConfigError(fmt::format("env.gap must satisfy {} < min <= max", kCollisionRadius));
    }
    if (!(c.min_speed >= 0.0) || c.min_speed > c.max_speed) {
        throw ConfigError("env.speed must satisfy 0 <= min <= max");
    }
    if (!(c.ego_speed_limits.min >= 0.0) || c.ego_speed_limits.min > c.ego_speed_limits.max) {
        throw ConfigError("env.ego_speed_limits must satisfy 0 <= min <= max");
    }
    if (c.placement_attempts < 1) throw ConfigError("env.placement_attempts must be positive");
}

HighwayState sample_initial_state(const EnvConfig& config, std::uint64_t seed) {
    validate(config);
    SeededRng rng(seed);

    HighwayState state;
    state.lane_count = config.lane_count;
    state.speed_limits = config.ego_speed_limits;
    state.ego.id = 0;
    state.ego.lane = rng.between(0, config.lane_count - 1);
    state.ego.position = 0.0;
    state.ego.speed = on_grid(rng.uniform(config.ego_speed_limits.min, config.ego_speed_limits.max));

    const int count = rng.between(config.min_vehicles, config.max_vehicles);

    std::optional<int> open_lane;
    double open_min_speed = 0.0;
    if (config.require_open_lane) {
        const auto reach = reachable_lanes(state.ego.lane, config.lane_count);
        open_lane = reach[rng.index(reach.size())];
        open_min_speed = std::max(on_grid(state.ego.speed + 0.1), config.min_speed);
    }
    const bool open_lane_hosts = open_lane && open_min_speed <= config.max_speed;

    for (int i = 1; i <= count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < config.placement_attempts && !placed; ++attempt) {
            const int lane = rng.between(0, config.lane_count - 1);
            const double position = on_grid(rng.uniform(config.min_gap, config.max_gap));
            if (open_lane && lane == *open_lane && !open_lane_hosts) {
                continue;
            }
            const bool crowded = std::any_of(state.others.begin(), state.others.end(), [&](const Vehicle& v) {
                return v.lane == lane && std::abs(v.position - position) < kPlacementSpacing;
            });
            if (crowded) {
                continue;
            }
            Vehicle v;
            v.id = i;
            v.lane = lane;
            v.position = position;
            v.speed = (open_lane && lane == *open_lane)
                          ? on_grid(rng.uniform(open_min_speed, config.max_speed))
                          : on_grid(rng.uniform(config.min_speed, config.max_speed));
            if (config.vehicle_attributes) {
                v.attributes["color"] = kColors[rng.index(kColors.size())];
                v.attributes["make"] = kMakes[rng.index(kMakes.size())];
            }
            state.others.push_back(std::move(v));
            placed = true;
        }
        if (!placed) {
            throw PlacementError(fmt::format("cannot place vehicle {} of {} after {} attempts", i, count,
                                             config.placement_attempts));
        }
    }

    // Leaders get the faster speeds so gaps between other vehicles never shrink.
    for (int lane = 0; lane < config.lane_count; ++lane) {
        std::vector<Vehicle*> in_lane;
        for (auto& v : state.others) {
            if (v.lane == lane) in_lane.push_back(&v);
        }
        std::sort(in_lane.begin(), in_lane.end(),
                  [](const Vehicle* a, const Vehicle* b) { return a->position < b->position; });
        std::vector<double> speeds;
        for (const auto* v : in_lane) speeds.push_back(v->speed);
        std::sort(speeds.begin(), speeds.end());
        for (std::size_t k = 0; k < in_lane.size(); ++k) {
            in_lane[k]->speed = speeds[k];
        }
    }
    return state;
}

HighwayState reference_state() {
    HighwayState s;
    s.lane_count = 3;
    s.speed_limits = {20.0, 30.0};
    s.ego = Vehicle{0, 1, 0.0, 25.0, {}};
    s.others = {
        Vehicle{1, 1, 30.0, 15.0, {{"color", "white"}, {"make", "Toyota Camry"}}},
        Vehicle{2, 0, 60.0, 20.0, {{"color", "blue"}, {"make", "Honda Civic"}}},
    };
    return s;
}

ScenarioDescription describe(const HighwayState& state) {
    validate(state);
    ScenarioDescription out;
    out.meta.navigation_instruction = "Continue along the highway.";
    out.meta.ego_speed_mps = state.ego.speed;

    std::string text = fmt::format(
        "You are driving on a highway with {} lanes, numbered from 0 (leftmost) to {} (rightmost). "
        "You are in lane {}, driving at {} m/s.",
        state.lane_count, state.lane_count - 1, state.ego.lane, one_decimal(state.ego.speed));
    if (state.others.empty()) {
        text += " There are no other vehicles on the road.";
    }

    for (int lane : reachable_lanes(state.ego.lane, state.lane_count)) {
        const auto a = compute_ttc(state, lane);
        const auto label = lane_label(lane, state.ego.lane);
        if (!a.lead_id) {
            text += fmt::format(" In lane {} ({}) there is no vehicle ahead, so the time-to-collision is unbounded.",
                                lane, label);
            continue;
        }
        const Vehicle& lead = *find_vehicle(state, *a.lead_id);
        text += fmt::format(" In lane {} ({}) the nearest vehicle ahead is {} m away, driving at {} m/s", lane, label,
                            one_decimal(*a.gap), one_decimal(lead.speed));
        if (a.ttc) {
            text += fmt::format(", giving a time-to-collision of {} seconds.", one_decimal(*a.ttc));
        } else {
            text += ", and is not closing in, so the time-to-collision is unbounded.";
        }

        SceneElement element{ElementCategory::Vehicle, lead.attributes};
        element.attributes.try_emplace("type", "car");
        element.attributes["lane"] = std::to_string(lane);
        element.attributes["relation"] = fmt::format("ahead in lane {}", lane);
        if (!lead.attributes.empty()) {
            text += " " + render_sentence(element);
        }
        out.structured_elements.push_back(std::move(element));
    }
    out.text = std::move(text);
    return out;
}

std::vector<LaneAssessment> ParsedDescription::assessments() const {
    std::vector<LaneAssessment> out;
    for (const auto& l : lanes) {
        LaneAssessment a{l.lane, std::nullopt, l.gap, std::nullopt};
        if (l.gap && l.lead_speed) {
            const double closing = ego_speed - *l.lead_speed;
            if (closing > kClosingEpsilon) {
                a.ttc = *l.gap / closing;
            }
        } else if (l.stated_ttc) {
            a.ttc = l.stated_ttc;
        }
        out.push_back(a);
    }
    return out;
}

std::optional<ParsedDescription> read_description(const std::string& text) {
    static const std::regex kLanes(R"(with (\d+) lanes)");
    static const std::regex kEgo(R"(You are in lane (\d+), driving at ([0-9]+(?:\.[0-9]+)?) m/s)");
    static const std::regex kEmpty(R"(In lane (\d+) \([^)]*\) there is no vehicle ahead)");
    static const std::regex kLead(
        R"(In lane (\d+) \([^)]*\) the nearest vehicle ahead is ([0-9]+(?:\.[0-9]+)?) m away, driving at ([0-9]+(?:\.[0-9]+)?) m/s(, giving a time-to-collision of ([0-9]+(?:\.[0-9]+)?) seconds)?)");

    ParsedDescription out;
    std::smatch m;
    if (!std::regex_search(text, m, kLanes)) return std::nullopt;
    out.lane_count = std::stoi(m[1].str());
    if (!std::regex_search(text, m, kEgo)) return std::nullopt;
    out.ego_lane = std::stoi(m[1].str());
    out.ego_speed = std::stod(m[2].str());
    if (out.lane_count < 2 || out.ego_lane < 0 || out.ego_lane >= out.lane_count) return std::nullopt;

    std::map<int, ParsedLane> by_lane;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), kEmpty); it != std::sregex_iterator(); ++it) {
        const int lane = std::stoi((*it)[1].str());
        by_lane.try_emplace(lane, ParsedLane{lane, std::nullopt, std::nullopt, std::nullopt});
    }
    for (auto it = std::sregex_iterator(text.begin(), text.end(), kLead); it != std::sregex_iterator(); ++it) {
        const auto& mm = *it;
        ParsedLane l;
        l.lane = std::stoi(mm[1].str());
        l.gap = std::stod(mm[2].str());
        l.lead_speed = std::stod(mm[3].str());
        if (mm[5].matched) l.stated_ttc = std::stod(mm[5].str());
        by_lane.try_emplace(l.lane, l);
    }
    const auto expected = reachable_lanes(out.ego_lane, out.lane_count);
    for (int lane : expected) {
        const auto it = by_lane.find(lane);
        if (it == by_lane.end()) return std::nullopt;
        out.lanes.push_back(it->second);
    }
    return out;
}

void to_json(nlohmann::json& j, const Vehicle& v) {
    j = nlohmann::json{{"id", v.id}, {"lane", v.lane}, {"position", v.position}, {"speed", v.speed},
                       {"attributes", v.attributes}};
}

void to_json(nlohmann::json& j, const HighwayState& s) {
    j = nlohmann::json{{"lane_count", s.lane_count},
                       {"ego", s.ego},
                       {"others", s.others},
                       {"step", s.step},
                       {"speed_limits", {{"min", s.speed_limits.min}, {"max", s.speed_limits.max}}}};
}

void to_json(nlohmann::json& j, const LaneAssessment& a) {
    j = nlohmann::json{{"lane", a.lane}, {"ttc", nullptr}, {"gap", nullptr}, {"lead_id", nullptr}};
    if (a.ttc) j["ttc"] = *a.ttc;
    if (a.gap) j["gap"] = *a.gap;
    if (a.lead_id) j["lead_id"] = *a.lead_id;
}

void to_json(nlohmann::json& j, const EnvConfig& c) {
    j = nlohmann::json{
        {"lane_count", c.lane_count},
        {"vehicles", {c.min_vehicles, c.max_vehicles}},
        {"gap", {c.min_gap, c.max_gap}},
        {"speed", {c.min_speed, c.max_speed}},
        {"ego_speed_limits", {c.ego_speed_limits.min, c.ego_speed_limits.max}},
        {"require_open_lane", c.require_open_lane},
        {"vehicle_attributes", c.vehicle_attributes},
        {"placement_attempts", c.placement_attempts},
    };
}

namespace {

Vehicle vehicle_from_json(const nlohmann::json& j, const std::string& pointer) {
    using namespace json_io;
    Vehicle v;
    v.id = static_cast<int>(integer_field(j, "id", pointer));
    v.lane = static_cast<int>(integer_field(j, "lane", pointer));
    v.position = number_field(j, "position", pointer);
    v.speed = number_field(j, "speed", pointer);
    if (j.contains("attributes")) {
        const auto& attrs = object_field(j, "attributes", pointer);
        for (const auto& [k, val] : attrs.items()) {
            v.attributes[k] = expect_string(val, child(child(pointer, "attributes"), k));
        }
    }
    return v;
}

}  // namespace

HighwayState state_from_json(const nlohmann::json& j, const std::string& pointer) {
    using namespace json_io;
    HighwayState s;
    s.lane_count = static_cast<int>(integer_field(j, "lane_count", pointer));
    s.ego = vehicle_from_json(object_field(j, "ego", pointer), child(pointer, "ego"));
    const auto& others = array_field(j, "others", pointer);
    for (std::size_t i = 0; i < others.size(); ++i) {
        s.others.push_back(vehicle_from_json(others[i], child(child(pointer, "others"), i)));
    }
    s.step = static_cast<int>(integer_field(j, "step", pointer));
    const auto& limits = object_field(j, "speed_limits", pointer);
    s.speed_limits.min = number_field(limits, "min", child(pointer, "speed_limits"));
    s.speed_limits.max = number_field(limits, "max", child(pointer, "speed_limits"));
    return s;
}

EnvConfig env_config_from_json(const nlohmann::json& j, const std::string& pointer) {
    json_io::expect_object(j, pointer);
    EnvConfig c;
    if (j.contains("lane_count")) c.lane_count = static_cast<int>(json_io::integer_field(j, "lane_count", pointer));
    const auto vehicles = range_field(j, "vehicles", pointer, {c.min_vehicles, c.max_vehicles});
    c.min_vehicles = static_cast<int>(vehicles.first);
    c.max_vehicles = static_cast<int>(vehicles.second);
    std::tie(c.min_gap, c.max_gap) = range_field(j, "gap", pointer, {c.min_gap, c.max_gap});
    std::tie(c.min_speed, c.max_speed) = range_field(j, "speed", pointer, {c.min_speed, c.max_speed});
    const auto ego = range_field(j, "ego_speed_limits", pointer, {c.ego_speed_limits.min, c.ego_speed_limits.max});
    c.ego_speed_limits = {ego.first, ego.second};
    if (j.contains("require_open_lane")) c.require_open_lane = json_io::bool_field(j, "require_open_lane", pointer);
    if (j.contains("vehicle_attributes")) c.vehicle_attributes = json_io::bool_field(j, "vehicle_attributes", pointer);
    if (j.contains("placement_attempts")) {
        c.placement_attempts = static_cast<int>(json_io::integer_field(j, "placement_attempts", pointer));
    }
    return c;
}

}  // namespace drivepoison::sim
