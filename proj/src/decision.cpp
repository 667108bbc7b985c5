#include "drivepoison/decision.hpp"

#include <algorithm>
#include <set>

#include "drivepoison/errors.hpp"
#include "drivepoison/text.hpp"

namespace drivepoison {

DecisionSet::DecisionSet(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    std::set<std::string> seen;
    for (const auto& t : tokens_) {
        if (t.empty()) {
            throw ConfigError("decision set contains an empty token");
        }
        if (!seen.insert(text::to_lower(t)).second) {
            throw ConfigError("decision set contains duplicate token: " + t);
        }
    }
}

DecisionSet DecisionSet::highway() {
    return DecisionSet({"LANE_LEFT", "IDLE", "LANE_RIGHT", "FASTER", "SLOWER"});
}

DecisionSet DecisionSet::urban() {
    return DecisionSet({"Accelerate", "Decelerate", "Idle", "TurnLeft", "TurnRight", "Stop"});
}

bool DecisionSet::contains(const Decision& d) const {
    return std::find(tokens_.begin(), tokens_.end(), d.token) != tokens_.end();
}

std::optional<Decision> DecisionSet::lookup(std::string_view token) const {
    for (const auto& t : tokens_) {
        if (text::iequals(t, token)) {
            return Decision{t};
        }
    }
    return std::nullopt;
}

}  // namespace drivepoison
