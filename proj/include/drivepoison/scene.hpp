#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace drivepoison {

using Attributes = std::map<std::string, std::string>;

enum class ElementCategory { Object, Vehicle, Signal };

std::string to_string(ElementCategory c);
ElementCategory category_from_string(const std::string& s);  // throws SchemaError

/// One element of a driving scene, e.g. {type: "trash bin", color: "gray",
/// relation: "in front of me"}. `attributes` always carries "type".
struct SceneElement {
    ElementCategory category = ElementCategory::Object;
    Attributes attributes;

    bool operator==(const SceneElement&) const = default;
};

struct ScenarioMeta {
    std::string navigation_instruction;
    double ego_speed_mps = 0.0;

    bool operator==(const ScenarioMeta&) const = default;
};

struct ScenarioDescription {
    std::string text;
    std::vector<SceneElement> structured_elements;
    ScenarioMeta meta;

    bool operator==(const ScenarioDescription&) const = default;
};

/// Element-to-clause template: "a gray trash bin is in front of me",
/// "a red Mazda CX-5 with its hazard lights on is ahead in lane 1".
/// Extra attributes become leading adjectives in key order.
std::string render_clause(const SceneElement& e);

/// render_clause as a capitalised sentence ending in '.'.
std::string render_sentence(const SceneElement& e);

void to_json(nlohmann::json& j, const SceneElement& e);
void to_json(nlohmann::json& j, const ScenarioDescription& d);

SceneElement scene_element_from_json(const nlohmann::json& j, const std::string& pointer);
ScenarioDescription scenario_from_json(const nlohmann::json& j, const std::string& pointer);

}  // namespace drivepoison
