#include "drivepoison/scene.hpp"

#include <cctype>
#include <set>

#include "drivepoison/errors.hpp"
#include "drivepoison/json_io.hpp"

namespace drivepoison {

namespace {

// Attributes with a fixed slot in the clause; everything else is an adjective.
const std::set<std::string> kSlotted = {"type", "make", "color", "relation", "hazard_lights", "lane"};

std::string article_for(const std::string& word) {
    if (word.empty()) {
        return "a";
    }
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(word.front())));
    return (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') ? "an" : "a";
}

}  // namespace

std::string to_string(ElementCategory c) {
    switch (c) {
        case ElementCategory::Object: return "object";
        case ElementCategory::Vehicle: return "vehicle";
        case ElementCategory::Signal: return "signal";
    }
    return "object";
}

ElementCategory category_from_string(const std::string& s) {
    if (s == "object") return ElementCategory::Object;
    if (s == "vehicle") return ElementCategory::Vehicle;
    if (s == "signal") return ElementCategory::Signal;
    throw SchemaError("", "unknown scene element category: " + s);
}

std::string render_clause(const SceneElement& e) {
    const auto get = [&](const std::string& key) -> std::string {
        const auto it = e.attributes.find(key);
        return it == e.attributes.end() ? std::string{} : it->second;
    };

    std::string noun_phrase;
    for (const auto& [key, value] : e.attributes) {
        if (!kSlotted.contains(key) && !value.empty()) {
            noun_phrase += value + " ";
        }
    }
    if (const auto color = get("color"); !color.empty()) {
        noun_phrase += color + " ";
    }
    const auto make = get("make");
    noun_phrase += make.empty() ? get("type") : make;
    if (get("hazard_lights") == "true") {
        noun_phrase += " with its hazard lights on";
    }

    std::string clause = article_for(noun_phrase) + " " + noun_phrase;
    const auto relation = get("relation");
    clause += relation.empty() ? " is nearby" : " is " + relation;
    return clause;
}

std::string render_sentence(const SceneElement& e) {
    std::string s = render_clause(e);
    s.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(s.front())));
    return s + ".";
}

void to_json(nlohmann::json& j, const SceneElement& e) {
    j = nlohmann::json{{"category", to_string(e.category)}, {"attributes", e.attributes}};
}

void to_json(nlohmann::json& j, const ScenarioDescription& d) {
    j = nlohmann::json{
        {"text", d.text},
        {"structured_elements", d.structured_elements},
        {"meta", {{"navigation_instruction", d.meta.navigation_instruction},
                  {"ego_speed_mps", d.meta.ego_speed_mps}}},
    };
}

SceneElement scene_element_from_json(const nlohmann::json& j, const std::string& pointer) {
    using namespace json_io;
    SceneElement e;
    const auto category = string_field(j, "category", pointer);
    if (category.empty()) {
        throw SchemaError(child(pointer, "category"), "category must be non-empty");
    }
    try {
        e.category = category_from_string(category);
    } catch (const SchemaError& err) {
        throw SchemaError(child(pointer, "category"), err.what());
    }
    const auto& attrs = object_field(j, "attributes", pointer);
    const auto attrs_ptr = child(pointer, "attributes");
    for (const auto& [key, value] : attrs.items()) {
        e.attributes[key] = expect_string(value, child(attrs_ptr, key));
    }
    if (!e.attributes.contains("type")) {
        throw SchemaError(child(attrs_ptr, "type"), "scene element requires a type attribute");
    }
    return e;
}

ScenarioDescription scenario_from_json(const nlohmann::json& j, const std::string& pointer) {
    using namespace json_io;
    ScenarioDescription d;
    d.text = string_field(j, "text", pointer);
    if (d.text.empty()) {
        throw SchemaError(child(pointer, "text"), "scenario text must be non-empty");
    }
    const auto& elems = array_field(j, "structured_elements", pointer);
    const auto elems_ptr = child(pointer, "structured_elements");
    for (std::size_t i = 0; i < elems.size(); ++i) {
        d.structured_elements.push_back(scene_element_from_json(elems[i], child(elems_ptr, i)));
    }
    const auto& meta = object_field(j, "meta", pointer);
    const auto meta_ptr = child(pointer, "meta");
    d.meta.navigation_instruction = string_field(meta, "navigation_instruction", meta_ptr);
    d.meta.ego_speed_mps = number_field(meta, "ego_speed_mps", meta_ptr);
    return d;
}

}  // namespace drivepoison
