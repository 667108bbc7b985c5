#include "drivepoison/json_io.hpp"

#include <fstream>
#include <sstream>

#include "drivepoison/errors.hpp"

namespace drivepoison::json_io {

std::string child(const std::string& pointer, std::string_view key) {
    std::string out = pointer + "/";
    for (char c : key) {
        if (c == '~') {
            out += "~0";
        } else if (c == '/') {
            out += "~1";
        } else {
            out += c;
        }
    }
    return out;
}

std::string child(const std::string& pointer, std::size_t index) {
    return pointer + "/" + std::to_string(index);
}

void expect_object(const json& value, const std::string& pointer) {
    if (!value.is_object()) {
        throw SchemaError(pointer.empty() ? "/" : pointer, "expected an object");
    }
}

std::string expect_string(const json& value, const std::string& pointer) {
    if (!value.is_string()) {
        throw SchemaError(pointer, "expected a string");
    }
    return value.get<std::string>();
}

const json& field(const json& obj, std::string_view key, const std::string& pointer) {
    expect_object(obj, pointer);
    const auto it = obj.find(key);
    if (it == obj.end()) {
        throw SchemaError(child(pointer, key), "missing required field");
    }
    return *it;
}

std::string string_field(const json& obj, std::string_view key, const std::string& pointer) {
    return expect_string(field(obj, key, pointer), child(pointer, key));
}

double number_field(const json& obj, std::string_view key, const std::string& pointer) {
    const auto& v = field(obj, key, pointer);
    if (!v.is_number()) {
        throw SchemaError(child(pointer, key), "expected a number");
    }
    return v.get<double>();
}

long long integer_field(const json& obj, std::string_view key, const std::string& pointer) {
    const auto& v = field(obj, key, pointer);
    if (!v.is_number_integer()) {
        throw SchemaError(child(pointer, key), "expected an integer");
    }
    return v.get<long long>();
}

bool bool_field(const json& obj, std::string_view key, const std::string& pointer) {
    const auto& v = field(obj, key, pointer);
    if (!v.is_boolean()) {
        throw SchemaError(child(pointer, key), "expected a boolean");
    }
    return v.get<bool>();
}

const json& array_field(const json& obj, std::string_view key, const std::string& pointer) {
    const auto& v = field(obj, key, pointer);
    if (!v.is_array()) {
        throw SchemaError(child(pointer, key), "expected an array");
    }
    return v;
}

const json& object_field(const json& obj, std::string_view key, const std::string& pointer) {
    const auto& v = field(obj, key, pointer);
    expect_object(v, child(pointer, key));
    return v;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_file(const std::filesystem::path& path) {
    const std::string content = read_text(path);
    try {
        return json::parse(content);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("malformed JSON in ") + path.string() + ": " + e.what());
    }
}

void write_text(const std::filesystem::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

}  // namespace drivepoison::json_io
