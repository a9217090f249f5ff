#pragma once

// JSON helpers shared by the measure and experiment parsers (not installed).

#include "krein/common.hpp"
#include "krein/measure.hpp"

#include <json.hpp>

#include <string>

namespace krein::cfg {

using json = nlohmann::json;

[[noreturn]] inline void fail(const std::string& path, const std::string& msg)
{
    throw Error(ErrorKind::Config, "config: " + (path.empty() ? std::string("<root>") : path) + ": " + msg);
}

/// Parses text, reporting syntax errors with line and column.
json parse_text(const std::string& text, const std::string& origin);

inline const json& require(const json& j, const std::string& key, const std::string& path)
{
    if (!j.is_object()) fail(path, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) fail(path, "missing field '" + key + "'");
    return *it;
}

double get_number(const json& j, const std::string& key, const std::string& path);
double get_number(const json& j, const std::string& key, const std::string& path, double fallback);
int get_int(const json& j, const std::string& key, const std::string& path, int fallback);
std::string get_string(const json& j, const std::string& key, const std::string& path, const std::string& fallback);
Vec2 get_vec2(const json& j, const std::string& path);

/// Measure description; see README for the schema.
MeasureSpec measure_from_json(const json& j, const std::string& path);

} // namespace krein::cfg
