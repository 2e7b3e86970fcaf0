#pragma once

#include "offroad/common.hpp"

#include <json.hpp>

#include <string>

namespace offroad {

using Json = nlohmann::json;

inline Json to_json_vec(const Vec2& v) { return Json::array({v.x(), v.y()}); }

inline Vec2 vec2_from_json(const Json& j, const char* field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw IoError(std::string("field '") + field + "' must be a 2-element numeric array");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline const Json& require(const Json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) throw IoError(std::string("missing field '") + field + "'");
  return j.at(field);
}

inline double require_number(const Json& j, const char* field) {
  const Json& v = require(j, field);
  if (!v.is_number()) throw IoError(std::string("field '") + field + "' must be a number");
  return v.get<double>();
}

// Reads j[field] into out when present; leaves the default otherwise.
template <typename T>
void read_optional(const Json& j, const char* field, T& out) {
  if (j.is_object() && j.contains(field)) out = j.at(field).get<T>();
}

}  // namespace offroad
