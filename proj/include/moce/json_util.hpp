#pragma once

// Strict readers for user-facing JSON documents: unknown keys and type
// mismatches raise InputError naming the offending path.

#include <json.hpp>

#include <initializer_list>
#include <string>

#include "moce/errors.hpp"

namespace moce::json_util {

using json = nlohmann::json;

inline void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": expected a JSON object");
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require_object(j, where);
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw InputError(where + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw InputError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(where + "." + key + ": wrong type");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return get<T>(j, key, where);
}

inline json parse(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(where + ": malformed JSON: " + e.what());
  }
}

}  // namespace moce::json_util
