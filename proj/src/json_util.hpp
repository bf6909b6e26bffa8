// Copyright 2026 The frappe-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>

#include <json.hpp>

#include "frappe/error.hpp"

namespace frappe::detail {

using nlohmann::json;

inline void require_object(const json& doc, std::string_view where) {
  if (!doc.is_object()) fail(ErrorKind::Config, std::string(where) + " must be a JSON object");
}

inline void check_keys(const json& doc, std::initializer_list<std::string_view> allowed,
                       std::string_view where) {
  require_object(doc, where);
  for (const auto& item : doc.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      std::string list;
      for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
      fail(ErrorKind::Config, "unknown key '" + item.key() + "' in " + std::string(where) +
                                  " (allowed: " + list + ")");
    }
  }
}

template <typename T>
T convert(const json& value, const char* key, std::string_view where) {
  // nlohmann wraps negative integers into unsigned targets; reject them.
  if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!value.is_number_integer() || (!value.is_number_unsigned() && value.get<std::int64_t>() < 0))
      fail(ErrorKind::Config, std::string(where) + "." + key + " must be a nonnegative integer");
  }
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::Config, std::string(where) + "." + key + " has the wrong type");
  }
}

template <typename T>
T get_or(const json& doc, const char* key, T fallback, std::string_view where) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return fallback;
  return convert<T>(*it, key, where);
}

template <typename T>
T get_required(const json& doc, const char* key, std::string_view where) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null())
    fail(ErrorKind::Config, "missing required key " + std::string(where) + "." + key);
  return convert<T>(*it, key, where);
}

}  // namespace frappe::detail
