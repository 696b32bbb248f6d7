#pragma once

#include <nlohmann/json.hpp>

#include <set>
#include <string>

#include "plf/error.hpp"

namespace plf {

/// Reads one JSON object, remembering which keys were consumed, so that leftovers can be
/// reported by their full dotted path ("models[1].qrnn.learninrate").
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorCode::InvalidConfig, where() + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    if (!j_.contains(key)) {
      seen_.insert(key);
      return fallback;
    }
    return require<T>(key);
  }

  template <class T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw Error(ErrorCode::InvalidConfig, "missing key " + child(key));
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::InvalidConfig, "wrong type for " + child(key));
    }
  }

  StrictObject object(const std::string& key) {
    seen_.insert(key);
    return StrictObject(j_.at(key), child(key));
  }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config root" : path_; }
  const std::string& path() const { return path_; }

  /// Throws UnknownConfigKey naming the first key never read, in key order.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw Error(ErrorCode::UnknownConfigKey, "unknown key " + child(key));
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace plf
