#pragma once

#include <algorithm>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"
#include "jh/ops.hpp"

namespace jh {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Rejects keys outside the allowed set.
inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                       const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(where + ": unknown key '" + key + "'");
}

// Reads j[key] into out when present, with a typed error message otherwise.
template <typename V>
void read_opt(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

inline Extent3 extent3(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected an array of three integers");
    try {
        return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>()};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

inline void read_extent(const nlohmann::json& j, const char* key, Extent3& out, const std::string& where) {
    if (j.contains(key)) out = extent3(j.at(key), where + "." + key);
}

}  // namespace jh
