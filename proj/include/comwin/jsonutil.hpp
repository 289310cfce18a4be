#pragma once

#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace comwin {

/// Strict config reader: every key must be consumed, unknown keys are an
/// error rather than a warning so hyperparameter typos fail fast.
class JsonReader {
public:
    explicit JsonReader(const nlohmann::json& j, std::string context)
        : j_(j), context_(std::move(context)) {
        if (!j_.is_object())
            throw std::invalid_argument(context_ + ": expected a JSON object");
    }

    template <typename T>
    T get(const std::string& key, const T& fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument(context_ + ": bad value for '" + key + "': " + e.what());
        }
    }

    template <typename T>
    T require(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key))
            throw std::invalid_argument(context_ + ": missing required key '" + key + "'");
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument(context_ + ": bad value for '" + key + "': " + e.what());
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            (void)value;
            if (!seen_.count(key))
                throw std::invalid_argument(context_ + ": unknown key '" + key + "'");
        }
    }

private:
    const nlohmann::json& j_;
    std::string context_;
    std::set<std::string> seen_;
};

}  // namespace comwin
