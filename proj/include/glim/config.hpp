#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "glim/common.hpp"

namespace glim::cfg {

// Declarative run configuration: a section/key-value text file checked
// against a typed schema. Unknown keys are rejected; overrides arrive as
// dotted key=value pairs and are type-checked the same way.
class Config {
public:
    enum class Type { Int, Float, Bool, String };

    static Config defaults();

    void load_file(const std::string& path);
    void apply_override(const std::string& key_value);  // "key=value"

    int64_t get_int(const std::string& key) const;
    double get_float(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    const std::string& get_string(const std::string& key) const;

    void set(const std::string& key, const std::string& raw_value);
    nlohmann::json to_json() const;

private:
    struct Entry {
        Type type;
        int64_t i = 0;
        double f = 0;
        bool b = false;
        std::string s;
    };
    std::map<std::string, Entry> entries_;

    const Entry& lookup(const std::string& key, Type want) const;
    void define(const std::string& key, Type type, const std::string& raw);
};

}  // namespace glim::cfg
