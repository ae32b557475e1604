#include "denza/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "denza/error.hpp"
#include "denza/io.hpp"

namespace denza {

using nlohmann::json;

namespace {

void parse_into(const std::string& name, const std::string& t, std::string& out) { (void)name; out = t; }

void parse_into(const std::string& name, const std::string& t, bool& out)
{
    if (t == "true" || t == "1" || t == "on" || t == "yes")
        out = true;
    else if (t == "false" || t == "0" || t == "off" || t == "no")
        out = false;
    else
        throw ValidationError("--" + name + ": expected true/false, got '" + t + "'");
}

template <typename T>
void parse_number(const std::string& name, const std::string& t, T& out)
{
    T v{};
    const char* end = t.data() + t.size();
    auto [p, ec] = std::from_chars(t.data(), end, v);
    if (ec != std::errc() || p != end || t.empty())
        throw ValidationError("--" + name + ": cannot parse '" + t + "'");
    if constexpr (std::is_floating_point_v<T>)
        if (!std::isfinite(v))
            throw ValidationError("--" + name + ": value must be finite");
    out = v;
}

void parse_into(const std::string& name, const std::string& t, int& out) { parse_number(name, t, out); }
void parse_into(const std::string& name, const std::string& t, double& out) { parse_number(name, t, out); }
void parse_into(const std::string& name, const std::string& t, std::uint64_t& out) { parse_number(name, t, out); }

std::string show(const std::string& v) { return v; }
std::string show(bool v) { return v ? "true" : "false"; }
template <typename T>
std::string show(T v)
{
    return json(v).dump();
}

template <typename T>
void from_json_value(const std::string& name, const json& j, T& out)
{
    if constexpr (std::is_same_v<T, std::string>) {
        if (!j.is_string())
            throw ValidationError("config key '" + name + "' must be a string");
        out = j.get<std::string>();
    } else if constexpr (std::is_same_v<T, bool>) {
        if (!j.is_boolean())
            throw ValidationError("config key '" + name + "' must be a boolean");
        out = j.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer() || (std::is_unsigned_v<T> && j.is_number_integer() && !j.is_number_unsigned()))
            throw ValidationError("config key '" + name + "' must be an integer");
        out = j.get<T>();
    } else {
        if (!j.is_number())
            throw ValidationError("config key '" + name + "' must be a number");
        out = j.get<T>();
    }
}

} // namespace

std::vector<std::string> RunConfig::field_names()
{
    return {
#define DENZA_NAME(type, name, def) #name,
        DENZA_RUN_CONFIG_FIELDS(DENZA_NAME)
#undef DENZA_NAME
    };
}

void RunConfig::set(const std::string& key, const std::string& text)
{
#define DENZA_SET(type, name, def)      \
    if (key == #name) {                 \
        parse_into(key, text, name);    \
        return;                         \
    }
    DENZA_RUN_CONFIG_FIELDS(DENZA_SET)
#undef DENZA_SET
    throw ValidationError("unknown config field '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const
{
#define DENZA_GET(type, name, def) \
    if (key == #name)              \
        return show(name);
    DENZA_RUN_CONFIG_FIELDS(DENZA_GET)
#undef DENZA_GET
    throw ValidationError("unknown config field '" + key + "'");
}

std::string RunConfig::to_json() const
{
    json j = json::object();
#define DENZA_TO_JSON(type, name, def) j[#name] = name;
    DENZA_RUN_CONFIG_FIELDS(DENZA_TO_JSON)
#undef DENZA_TO_JSON
    return j.dump(2) + "\n";
}

void RunConfig::merge_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object())
        throw ValidationError("config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        bool known = false;
#define DENZA_FROM_JSON(type, name, def)            \
    if (key == #name) {                             \
        from_json_value(key, it.value(), name);     \
        known = true;                               \
    }
        DENZA_RUN_CONFIG_FIELDS(DENZA_FROM_JSON)
#undef DENZA_FROM_JSON
        if (!known)
            throw ValidationError("unknown config key '" + key + "'");
    }
}

RunConfig RunConfig::load(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw ValidationError("config file not found: " + path.string());
    RunConfig c;
    c.merge_json(io::read_file(path));
    return c;
}

void RunConfig::save(const std::filesystem::path& path) const
{
    io::atomic_write(path, to_json());
}

} // namespace denza
