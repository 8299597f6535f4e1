#pragma once

// Experiment configuration files: a TOML subset (tables, key = value,
// numbers, booleans, strings, single-line arrays, '#' comments).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "experiments.hpp"

namespace cglavg {

struct TomlValue {
    enum class Kind { number, boolean, string, array };
    Kind kind = Kind::number;
    std::string raw;  ///< literal text for numbers, unescaped text for strings
    double number = 0.0;
    bool boolean = false;
    std::vector<TomlValue> items;
    int line = 0;
};

/// Flat view: "section.key" -> value (top-level keys have no prefix).
using TomlTable = std::map<std::string, TomlValue>;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool bare_key(const std::string& k) {
    return !k.empty() && std::all_of(k.begin(), k.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    });
}

class TomlLineParser {
public:
    TomlLineParser(const std::string& text, int line) : s_(text), line_(line) {}

    TomlValue value() {
        skip_ws();
        if (pos_ >= s_.size()) fail("missing value");
        TomlValue v;
        v.line = line_;
        const char c = s_[pos_];
        if (c == '"') {
            v.kind = TomlValue::Kind::string;
            v.raw = string_literal();
        } else if (c == '[') {
            v.kind = TomlValue::Kind::array;
            ++pos_;
            skip_ws();
            if (pos_ < s_.size() && s_[pos_] == ']') {
                ++pos_;
                return v;
            }
            while (true) {
                v.items.push_back(value());
                skip_ws();
                if (pos_ >= s_.size()) fail("unterminated array");
                if (s_[pos_] == ',') {
                    ++pos_;
                    skip_ws();
                    if (pos_ < s_.size() && s_[pos_] == ']') {
                        ++pos_;
                        break;
                    }
                    continue;
                }
                if (s_[pos_] == ']') {
                    ++pos_;
                    break;
                }
                fail("expected ',' or ']' in array");
            }
        } else {
            std::size_t end = pos_;
            while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && s_[end] != ' ' && s_[end] != '\t') ++end;
            const std::string tok = s_.substr(pos_, end - pos_);
            pos_ = end;
            if (tok == "true" || tok == "false") {
                v.kind = TomlValue::Kind::boolean;
                v.boolean = tok == "true";
                v.raw = tok;
            } else {
                v.kind = TomlValue::Kind::number;
                v.raw = tok;
                std::string clean;
                for (char ch : tok)
                    if (ch != '_') clean += ch;
                const char* first = clean.data();
                const char* last = clean.data() + clean.size();
                if (!clean.empty() && *first == '+') ++first;
                const auto res = std::from_chars(first, last, v.number);
                if (res.ec != std::errc() || res.ptr != last || clean.empty())
                    fail("cannot parse value '" + tok + "' (strings need double quotes)");
            }
        }
        return v;
    }

    void expect_end() {
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing text '" + s_.substr(pos_) + "'");
    }

    [[noreturn]] void fail(const std::string& m) const {
        throw ConfigError("line " + std::to_string(line_) + ": " + m);
    }

private:
    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }

    std::string string_literal() {
        ++pos_;
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            char c = s_[pos_++];
            if (c == '\\') {
                if (pos_ >= s_.size()) fail("unterminated escape");
                const char e = s_[pos_++];
                switch (e) {
                    case 'n': c = '\n'; break;
                    case 't': c = '\t'; break;
                    case '"': c = '"'; break;
                    case '\\': c = '\\'; break;
                    default: fail(std::string("unsupported escape \\") + e);
                }
            }
            out += c;
        }
        if (pos_ >= s_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    const std::string& s_;
    int line_;
    std::size_t pos_ = 0;
};

/// Drops a '#' comment that is not inside a string.
inline std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

}  // namespace detail

inline TomlTable parse_toml(const std::string& text) {
    TomlTable table;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string body = detail::trim(detail::strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']' || body.size() < 3)
                throw ConfigError("line " + std::to_string(lineno) + ": malformed table header");
            section = detail::trim(body.substr(1, body.size() - 2));
            if (!detail::bare_key(section))
                throw ConfigError("line " + std::to_string(lineno) + ": bad table name '" + section + "'");
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(body.substr(0, eq));
        if (!detail::bare_key(key)) throw ConfigError("line " + std::to_string(lineno) + ": bad key '" + key + "'");
        const std::string rest = detail::trim(body.substr(eq + 1));
        detail::TomlLineParser p(rest, lineno);
        TomlValue v = p.value();
        p.expect_end();
        const std::string full = section.empty() ? key : section + "." + key;
        if (table.count(full)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + full + "'");
        table.emplace(full, std::move(v));
    }
    return table;
}

inline std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Options consumed only by the simulate subcommand.
struct SimulateOptions {
    double epsilon = 0.1;
    bool write_samples = true;
};

struct FullConfig {
    ExperimentConfig experiment;
    SimulateOptions simulate;
};

namespace detail {

struct KeySpec {
    std::string name;
    std::function<void(FullConfig&, const TomlValue&)> set;
    std::function<std::string(const FullConfig&)> echo;
};

inline std::string num_text(double x) {
    std::ostringstream o;
    o.precision(17);
    o << x;
    std::string s = o.str();
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

inline double as_number(const TomlValue& v, const std::string& key) {
    if (v.kind != TomlValue::Kind::number)
        throw ConfigError("line " + std::to_string(v.line) + ": '" + key + "' expects a number");
    return v.number;
}

inline std::uint64_t as_count(const TomlValue& v, const std::string& key) {
    const double x = as_number(v, key);
    const std::string bad = "line " + std::to_string(v.line) + ": '" + key + "' expects a non-negative integer";
    if (v.raw.find_first_of(".eEin") == std::string::npos) {
        std::string clean;
        for (char c : v.raw)
            if (c != '_' && c != '+') clean += c;
        std::uint64_t out = 0;
        const auto res = std::from_chars(clean.data(), clean.data() + clean.size(), out);
        if (res.ec != std::errc() || res.ptr != clean.data() + clean.size()) throw ConfigError(bad);
        return out;
    }
    if (!(x >= 0.0) || x != std::floor(x) || x > 9.007199254740992e15) throw ConfigError(bad);
    return static_cast<std::uint64_t>(x);
}

inline std::vector<double> as_numbers(const TomlValue& v, const std::string& key) {
    if (v.kind != TomlValue::Kind::array)
        throw ConfigError("line " + std::to_string(v.line) + ": '" + key + "' expects an array of numbers");
    std::vector<double> out;
    for (const auto& it : v.items) out.push_back(as_number(it, key));
    return out;
}

inline std::string list_text(const std::vector<double>& xs) {
    std::string s = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + num_text(xs[i]);
    return s + "]";
}

inline const std::vector<KeySpec>& key_specs() {
    using V = const TomlValue&;
    using C = const FullConfig&;
    static const std::vector<KeySpec> specs = [] {
        std::vector<KeySpec> k;
        auto real = [&k](std::string name, auto member) {
            k.push_back({name, [name, member](FullConfig& c, V v) { member(c) = as_number(v, name); },
                         [member](C c) { return num_text(member(const_cast<FullConfig&>(c))); }});
        };
        auto count = [&k](std::string name, auto member) {
            k.push_back({name,
                         [name, member](FullConfig& c, V v) {
                             member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(as_count(v, name));
                         },
                         [member](C c) { return std::to_string(member(const_cast<FullConfig&>(c))); }});
        };
        auto list = [&k](std::string name, auto member) {
            k.push_back({name, [name, member](FullConfig& c, V v) { member(c) = as_numbers(v, name); },
                         [member](C c) { return list_text(member(const_cast<FullConfig&>(c))); }});
        };
        auto flag = [&k](std::string name, auto member) {
            k.push_back({name,
                         [name, member](FullConfig& c, V v) {
                             if (v.kind != TomlValue::Kind::boolean)
                                 throw ConfigError("line " + std::to_string(v.line) + ": '" + name +
                                                   "' expects true or false");
                             member(c) = v.boolean;
                         },
                         [member](C c) { return std::string(member(const_cast<FullConfig&>(c)) ? "true" : "false"); }});
        };
        k.push_back({"family",
                     [](FullConfig& c, V v) {
                         if (v.kind != TomlValue::Kind::string)
                             throw ConfigError("line " + std::to_string(v.line) + ": 'family' expects a string");
                         c.experiment.family = v.raw;
                     },
                     [](C c) { return "\"" + c.experiment.family + "\""; }});
        k.push_back({"integrator.scheme",
                     [](FullConfig& c, V v) {
                         if (v.kind != TomlValue::Kind::string)
                             throw ConfigError("line " + std::to_string(v.line) + ": 'scheme' expects a string");
                         try {
                             c.experiment.scheme = scheme_from_string(v.raw);
                         } catch (const InvalidArgument& e) {
                             throw ConfigError("line " + std::to_string(v.line) + ": " + e.what());
                         }
                     },
                     [](C c) { return "\"" + to_string(c.experiment.scheme) + "\""; }});

        real("family_params.alpha", [](FullConfig& c) -> double& { return c.experiment.params.alpha; });
        real("family_params.beta", [](FullConfig& c) -> double& { return c.experiment.params.beta; });
        real("family_params.gamma0", [](FullConfig& c) -> double& { return c.experiment.params.gamma0; });
        real("family_params.a_gamma", [](FullConfig& c) -> double& { return c.experiment.params.a_gamma; });
        real("family_params.omega_gamma", [](FullConfig& c) -> double& { return c.experiment.params.omega_gamma; });
        real("family_params.c_f", [](FullConfig& c) -> double& { return c.experiment.params.c_f; });
        real("family_params.omega_f", [](FullConfig& c) -> double& { return c.experiment.params.omega_f; });
        real("family_params.b0", [](FullConfig& c) -> double& { return c.experiment.params.b0; });
        real("family_params.b1", [](FullConfig& c) -> double& { return c.experiment.params.b1; });
        real("family_params.omega_b", [](FullConfig& c) -> double& { return c.experiment.params.omega_b; });
        real("family_params.q1", [](FullConfig& c) -> double& { return c.experiment.params.q1; });
        real("family_params.omega_g", [](FullConfig& c) -> double& { return c.experiment.params.omega_g; });
        real("family_params.r", [](FullConfig& c) -> double& { return c.experiment.params.r; });
        real("family_params.omega_m", [](FullConfig& c) -> double& { return c.experiment.params.omega_m; });
        real("family_params.sigma_scale", [](FullConfig& c) -> double& { return c.experiment.params.sigma_scale; });
        real("family_params.common_omega", [](FullConfig& c) -> double& { return c.experiment.common_omega; });

        count("grid.dimension", [](FullConfig& c) -> int& { return c.experiment.dimension; });
        count("grid.modes", [](FullConfig& c) -> int& { return c.experiment.modes; });
        real("grid.period", [](FullConfig& c) -> double& { return c.experiment.period; });
        real("grid.dealias_fraction", [](FullConfig& c) -> double& { return c.experiment.dealias_fraction; });
        count("grid.galerkin_n", [](FullConfig& c) -> std::size_t& { return c.experiment.galerkin_n; });

        real("integrator.dt", [](FullConfig& c) -> double& { return c.experiment.dt; });
        real("integrator.steps_per_epsilon", [](FullConfig& c) -> double& { return c.experiment.steps_per_epsilon; });
        real("integrator.blow_up_threshold", [](FullConfig& c) -> double& { return c.experiment.blow_up_threshold; });

        list("experiment.epsilon_grid", [](FullConfig& c) -> std::vector<double>& { return c.experiment.epsilon_grid; });
        count("experiment.paths", [](FullConfig& c) -> std::size_t& { return c.experiment.n_paths; });
        count("experiment.seed", [](FullConfig& c) -> std::uint64_t& { return c.experiment.seed; });
        real("experiment.start_time", [](FullConfig& c) -> double& { return c.experiment.start_time; });
        real("experiment.horizon", [](FullConfig& c) -> double& { return c.experiment.horizon; });
        real("experiment.init_amplitude", [](FullConfig& c) -> double& { return c.experiment.init_amplitude; });
        list("experiment.eval_times", [](FullConfig& c) -> std::vector<double>& { return c.experiment.eval_times; });
        flag("experiment.eval_over_period", [](FullConfig& c) -> bool& { return c.experiment.eval_over_period; });
        list("experiment.depth_schedule",
             [](FullConfig& c) -> std::vector<double>& { return c.experiment.depth_schedule; });
        real("experiment.pullback_tol", [](FullConfig& c) -> double& { return c.experiment.pullback_tol; });
        count("experiment.bootstrap_samples",
              [](FullConfig& c) -> std::size_t& { return c.experiment.bootstrap_samples; });
        real("experiment.threshold_first", [](FullConfig& c) -> double& { return c.experiment.threshold_first; });
        real("experiment.threshold_second", [](FullConfig& c) -> double& { return c.experiment.threshold_second; });
        list("experiment.kbm_T_grid", [](FullConfig& c) -> std::vector<double>& { return c.experiment.kbm_T_grid; });
        list("experiment.kbm_t_probes",
             [](FullConfig& c) -> std::vector<double>& { return c.experiment.kbm_t_probes; });
        real("experiment.periodicity_epsilon",
             [](FullConfig& c) -> double& { return c.experiment.periodicity_epsilon; });
        count("experiment.phase_points", [](FullConfig& c) -> std::size_t& { return c.experiment.phase_points; });
        real("experiment.probe_period_factor",
             [](FullConfig& c) -> double& { return c.experiment.probe_period_factor; });
        real("experiment.fallback_period", [](FullConfig& c) -> double& { return c.experiment.fallback_period; });
        count("experiment.global_points", [](FullConfig& c) -> std::size_t& { return c.experiment.global_points; });

        real("simulate.epsilon", [](FullConfig& c) -> double& { return c.simulate.epsilon; });
        flag("simulate.write_samples", [](FullConfig& c) -> bool& { return c.simulate.write_samples; });
        return k;
    }();
    return specs;
}

}  // namespace detail

/// Every recognised key, in echo order.
inline std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& s : detail::key_specs()) out.push_back(s.name);
    return out;
}

inline std::string nearest_key(const std::string& key) {
    std::string best;
    std::size_t dist = std::string::npos;
    for (const auto& s : detail::key_specs()) {
        // Compare on the full name and on the part after the table prefix.
        const auto dot = s.name.find('.');
        const std::string tail = dot == std::string::npos ? s.name : s.name.substr(dot + 1);
        const auto kdot = key.find('.');
        const std::string ktail = kdot == std::string::npos ? key : key.substr(kdot + 1);
        const std::size_t d = std::min(levenshtein(key, s.name), levenshtein(ktail, tail) + 1);
        if (d < dist) {
            dist = d;
            best = s.name;
        }
    }
    return best;
}

/// Applies a parsed table on top of the defaults and validates the result.
inline FullConfig config_from_table(const TomlTable& table) {
    FullConfig cfg;
    const auto& specs = detail::key_specs();
    for (const auto& [key, value] : table) {
        const auto it = std::find_if(specs.begin(), specs.end(), [&](const auto& s) { return s.name == key; });
        if (it == specs.end())
            throw ConfigError("line " + std::to_string(value.line) + ": unknown key '" + key + "' (did you mean '" +
                              nearest_key(key) + "'?)");
        it->set(cfg, value);
    }
    validate(cfg.experiment);
    if (!(cfg.simulate.epsilon > 0.0 && cfg.simulate.epsilon <= 1.0))
        throw ConfigError("simulate.epsilon must lie in (0, 1]");
    return cfg;
}

inline FullConfig parse_config_text(const std::string& text) { return config_from_table(parse_toml(text)); }

inline FullConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Every resolved setting as 'key = value' lines (defaults included).
inline std::vector<std::string> config_echo(const FullConfig& cfg) {
    std::vector<std::string> out;
    for (const auto& s : detail::key_specs()) out.push_back(s.name + " = " + s.echo(cfg));
    return out;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string config_hash(const FullConfig& cfg) {
    std::string text;
    for (const auto& l : config_echo(cfg)) text += l + "\n";
    std::ostringstream o;
    o << std::hex;
    o.width(16);
    o.fill('0');
    o << fnv1a(text);
    return o.str();
}

}  // namespace cglavg
