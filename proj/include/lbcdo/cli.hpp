/*
   Copyright 2026 The lbcdo Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/


#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lbcdo/calibration.hpp"
#include "lbcdo/core_model.hpp"
#include "lbcdo/discretization.hpp"
#include "lbcdo/driver.hpp"
#include "lbcdo/errors.hpp"
#include "lbcdo/large_basket.hpp"
#include "lbcdo/monte_carlo.hpp"
#include "lbcdo/nn_inference.hpp"
#include "lbcdo/pricing.hpp"

namespace lbcdo::cli {

enum ExitCode : int { kExitOk = 0, kExitNumeric = 1, kExitUsage = 2, kExitIo = 3 };

/// Bad flags, missing inputs or an invalid configuration file.
class UsageError : public InvalidParameter {
public:
    using InvalidParameter::InvalidParameter;
};

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e) != nullptr || dynamic_cast<const LoadError*>(&e) != nullptr) return kExitIo;
    if (dynamic_cast<const InvalidParameter*>(&e) != nullptr || dynamic_cast<const ScheduleError*>(&e) != nullptr) {
        return kExitUsage;
    }
    if (dynamic_cast<const nlohmann::json::exception*>(&e) != nullptr) return kExitUsage;
    return kExitNumeric;
}

// ---------------------------------------------------------------------------
// Configuration

/// Tranche set of the scheme comparison table.
inline constexpr std::string_view kDefaultTranches = "0:0.03,0.03:0.06,0.06:0.09,0.09:0.12,0.12:0.22,0.22:1";

struct RunConfig {
    // model
    double r = 0.015;
    double sigma = 0.0543;
    double rho = 0.158;
    double lgd = 0.6;
    double alpha = 0.25;
    double maturity = 5.0;
    GridSettings grid{};
    SchemeSettings schemes{};
    // simulation
    std::size_t paths = 10000;
    std::uint64_t seed = 1;
    int substeps = 0; // 0: derived from the SPDE step counts
    Scheme scheme = Scheme::DeterministicMagnus;
    // inputs
    std::filesystem::path cds_file;
    std::filesystem::path tranche_file;
    std::filesystem::path x0_file;
    std::optional<double> index_bps;
    std::string tranche_set{kDefaultTranches};
    // calibration
    double sigma0 = 0.05;
    double rho0 = 0.5;
    double rho_min = 0.0;
    double rho_max = 1.0 - 1e-6;
    SigmaBox sigma_box{};
    int max_evaluations = 200;
    OptimizerMethod optimizer = OptimizerMethod::Auto;
    X0Mode x0_mode = X0Mode::Analytic;
    std::filesystem::path f_weights;
    PremiumConvention convention = PremiumConvention::AsPrinted;
    // dataset
    DatasetConfig dataset{};
    // output
    std::string output = "lbcdo_out";

    ModelParams params() const { return ModelParams({r, sigma, rho, lgd, alpha, maturity, sigma_box}); }
};

enum class FieldType { Number, Integer, Boolean, String };

struct FieldSpec {
    const char* section;
    const char* key;
    FieldType type;
    double minimum = -std::numeric_limits<double>::infinity();
    double maximum = std::numeric_limits<double>::infinity();
    std::vector<std::string> choices{};
    const char* description = "";
};

/// Every key accepted in a configuration file. docs/config.schema.json is
/// generated from this table by `lbcdo schema`.
inline const std::vector<FieldSpec>& config_fields() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    static const std::vector<FieldSpec> fields{
        {"model", "r", FieldType::Number, -1.0, 1.0, {}, "risk-free rate"},
        {"model", "sigma", FieldType::Number, 0.0, 5.0, {}, "asset volatility"},
        {"model", "rho", FieldType::Number, 0.0, 1.0, {}, "correlation with the common factor"},
        {"model", "lgd", FieldType::Number, 0.0, 1.0, {}, "loss given default"},
        {"model", "alpha", FieldType::Number, 0.0, 1.0, {}, "year fraction between resettlement dates"},
        {"model", "maturity", FieldType::Number, 0.0, 50.0, {}, "maturity in years"},
        {"grid", "a", FieldType::Number, -inf, 0.0, {}, "left end of the space grid"},
        {"grid", "b", FieldType::Number, 0.0, inf, {}, "right end of the space grid"},
        {"grid", "d", FieldType::Integer, 3, 100000, {}, "interior grid points"},
        {"schemes", "em_points", FieldType::Integer, 2, 100000, {}, "time points per quarter, Euler-Maruyama"},
        {"schemes", "sm_points", FieldType::Integer, 2, 100000, {}, "time points per quarter, stochastic Magnus"},
        {"schemes", "theta_points", FieldType::Integer, 2, 100000, {}, "time points per quarter, theta scheme"},
        {"schemes", "theta", FieldType::Number, 0.0, 1.0, {}, "theta of the theta scheme"},
        {"schemes", "rannacher", FieldType::Boolean, 0, 0, {}, "implicit Euler start-up each quarter"},
        {"schemes", "rannacher_half_steps", FieldType::Integer, 0, 1000, {}, "start-up half steps"},
        {"schemes", "magnus_order", FieldType::Integer, 1, 2, {}, "stochastic Magnus truncation order"},
        {"schemes", "propagator_cutoff", FieldType::Number, 0.0, 1e-6, {}, "relative cutoff for propagator entries"},
        {"simulation", "paths", FieldType::Integer, 1, 1e9, {}, "common-factor paths M"},
        {"simulation", "seed", FieldType::Integer, 0, 9007199254740992.0, {}, "random seed"},
        {"simulation", "substeps", FieldType::Integer, 0, 100000, {}, "driver sub-steps per quarter, 0 = derived"},
        {"simulation", "scheme", FieldType::String, 0, 0, {"em", "theta", "sm", "dm"}, "large-basket scheme"},
        {"inputs", "cds", FieldType::String, 0, 0, {}, "CDS quote CSV (name, spread_bps)"},
        {"inputs", "tranches", FieldType::String, 0, 0, {}, "tranche quote CSV (attach, detach, spread_bps)"},
        {"inputs", "index_bps", FieldType::Number, 0.0, inf, {}, "index quote in bps"},
        {"inputs", "x0", FieldType::String, 0, 0, {}, "explicit x0 CSV (column x0)"},
        {"inputs", "tranche_set", FieldType::String, 0, 0, {}, "tranches to price, attach:detach list"},
        {"calibration", "sigma0", FieldType::Number, 0.0, 5.0, {}, "start value of sigma"},
        {"calibration", "rho0", FieldType::Number, 0.0, 1.0, {}, "start value of rho"},
        {"calibration", "rho_min", FieldType::Number, 0.0, 1.0, {}, "lower bound of rho"},
        {"calibration", "rho_max", FieldType::Number, 0.0, 1.0, {}, "upper bound of rho"},
        {"calibration", "sigma_min", FieldType::Number, 0.0, 5.0, {}, "lower bound of sigma"},
        {"calibration", "sigma_max", FieldType::Number, 0.0, 5.0, {}, "upper bound of sigma"},
        {"calibration", "max_evaluations", FieldType::Integer, 1, 1e6, {}, "objective evaluation budget"},
        {"calibration", "optimizer", FieldType::String, 0, 0, {"auto", "lm", "nelder-mead"}, "least-squares method"},
        {"calibration", "x0_mode", FieldType::String, 0, 0, {"analytic", "nn"}, "x0 inference"},
        {"calibration", "f_weights", FieldType::String, 0, 0, {}, "weight file of f (nn mode)"},
        {"calibration", "premium_convention", FieldType::String, 0, 0, {"as-printed", "period-start", "period-end"},
         "outstanding notional used in premium legs"},
        {"dataset", "samples", FieldType::Integer, 1, 1e9, {}, "number of tuples"},
        {"dataset", "paths", FieldType::Integer, 2, 1e9, {}, "Monte Carlo paths per tuple"},
        {"dataset", "steps_per_quarter", FieldType::Integer, 1, 100000, {}, "time steps per quarter"},
        {"dataset", "bridge", FieldType::Boolean, 0, 0, {}, "Brownian-bridge barrier correction"},
        {"dataset", "x0_max", FieldType::Number, 0.0, inf, {}, "x0 drawn uniformly in (0, x0_max)"},
        {"dataset", "rho_min", FieldType::Number, 0.0, 1.0, {}, "lower end of the rho range"},
        {"dataset", "rho_max", FieldType::Number, 0.0, 1.0, {}, "upper end of the rho range"},
        {"dataset", "sigma_min", FieldType::Number, 0.0, 5.0, {}, "lower end of the sigma range"},
        {"dataset", "sigma_max", FieldType::Number, 0.0, 5.0, {}, "upper end of the sigma range"},
        {"output", "prefix", FieldType::String, 0, 0, {}, "prefix of all written files"},
    };
    return fields;
}

/// JSON Schema (draft 2020-12) of the configuration file.
inline nlohmann::json config_schema() {
    using nlohmann::json;
    json root = {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
                 {"title", "lbcdo run configuration"},
                 {"type", "object"},
                 {"additionalProperties", false},
                 {"properties", json::object()}};
    for (const auto& f : config_fields()) {
        json& section = root["properties"][f.section];
        if (section.is_null()) {
            section = {{"type", "object"}, {"additionalProperties", false}, {"properties", json::object()}};
        }
        json p = {{"description", f.description}};
        switch (f.type) {
        case FieldType::Number: p["type"] = "number"; break;
        case FieldType::Integer: p["type"] = "integer"; break;
        case FieldType::Boolean: p["type"] = "boolean"; break;
        case FieldType::String: p["type"] = "string"; break;
        }
        if (f.type == FieldType::Number || f.type == FieldType::Integer) {
            if (std::isfinite(f.minimum)) p["minimum"] = f.minimum;
            if (std::isfinite(f.maximum)) p["maximum"] = f.maximum;
        }
        if (!f.choices.empty()) p["enum"] = f.choices;
        section["properties"][f.key] = p;
    }
    return root;
}

namespace detail {

inline const FieldSpec* find_field(std::string_view section, std::string_view key) {
    for (const auto& f : config_fields()) {
        if (section == f.section && key == f.key) return &f;
    }
    return nullptr;
}

inline bool known_section(std::string_view section) {
    return std::any_of(config_fields().begin(), config_fields().end(),
                       [&](const FieldSpec& f) { return section == f.section; });
}

/// Checks the document against config_fields(); returns one message per problem.
inline std::vector<std::string> schema_errors(const nlohmann::json& doc) {
    std::vector<std::string> errors;
    if (!doc.is_object()) return {"configuration must be a JSON object"};
    for (const auto& [section, body] : doc.items()) {
        if (!known_section(section)) {
            errors.push_back("unknown section '" + section + "'");
            continue;
        }
        if (!body.is_object()) {
            errors.push_back("section '" + section + "' must be an object");
            continue;
        }
        for (const auto& [key, value] : body.items()) {
            const std::string where = section + "." + key;
            const FieldSpec* f = find_field(section, key);
            if (f == nullptr) {
                errors.push_back("unknown key '" + where + "'");
                continue;
            }
            switch (f->type) {
            case FieldType::Boolean:
                if (!value.is_boolean()) errors.push_back(where + " must be a boolean");
                break;
            case FieldType::String:
                if (!value.is_string()) {
                    errors.push_back(where + " must be a string");
                } else if (!f->choices.empty() &&
                           std::find(f->choices.begin(), f->choices.end(), value.get<std::string>()) ==
                               f->choices.end()) {
                    errors.push_back(where + " has unsupported value '" + value.get<std::string>() + "'");
                }
                break;
            case FieldType::Integer:
            case FieldType::Number: {
                if (!value.is_number()) {
                    errors.push_back(where + " must be a number");
                    break;
                }
                const double v = value.get<double>();
                if (f->type == FieldType::Integer && !value.is_number_integer()) {
                    errors.push_back(where + " must be an integer");
                } else if (!(v >= f->minimum && v <= f->maximum)) {
                    std::ostringstream msg;
                    msg << where << " = " << v << " outside [" << f->minimum << ", " << f->maximum << "]";
                    errors.push_back(msg.str());
                }
                break;
            }
            }
        }
    }
    return errors;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

inline OptimizerMethod parse_optimizer(std::string_view s) {
    if (s == "lm") return OptimizerMethod::LevenbergMarquardt;
    if (s == "nelder-mead") return OptimizerMethod::NelderMead;
    if (s == "auto") return OptimizerMethod::Auto;
    throw UsageError("unknown optimizer '" + std::string(s) + "'");
}

inline PremiumConvention parse_convention(std::string_view s) {
    if (s == "as-printed") return PremiumConvention::AsPrinted;
    if (s == "period-start") return PremiumConvention::PeriodStart;
    if (s == "period-end") return PremiumConvention::PeriodEnd;
    throw UsageError("unknown premium convention '" + std::string(s) + "'");
}

} // namespace detail

/// Validates `doc` and overlays it on the defaults. Relative input paths are
/// taken relative to `base`.
inline RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base = {}) {
    const auto errors = detail::schema_errors(doc);
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw UsageError(msg);
    }
    RunConfig c;
    auto section = [&](const char* name) -> const nlohmann::json& {
        static const nlohmann::json empty = nlohmann::json::object();
        return doc.contains(name) ? doc.at(name) : empty;
    };
    auto num = [](const nlohmann::json& s, const char* key, auto& target) {
        if (s.contains(key)) target = s.at(key).get<std::decay_t<decltype(target)>>();
    };
    const auto& model = section("model");
    num(model, "r", c.r);
    num(model, "sigma", c.sigma);
    num(model, "rho", c.rho);
    num(model, "lgd", c.lgd);
    num(model, "alpha", c.alpha);
    num(model, "maturity", c.maturity);
    const auto& grid = section("grid");
    num(grid, "a", c.grid.a);
    num(grid, "b", c.grid.b);
    num(grid, "d", c.grid.d);
    const auto& sch = section("schemes");
    num(sch, "em_points", c.schemes.em_points);
    num(sch, "sm_points", c.schemes.sm_points);
    num(sch, "theta_points", c.schemes.theta_points);
    num(sch, "theta", c.schemes.theta);
    num(sch, "rannacher", c.schemes.rannacher);
    num(sch, "rannacher_half_steps", c.schemes.rannacher_half_steps);
    num(sch, "magnus_order", c.schemes.magnus_order);
    num(sch, "propagator_cutoff", c.schemes.propagator_cutoff);
    const auto& sim = section("simulation");
    num(sim, "paths", c.paths);
    num(sim, "seed", c.seed);
    num(sim, "substeps", c.substeps);
    if (sim.contains("scheme")) c.scheme = *parse_scheme(sim.at("scheme").get<std::string>());
    const auto& in = section("inputs");
    if (in.contains("cds")) c.cds_file = detail::resolve(base, in.at("cds").get<std::string>());
    if (in.contains("tranches")) c.tranche_file = detail::resolve(base, in.at("tranches").get<std::string>());
    if (in.contains("x0")) c.x0_file = detail::resolve(base, in.at("x0").get<std::string>());
    if (in.contains("index_bps")) c.index_bps = in.at("index_bps").get<double>();
    num(in, "tranche_set", c.tranche_set);
    const auto& cal = section("calibration");
    num(cal, "sigma0", c.sigma0);
    num(cal, "rho0", c.rho0);
    num(cal, "rho_min", c.rho_min);
    num(cal, "rho_max", c.rho_max);
    num(cal, "sigma_min", c.sigma_box.lo);
    num(cal, "sigma_max", c.sigma_box.hi);
    num(cal, "max_evaluations", c.max_evaluations);
    if (cal.contains("optimizer")) c.optimizer = detail::parse_optimizer(cal.at("optimizer").get<std::string>());
    if (cal.contains("x0_mode")) c.x0_mode = cal.at("x0_mode") == "nn" ? X0Mode::Network : X0Mode::Analytic;
    if (cal.contains("f_weights")) c.f_weights = detail::resolve(base, cal.at("f_weights").get<std::string>());
    if (cal.contains("premium_convention")) {
        c.convention = detail::parse_convention(cal.at("premium_convention").get<std::string>());
    }
    const auto& ds = section("dataset");
    num(ds, "samples", c.dataset.samples);
    num(ds, "paths", c.dataset.mc.paths);
    num(ds, "steps_per_quarter", c.dataset.mc.steps_per_quarter);
    num(ds, "bridge", c.dataset.mc.bridge);
    num(ds, "x0_max", c.dataset.x0_max);
    num(ds, "rho_min", c.dataset.rho_min);
    num(ds, "rho_max", c.dataset.rho_max);
    num(ds, "sigma_min", c.dataset.sigma.lo);
    num(ds, "sigma_max", c.dataset.sigma.hi);
    const auto& out = section("output");
    num(out, "prefix", c.output);
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open configuration file " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw UsageError("configuration file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(doc, path.parent_path());
}

// ---------------------------------------------------------------------------
// Quote files

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\"");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\"");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

inline double parse_number(const std::string& s, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) throw UsageError(where + ": '" + s + "' is not a number");
    return v;
}

/// Rows of a headed CSV, as maps from the required column names to values.
inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                                      const std::vector<std::string>& columns) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    std::vector<std::size_t> index;
    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto cells = split(line, ',');
        if (index.empty()) {
            for (const auto& col : columns) {
                const auto it = std::find(cells.begin(), cells.end(), col);
                if (it == cells.end()) throw UsageError(path.string() + ": missing column '" + col + "'");
                index.push_back(static_cast<std::size_t>(it - cells.begin()));
            }
            continue;
        }
        std::vector<std::string> row;
        for (std::size_t i : index) {
            if (i >= cells.size()) {
                throw UsageError(path.string() + ":" + std::to_string(line_no) + ": too few fields");
            }
            row.push_back(cells[i]);
        }
        rows.push_back(std::move(row));
    }
    if (index.empty()) throw UsageError(path.string() + ": empty file");
    return rows;
}

} // namespace detail

struct NamedQuote {
    std::string name;
    double spread_bps = 0.0;
};

inline std::vector<NamedQuote> read_cds_quotes(const std::filesystem::path& path) {
    std::vector<NamedQuote> out;
    std::size_t row = 0;
    for (const auto& r : detail::read_csv(path, {"name", "spread_bps"})) {
        ++row;
        out.push_back({r[0], detail::parse_number(r[1], path.string() + " row " + std::to_string(row))});
    }
    if (out.empty()) throw UsageError(path.string() + ": no CDS quotes");
    return out;
}

inline std::vector<TrancheQuote> read_tranche_quotes(const std::filesystem::path& path) {
    std::vector<TrancheQuote> out;
    std::size_t row = 0;
    for (const auto& r : detail::read_csv(path, {"attach", "detach", "spread_bps"})) {
        const std::string where = path.string() + " row " + std::to_string(++row);
        const double a = detail::parse_number(r[0], where);
        const double d = detail::parse_number(r[1], where);
        out.push_back({TrancheSpec(a, d), from_bps(detail::parse_number(r[2], where))});
    }
    return out;
}

inline std::vector<double> read_x0(const std::filesystem::path& path) {
    std::vector<double> out;
    std::size_t row = 0;
    for (const auto& r : detail::read_csv(path, {"x0"})) {
        out.push_back(detail::parse_number(r[0], path.string() + " row " + std::to_string(++row)));
    }
    if (out.empty()) throw UsageError(path.string() + ": no x0 values");
    return out;
}

/// Parses "a:d,a:d,...".
inline std::vector<TrancheSpec> parse_tranches(std::string_view list) {
    std::vector<TrancheSpec> out;
    for (const auto& item : detail::split(list, ',')) {
        if (item.empty()) continue;
        const auto parts = detail::split(item, ':');
        if (parts.size() != 2) throw UsageError("tranche '" + item + "' is not of the form attach:detach");
        out.emplace_back(detail::parse_number(parts[0], "tranche list"), detail::parse_number(parts[1], "tranche list"));
    }
    if (out.empty()) throw UsageError("empty tranche list");
    return out;
}

// ---------------------------------------------------------------------------
// Output helpers

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    os << content;
    if (!os) throw IoError("write failed for " + path.string());
}

/// Shortest round-trip representation.
inline std::string full(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

inline double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

} // namespace detail

inline std::string output_path(const RunConfig& c, std::string_view suffix) { return c.output + std::string(suffix); }

inline CalibrationConfig calibration_config(const RunConfig& c) {
    CalibrationConfig cal;
    cal.r = c.r;
    cal.lgd = c.lgd;
    cal.alpha = c.alpha;
    cal.maturity = c.maturity;
    cal.rho_min = c.rho_min;
    cal.rho_max = c.rho_max;
    cal.sigma_box = c.sigma_box;
    cal.sigma0 = c.sigma0;
    cal.rho0 = c.rho0;
    cal.scheme = c.scheme;
    cal.paths = c.paths;
    cal.seed = c.seed;
    cal.grid = c.grid;
    cal.settings = c.schemes;
    cal.convention = c.convention;
    cal.x0_mode = c.x0_mode;
    if (c.x0_mode == X0Mode::Network) {
        if (c.f_weights.empty()) throw UsageError("x0 mode 'nn' needs calibration.f_weights");
        cal.f_weights = std::make_shared<const NetworkWeights>(load_weights(c.f_weights));
    }
    cal.optimizer.method = c.optimizer;
    cal.optimizer.max_evaluations = c.max_evaluations;
    return cal;
}

inline int driver_substeps_for(const RunConfig& c) {
    return c.substeps > 0 ? c.substeps : driver_substeps(c.schemes);
}

/// Market quotes assembled from the configured files. Tranche and index
/// quotes are optional unless `need_tranches`.
inline MarketQuotes load_market(const RunConfig& c, bool need_tranches) {
    if (c.cds_file.empty()) throw UsageError("missing CDS quote file (--cds or inputs.cds)");
    std::vector<double> cds;
    for (const auto& q : read_cds_quotes(c.cds_file)) cds.push_back(from_bps(q.spread_bps));
    std::vector<TrancheQuote> tranches;
    if (!c.tranche_file.empty()) tranches = read_tranche_quotes(c.tranche_file);
    if (need_tranches && c.tranche_file.empty()) {
        throw UsageError("missing tranche quote file (--tranche-quotes or inputs.tranches)");
    }
    if (need_tranches && !c.index_bps) throw UsageError("missing index quote (--index-bps or inputs.index_bps)");
    return MarketQuotes(std::move(cds), std::move(tranches), from_bps(c.index_bps.value_or(0.0)));
}

// ---------------------------------------------------------------------------
// price

struct PriceColumn {
    std::string scheme;
    SpreadReport spreads;
    double seconds = 0.0;
};

struct PriceReport {
    std::vector<TrancheSpec> tranches;
    std::vector<PriceColumn> columns;
    double x0_seconds = 0.0;
    double driver_seconds = 0.0;
    std::size_t names = 0;
};

/// Parses "mc,em,theta,sm,dm".
inline std::vector<std::string> parse_scheme_list(std::string_view list) {
    std::vector<std::string> out;
    for (const auto& s : detail::split(list, ',')) {
        if (s.empty()) continue;
        if (s != "mc" && !parse_scheme(s)) throw UsageError("unknown scheme '" + s + "'");
        if (std::find(out.begin(), out.end(), s) != out.end()) throw UsageError("scheme '" + s + "' listed twice");
        out.push_back(s);
    }
    if (out.empty()) throw UsageError("empty scheme list");
    return out;
}

inline std::vector<double> x0_for_pricing(const RunConfig& c, double* seconds) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> x0;
    if (!c.x0_file.empty()) {
        x0 = read_x0(c.x0_file);
    } else if (!c.cds_file.empty()) {
        x0 = infer_x0(load_market(c, false), c.rho, c.sigma, calibration_config(c));
    } else {
        throw UsageError("price needs CDS quotes (--cds) or an explicit x0 file (--x0)");
    }
    *seconds = detail::seconds_since(t0);
    return x0;
}

inline PriceReport run_price(const RunConfig& c, const std::vector<std::string>& schemes) {
    PriceReport rep;
    rep.tranches = parse_tranches(c.tranche_set);
    const ModelParams params = c.params();
    const Schedule sched = build_schedule(params);
    const auto x0 = x0_for_pricing(c, &rep.x0_seconds);
    rep.names = x0.size();

    std::optional<CommonFactorDriver> driver;
    const LargeBasketEngine engine(c.grid, c.schemes);
    for (const auto& name : schemes) {
        PriceColumn col;
        col.scheme = name;
        if (name == "mc") {
            const auto t0 = std::chrono::steady_clock::now();
            const DefaultTimes defaults = simulate_basket(params, x0, c.paths, sched, c.seed);
            col.spreads = price_cdo_direct(defaults, params, rep.tranches, sched, c.convention);
            col.seconds = detail::seconds_since(t0);
        } else {
            if (!driver) {
                const auto t0 = std::chrono::steady_clock::now();
                driver.emplace(c.paths, params.periods(), params.alpha(), driver_substeps_for(c), c.seed);
                rep.driver_seconds = detail::seconds_since(t0);
            }
            const auto t0 = std::chrono::steady_clock::now();
            const LossSurface surface = engine.run(params, x0, *driver, *parse_scheme(name));
            col.spreads = price_surface(surface, rep.tranches, sched, c.convention);
            col.seconds = detail::seconds_since(t0);
        }
        rep.columns.push_back(std::move(col));
    }
    return rep;
}

inline std::string column_title(const std::string& scheme) {
    if (scheme == "mc") return "MC";
    if (scheme == "em") return "EM";
    if (scheme == "theta") return "Theta";
    if (scheme == "sm") return "SM";
    if (scheme == "dm") return "DM";
    return scheme;
}

/// Rows: tranches, index, time; one column per scheme.
inline std::string price_table_text(const PriceReport& rep) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "Tranche";
    for (const auto& col : rep.columns) os << std::right << std::setw(12) << column_title(col.scheme);
    os << '\n';
    for (std::size_t j = 0; j < rep.tranches.size(); ++j) {
        os << std::left << std::setw(14) << rep.tranches[j].label;
        for (const auto& col : rep.columns) os << std::right << std::setw(12) << detail::fixed(col.spreads.tranche_bps[j], 2);
        os << '\n';
    }
    os << std::left << std::setw(14) << "Index";
    for (const auto& col : rep.columns) os << std::right << std::setw(12) << detail::fixed(col.spreads.index_bps, 2);
    os << '\n' << std::left << std::setw(14) << "Time (s)";
    for (const auto& col : rep.columns) os << std::right << std::setw(12) << detail::fixed(col.seconds, 2);
    os << '\n';
    return os.str();
}

/// Spreads only, so that equal seeds give equal bytes.
inline std::string price_table_csv(const PriceReport& rep) {
    std::ostringstream os;
    os << "instrument";
    for (const auto& col : rep.columns) os << ',' << col.scheme;
    os << '\n';
    for (std::size_t j = 0; j < rep.tranches.size(); ++j) {
        os << '"' << rep.tranches[j].label << '"';
        for (const auto& col : rep.columns) os << ',' << detail::full(col.spreads.tranche_bps[j]);
        os << '\n';
    }
    os << "index";
    for (const auto& col : rep.columns) os << ',' << detail::full(col.spreads.index_bps);
    os << '\n';
    return os.str();
}

inline std::string price_timings_csv(const PriceReport& rep) {
    std::ostringstream os;
    os << "stage,seconds\nx0," << detail::full(rep.x0_seconds) << "\ndriver," << detail::full(rep.driver_seconds)
       << '\n';
    for (const auto& col : rep.columns) os << col.scheme << ',' << detail::full(col.seconds) << '\n';
    return os.str();
}

inline nlohmann::json price_json(const PriceReport& rep, const RunConfig& c) {
    nlohmann::json j;
    j["params"] = {{"r", c.r}, {"sigma", c.sigma}, {"rho", c.rho}, {"lgd", c.lgd}, {"alpha", c.alpha},
                   {"maturity", c.maturity}};
    j["paths"] = c.paths;
    j["seed"] = c.seed;
    j["names"] = rep.names;
    j["unit"] = "bps";
    j["tranches"] = nlohmann::json::array();
    for (const auto& t : rep.tranches) j["tranches"].push_back({{"attach", t.attach}, {"detach", t.detach}, {"label", t.label}});
    j["schemes"] = nlohmann::json::array();
    for (const auto& col : rep.columns) {
        j["schemes"].push_back({{"scheme", col.scheme},
                                {"tranche_bps", col.spreads.tranche_bps},
                                {"index_bps", col.spreads.index_bps},
                                {"seconds", col.seconds}});
    }
    j["timings"] = {{"x0_seconds", rep.x0_seconds}, {"driver_seconds", rep.driver_seconds}};
    return j;
}

/// Writes <prefix>.txt, <prefix>.csv, <prefix>_timings.csv and <prefix>.json.
inline void write_price_report(const PriceReport& rep, const RunConfig& c) {
    detail::write_file(output_path(c, ".txt"), price_table_text(rep));
    detail::write_file(output_path(c, ".csv"), price_table_csv(rep));
    detail::write_file(output_path(c, "_timings.csv"), price_timings_csv(rep));
    detail::write_file(output_path(c, ".json"), price_json(rep, c).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// calibrate

/// Market / Calibration / Error rows, one column per tranche plus the index.
inline std::string calibration_table_text(const CalibrationResult& res, const MarketQuotes& quotes) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "";
    for (const auto& t : quotes.tranche_quotes()) os << std::right << std::setw(12) << t.tranche.label;
    os << std::right << std::setw(12) << "Index" << '\n';
    auto row = [&](const char* title, const std::vector<double>& tr, double idx) {
        os << std::left << std::setw(16) << title;
        for (double v : tr) os << std::right << std::setw(12) << detail::fixed(v, 2);
        os << std::right << std::setw(12) << detail::fixed(idx, 2) << '\n';
    };
    row("Market", res.market_tranche_bps, res.market_index_bps);
    row("Calibration", res.tranche_bps, res.index_bps);
    std::vector<double> tr_err(res.errors_pct.begin(), res.errors_pct.end() - 1);
    row("Error (in %)", tr_err, res.errors_pct.back());
    os << "\nsigma = " << detail::fixed(res.sigma, 6) << ", rho = " << detail::fixed(res.rho, 6)
       << ", objective = " << detail::full(res.objective) << " bps^2\n";
    os << "optimizer: " << res.optimizer << ", " << res.evaluations << " evaluations, "
       << (res.converged ? "converged" : "NOT converged") << " (" << res.message << ")\n";
    os << "\nTimings (s)\n";
    os << "  driver paths      " << detail::fixed(res.driver_seconds, 3) << '\n';
    os << "  x0 inference      " << detail::fixed(res.x0_seconds, 3) << '\n';
    os << "  calibration       " << detail::fixed(res.calibration_seconds, 3) << '\n';
    os << "  total             " << detail::fixed(res.wall_seconds, 3) << '\n';
    return os.str();
}

inline nlohmann::json calibration_json(const CalibrationResult& res, const MarketQuotes& quotes, const RunConfig& c) {
    auto nan_safe = [](const std::vector<double>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (double x : v) a.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
        return a;
    };
    nlohmann::json j;
    j["sigma"] = res.sigma;
    j["rho"] = res.rho;
    j["tranches"] = nlohmann::json::array();
    for (const auto& t : quotes.tranche_quotes()) {
        j["tranches"].push_back({{"attach", t.tranche.attach}, {"detach", t.tranche.detach}, {"label", t.tranche.label}});
    }
    j["market_tranche_bps"] = res.market_tranche_bps;
    j["market_index_bps"] = res.market_index_bps;
    j["fitted_tranche_bps"] = res.tranche_bps;
    j["fitted_index_bps"] = res.index_bps;
    j["errors_pct"] = nan_safe(res.errors_pct);
    j["objective"] = res.objective;
    j["evaluations"] = res.evaluations;
    j["iterations"] = res.iterations;
    j["converged"] = res.converged;
    j["optimizer"] = res.optimizer;
    j["message"] = res.message;
    j["config"] = {{"scheme", std::string(scheme_name(c.scheme))}, {"paths", c.paths}, {"seed", c.seed},
                   {"r", c.r}, {"lgd", c.lgd}, {"sigma0", c.sigma0}, {"rho0", c.rho0},
                   {"x0_mode", c.x0_mode == X0Mode::Network ? "nn" : "analytic"}};
    j["timings"] = {{"driver_seconds", res.driver_seconds},
                    {"x0_seconds", res.x0_seconds},
                    {"calibration_seconds", res.calibration_seconds},
                    {"wall_seconds", res.wall_seconds}};
    return j;
}

/// Checks that every CDS quote is attainable at the start point and lists
/// the ones that are not.
inline void check_feasible(const MarketQuotes& quotes, const CalibrationConfig& cal) {
    if (cal.x0_mode != X0Mode::Analytic) return;
    const ModelParams p = cal.params(cal.rho0, cal.sigma0);
    const Schedule sched = build_schedule(p);
    const double hi = cds_quote_analytic({cal.bracket.lo, p.beta()}, sched, p.lgd());
    const double lo = cds_quote_analytic({cal.bracket.hi, p.beta()}, sched, p.lgd());
    std::vector<std::string> bad;
    const auto& cds = quotes.cds_quotes();
    for (std::size_t k = 0; k < cds.size(); ++k) {
        if (!(cds[k] > 0.0 && cds[k] >= lo && cds[k] <= hi)) {
            bad.push_back("#" + std::to_string(k) + " (" + detail::fixed(to_bps(cds[k]), 4) + " bps)");
        }
    }
    if (!bad.empty()) {
        std::string msg = "infeasible CDS quotes at the start point; attainable range [" + detail::fixed(to_bps(lo), 4) +
                          ", " + detail::fixed(to_bps(hi), 4) + "] bps:";
        for (const auto& b : bad) msg += " " + b;
        throw NoSolution(msg, lo, hi);
    }
}

struct CalibrationRun {
    MarketQuotes quotes;
    CalibrationResult result;
};

inline CalibrationRun run_calibrate(const RunConfig& c) {
    MarketQuotes quotes = load_market(c, true);
    const CalibrationConfig cal = calibration_config(c);
    check_feasible(quotes, cal);
    CalibrationResult res = calibrate(quotes, cal);
    return {std::move(quotes), std::move(res)};
}

/// Writes <prefix>.json and <prefix>.txt.
inline void write_calibration_report(const CalibrationRun& run, const RunConfig& c) {
    detail::write_file(output_path(c, ".json"), calibration_json(run.result, run.quotes, c).dump(2) + "\n");
    detail::write_file(output_path(c, ".txt"), calibration_table_text(run.result, run.quotes));
}

// ---------------------------------------------------------------------------
// gen-dataset

inline DatasetConfig dataset_config(const RunConfig& c) {
    DatasetConfig d = c.dataset;
    d.r = c.r;
    d.lgd = c.lgd;
    d.alpha = c.alpha;
    d.maturity = c.maturity;
    d.mc.seed = c.seed;
    return d;
}

/// Writes <prefix>.bin and its JSON sidecar.
inline Dataset run_gen_dataset(const RunConfig& c) {
    Dataset ds = generate_cds_dataset(dataset_config(c));
    write_dataset(ds, output_path(c, ".bin"));
    return ds;
}

// ---------------------------------------------------------------------------
// invert-x0

struct X0Report {
    std::vector<NamedQuote> quotes; // sorted descending by spread
    std::vector<double> x0;
    std::vector<std::array<double, 3>> histogram; // (lo, hi, count)
    std::vector<std::array<double, 2>> density;   // (x, v0)
    double density_mass = 0.0;
    double monotone_fraction = 1.0;
};

/// Equal-width bins over [min, max]; a single bin when all values coincide.
inline std::vector<std::array<double, 3>> histogram(std::span<const double> values, int bins) {
    if (values.empty()) return {};
    if (bins < 1) throw UsageError("histogram needs at least one bin");
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn;
    const double hi = *mx;
    if (!(hi > lo)) return {{lo, hi, static_cast<double>(values.size())}};
    const double w = (hi - lo) / bins;
    std::vector<std::array<double, 3>> out(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) out[static_cast<std::size_t>(b)] = {lo + b * w, b + 1 == bins ? hi : lo + (b + 1) * w, 0.0};
    for (double v : values) {
        const int b = std::min(bins - 1, static_cast<int>((v - lo) / w));
        out[static_cast<std::size_t>(b)][2] += 1.0;
    }
    return out;
}

inline X0Report run_invert_x0(const RunConfig& c, int bins) {
    X0Report rep;
    if (c.cds_file.empty()) throw UsageError("invert-x0 needs a CDS quote file (--cds)");
    rep.quotes = read_cds_quotes(c.cds_file);
    std::stable_sort(rep.quotes.begin(), rep.quotes.end(),
                     [](const NamedQuote& a, const NamedQuote& b) { return a.spread_bps > b.spread_bps; });
    rep.x0 = infer_x0(load_market(c, false), c.rho, c.sigma, calibration_config(c));
    for (std::size_t k = 1; k < rep.x0.size(); ++k) {
        if (rep.x0[k] < rep.x0[k - 1]) rep.monotone_fraction -= 1.0 / static_cast<double>(rep.x0.size() - 1);
    }
    rep.histogram = histogram(rep.x0, bins);
    const SpaceGrid grid = c.grid.grid();
    const DensityVector v0 = smooth_initial_datum(rep.x0, grid);
    rep.density.reserve(static_cast<std::size_t>(grid.d()) + 2);
    rep.density.push_back({grid.node(0), 0.0});
    for (int k = 0; k < grid.d(); ++k) rep.density.push_back({grid.interior(k), v0(k)});
    rep.density.push_back({grid.node(grid.d() + 1), 0.0});
    rep.density_mass = mass(v0, grid);
    return rep;
}

/// Writes <prefix>_x0.csv, <prefix>_hist.csv and <prefix>_density.csv.
inline void write_x0_report(const X0Report& rep, const RunConfig& c) {
    std::ostringstream x0;
    x0 << "name,spread_bps,x0\n";
    for (std::size_t k = 0; k < rep.x0.size(); ++k) {
        x0 << rep.quotes[k].name << ',' << detail::full(rep.quotes[k].spread_bps) << ',' << detail::full(rep.x0[k]) << '\n';
    }
    std::ostringstream hist;
    hist << "bin_lo,bin_hi,count\n";
    for (const auto& b : rep.histogram) hist << detail::full(b[0]) << ',' << detail::full(b[1]) << ',' << b[2] << '\n';
    std::ostringstream dens;
    dens << "x,v0\n";
    for (const auto& p : rep.density) dens << detail::full(p[0]) << ',' << detail::full(p[1]) << '\n';
    detail::write_file(output_path(c, "_x0.csv"), x0.str());
    detail::write_file(output_path(c, "_hist.csv"), hist.str());
    detail::write_file(output_path(c, "_density.csv"), dens.str());
}

} // namespace lbcdo::cli
