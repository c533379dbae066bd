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


// lbcdo: pricing, calibration, dataset generation and x0 inversion for
// large-basket CDOs.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lbcdo/cli.hpp"
#include "lbcdo/parallel.hpp"

namespace {

using namespace lbcdo;
using namespace lbcdo::cli;

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::optional<std::string> out;
    std::optional<std::size_t> paths;
    std::optional<double> r, sigma, rho;
    std::optional<std::string> cds, x0, tranche_quotes, tranches, scheme, x0_mode, f_weights, optimizer;
    std::optional<double> index_bps, sigma0, rho0;
    std::optional<int> max_evals, substeps;
    std::optional<std::size_t> n;
    std::optional<int> steps;
    bool no_bridge = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--threads", o.threads, "worker threads, 0 = all cores")->default_val(0);
    cmd->add_option("-o,--out", o.out, "output prefix");
    cmd->add_option("--r", o.r, "risk-free rate");
    cmd->add_option("--sigma", o.sigma, "asset volatility");
    cmd->add_option("--rho", o.rho, "correlation");
    cmd->add_option("--cds", o.cds, "CDS quote CSV (name, spread_bps)");
    cmd->add_option("--x0-mode", o.x0_mode, "analytic or nn")->check(CLI::IsMember({"analytic", "nn"}));
    cmd->add_option("--f-weights", o.f_weights, "weight file of f for nn mode");
}

RunConfig resolve(const Overrides& o) {
    RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.output = *o.out;
    if (o.paths) c.paths = *o.paths;
    if (o.r) c.r = *o.r;
    if (o.sigma) c.sigma = *o.sigma;
    if (o.rho) c.rho = *o.rho;
    if (o.cds) c.cds_file = *o.cds;
    if (o.x0) c.x0_file = *o.x0;
    if (o.tranche_quotes) c.tranche_file = *o.tranche_quotes;
    if (o.tranches) c.tranche_set = *o.tranches;
    if (o.index_bps) c.index_bps = *o.index_bps;
    if (o.sigma0) c.sigma0 = *o.sigma0;
    if (o.rho0) c.rho0 = *o.rho0;
    if (o.max_evals) c.max_evaluations = *o.max_evals;
    if (o.substeps) c.substeps = *o.substeps;
    if (o.scheme) {
        const auto s = parse_scheme(*o.scheme);
        if (!s) throw UsageError("unknown scheme '" + *o.scheme + "'");
        c.scheme = *s;
    }
    if (o.x0_mode) c.x0_mode = *o.x0_mode == "nn" ? X0Mode::Network : X0Mode::Analytic;
    if (o.f_weights) c.f_weights = *o.f_weights;
    if (o.optimizer) c.optimizer = lbcdo::cli::detail::parse_optimizer(*o.optimizer);
    if (o.n) c.dataset.samples = *o.n;
    if (o.steps) c.dataset.mc.steps_per_quarter = *o.steps;
    if (o.no_bridge) c.dataset.mc.bridge = false;
    set_threads(o.threads);
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Large-basket CDO pricing and calibration"};
    app.require_subcommand(1);
    Overrides o;

    auto* price = app.add_subcommand("price", "tranche and index spreads per scheme");
    add_common(price, o);
    std::string schemes = "dm";
    price->add_option("--schemes", schemes, "comma-separated subset of mc,em,theta,sm,dm")->default_val("dm");
    price->add_option("--tranches", o.tranches, "attach:detach list");
    price->add_option("--x0", o.x0, "explicit x0 CSV (column x0)");
    price->add_option("--paths", o.paths, "common-factor paths M");
    price->add_option("--substeps", o.substeps, "driver sub-steps per quarter");

    auto* calib = app.add_subcommand("calibrate", "fit (sigma, rho) to tranche and index quotes");
    add_common(calib, o);
    calib->add_option("--tranche-quotes", o.tranche_quotes, "tranche quote CSV (attach, detach, spread_bps)");
    calib->add_option("--index-bps", o.index_bps, "index quote in bps");
    calib->add_option("--sigma0", o.sigma0, "start value of sigma");
    calib->add_option("--rho0", o.rho0, "start value of rho");
    calib->add_option("--max-evals", o.max_evals, "objective evaluation budget");
    calib->add_option("--optimizer", o.optimizer, "auto, lm or nelder-mead")
        ->check(CLI::IsMember({"auto", "lm", "nelder-mead"}));
    calib->add_option("--scheme", o.scheme, "em, theta, sm or dm");
    calib->add_option("--paths", o.paths, "common-factor paths M");

    auto* gen = app.add_subcommand("gen-dataset", "Monte Carlo CDS quote dataset");
    add_common(gen, o);
    std::optional<std::size_t> mc_paths;
    gen->add_option("--n", o.n, "number of tuples");
    gen->add_option("--paths", mc_paths, "Monte Carlo paths per tuple");
    gen->add_option("--steps", o.steps, "time steps per quarter");
    gen->add_flag("--no-bridge", o.no_bridge, "disable the Brownian-bridge correction");

    auto* inv = app.add_subcommand("invert-x0", "initial distances to default from CDS quotes");
    add_common(inv, o);
    int bins = 30;
    inv->add_option("--bins", bins, "histogram bins")->default_val(30)->check(CLI::PositiveNumber);

    app.add_subcommand("schema", "print the JSON Schema of the configuration file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (app.got_subcommand("schema")) {
            std::cout << config_schema().dump(2) << '\n';
            return kExitOk;
        }
        if (app.got_subcommand(price)) {
            const RunConfig c = resolve(o);
            const PriceReport rep = run_price(c, parse_scheme_list(schemes));
            write_price_report(rep, c);
            std::cout << price_table_text(rep);
        } else if (app.got_subcommand(calib)) {
            const RunConfig c = resolve(o);
            const CalibrationRun run = run_calibrate(c);
            write_calibration_report(run, c);
            std::cout << calibration_table_text(run.result, run.quotes);
            if (!run.result.converged) std::cerr << "lbcdo: warning: optimizer did not converge\n";
        } else if (app.got_subcommand(gen)) {
            RunConfig c = resolve(o);
            if (mc_paths) c.dataset.mc.paths = *mc_paths;
            const Dataset ds = run_gen_dataset(c);
            std::cout << "wrote " << ds.rows.size() << " rows to " << output_path(c, ".bin") << " and "
                      << lbcdo::detail::sidecar_path(output_path(c, ".bin")).string() << '\n';
        } else if (app.got_subcommand(inv)) {
            const RunConfig c = resolve(o);
            const X0Report rep = run_invert_x0(c, bins);
            write_x0_report(rep, c);
            std::cout << rep.x0.size() << " names, x0 in [" << rep.x0.front() << ", " << rep.x0.back()
                      << "], smoothed mass " << rep.density_mass << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "lbcdo: error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kExitOk;
}
