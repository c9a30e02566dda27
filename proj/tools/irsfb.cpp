// Command-line front end: train, eval, sweep-m and gamma-map.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "irsfb/harness.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

irsfb::ExperimentConfig load(const std::string& path, std::optional<std::uint64_t> seed) {
    irsfb::ExperimentConfig cfg = path.empty() ? irsfb::ExperimentConfig{} : irsfb::load_config(path);
    if (seed)
        cfg.seed = *seed;
    cfg.validate();
    return cfg;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size())
                throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw irsfb::ConfigError("bad integer '" + item + "' in list '" + text + "'");
        }
    }
    if (out.empty())
        throw irsfb::ConfigError("empty list");
    return out;
}

std::vector<irsfb::EvalScheme> parse_schemes(const std::string& text) {
    std::vector<irsfb::EvalScheme> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(irsfb::eval_scheme_from_string(item));
    if (out.empty())
        throw irsfb::ConfigError("empty scheme list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IRS limited-feedback codebook simulator"};
    app.require_subcommand(1);

    std::string config_path, out_path, checkpoint_dir, scheme_text = "rvq", m_text, profile_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> m_value;
    int c_steps = 231, theta_steps = 91;

    auto* train = app.add_subcommand("train", "train DPIC agents and write checkpoints");
    train->add_option("--config", config_path, "experiment config (JSON)");
    train->add_option("--seed", seed, "master seed, overrides the config");
    train->add_option("--out", out_path, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "run a utilization campaign for one scheme");
    eval->add_option("--config", config_path, "experiment config (JSON)");
    eval->add_option("--checkpoints", checkpoint_dir, "checkpoint directory (sdpic, mdpic)");
    eval->add_option("--scheme", scheme_text, "rvq, ra, sdpic or mdpic");
    eval->add_option("--M", m_value, "codebook size, defaults to codebook_size");
    eval->add_option("--seed", seed, "master seed, overrides the config");
    eval->add_option("--out", out_path, "metrics CSV")->required();

    auto* sweep = app.add_subcommand("sweep-m", "mean rates over codebook sizes");
    sweep->add_option("--config", config_path, "experiment config (JSON)");
    sweep->add_option("--checkpoints", checkpoint_dir, "checkpoint directory (sdpic, mdpic)");
    sweep->add_option("--scheme", scheme_text, "comma-separated schemes");
    sweep->add_option("--M", m_text, "comma-separated sizes, defaults to sweep_m");
    sweep->add_option("--seed", seed, "master seed, overrides the config");
    sweep->add_option("--out", out_path, "sweep CSV")->required();

    auto* gmap = app.add_subcommand("gamma-map", "reflection coefficient over capacitance and angle");
    gmap->add_option("--config", config_path, "experiment config (JSON)");
    gmap->add_option("--profile", profile_path, "circuit profile CSV, overrides the config");
    gmap->add_option("--c-steps", c_steps, "capacitance grid points");
    gmap->add_option("--theta-steps", theta_steps, "angle grid points");
    gmap->add_option("--out", out_path, "map CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        irsfb::ExperimentConfig cfg = load(config_path, seed);
        if (*train) {
            const auto run = irsfb::run_training(cfg, out_path);
            std::cout << "trained " << cfg.n_agents << " agents for " << run.rows.size() << " episodes -> "
                      << out_path << '\n';
        } else if (*eval) {
            const auto scheme = irsfb::eval_scheme_from_string(scheme_text);
            std::optional<irsfb::Checkpoint> ck;
            if (!checkpoint_dir.empty())
                ck = irsfb::load_checkpoint(checkpoint_dir);
            const auto res = irsfb::run_utilization(cfg, ck ? &*ck : nullptr, scheme, m_value.value_or(cfg.codebook_size));
            irsfb::write_rows(out_path, irsfb::utilization_rows(cfg, res));
            std::cout << irsfb::to_string(scheme) << " M=" << res.m << " mean effective rate "
                      << irsfb::fmt_num(res.mean_effective_rate) << " bit/s\n";
        } else if (*sweep) {
            const auto schemes = parse_schemes(scheme_text);
            const auto ms = m_text.empty() ? cfg.sweep_m : parse_int_list(m_text);
            std::optional<irsfb::Checkpoint> ck;
            if (!checkpoint_dir.empty())
                ck = irsfb::load_checkpoint(checkpoint_dir);
            irsfb::ExperimentConfig check = cfg;
            check.sweep_m = ms;
            check.validate();
            irsfb::write_sweep(out_path, irsfb::sweep_m(cfg, ck ? &*ck : nullptr, schemes, ms));
        } else if (*gmap) {
            if (!profile_path.empty())
                cfg.profile_csv = profile_path;
            const auto sc = cfg.scenario();
            std::ofstream out(out_path);
            if (!out)
                throw irsfb::Error("cannot write '" + out_path + "'");
            irsfb::write_gamma_map(out, sc.profile, sc.bounds, c_steps, theta_steps);
        }
    } catch (const irsfb::ConfigError& e) {
        std::cerr << "irsfb: config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "irsfb: error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
