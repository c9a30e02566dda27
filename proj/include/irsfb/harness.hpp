#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "agent.hpp"
#include "channel.hpp"
#include "codebook.hpp"
#include "core.hpp"
#include "metaatom.hpp"
#include "protocol.hpp"
#include "scenario.hpp"

namespace irsfb {

// Experiment configuration, campaign runners and CSV output.

inline double dbm_to_watts(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }

/// All knobs of an experiment, in file units (dBm, pF, km/h). SI values are
/// derived once in finalize().
struct ExperimentConfig {
    // radio and surface
    double carrier_hz = 5.195e9;
    double coherence_time_s = 5e-3;
    int n_bs = 5;
    int n_irs = 200;
    int n_groups = 10;
    double c_min_pf = 0.4;
    double c_max_pf = 2.7;
    double tx_power_dbm = 20.0;
    double noise_power_dbm = -80.0;
    double bandwidth_hz = 10e6;
    double feedback_rate = 0.1;
    double reconfig_time_s = 100e-6;
    std::string profile_csv;  // empty: built-in placeholder profile

    // channel
    double rician_k = 5.0;
    double ple_ib = 2.0;
    double ple_ub = 3.75;
    double ple_ui = 2.2;
    std::optional<double> path_loss_ref_db = -30.0;  // nullopt: free-space (lambda / 4 pi)^2
    int n_paths = 10;
    double correlation = 0.95;
    double angle_drift_deg = 0.1;
    double ue_speed_kmh = 3.0;
    std::vector<double> bs_pos{0.0, 0.0};
    std::vector<double> irs_pos{90.0, 30.0};
    std::vector<double> ue_center{100.0, 0.0};
    double ue_radius_m = 5.0;
    double bs_normal_deg = 0.0;
    double irs_normal_deg = -90.0;

    // codebooks
    int codebook_size = 8;
    std::vector<int> sweep_m{1, 2, 4, 8};
    double ra_step_fraction = 0.2;
    double dpic_step_fraction = 0.25;
    int direction_size = 2048;
    std::uint64_t direction_seed = 2048;

    // learning
    int n_agents = 8;
    std::vector<int> hidden{400, 300};
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double gamma = 0.99;
    double tau = 0.001;
    int batch_size = 32;
    int replay_capacity = 500000;
    bool noise_is_std = false;
    double noise_decay = 0.99;
    double noise_floor_divisor = 300.0;
    double reward_weight = 0.0;  // 0: nu = W

    // campaigns
    int train_episodes = 1000;
    int train_timesteps = 500;
    int eval_episodes = 2000;
    int eval_timesteps = 30;
    std::uint64_t seed = 0;
    int workers = 1;
    bool record_wall_clock = false;

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

    void validate() const {
        require(carrier_hz > 0.0, "carrier_hz must be positive");
        require(coherence_time_s > 0.0, "coherence_time_s must be positive");
        require(n_bs >= 1 && n_irs >= 1 && n_groups >= 1, "n_bs, n_irs and n_groups must be >= 1");
        require(n_irs % n_groups == 0, "n_groups must divide n_irs");
        require(c_min_pf > 0.0, "c_min_pf must be positive");
        require(c_min_pf < c_max_pf, "c_min_pf (" + std::to_string(c_min_pf) + ") must be smaller than c_max_pf (" +
                                         std::to_string(c_max_pf) + ")");
        require(bandwidth_hz > 0.0 && feedback_rate > 0.0 && reconfig_time_s > 0.0,
                "bandwidth_hz, feedback_rate and reconfig_time_s must be positive");
        require(coherence_time_s > reconfig_time_s, "coherence_time_s must exceed reconfig_time_s");
        require(rician_k >= 0.0, "rician_k must be >= 0");
        require(n_paths >= 1, "n_paths must be >= 1");
        require(correlation >= 0.0 && correlation <= 1.0, "correlation must be in [0, 1]");
        require(angle_drift_deg >= 0.0 && ue_speed_kmh >= 0.0 && ue_radius_m >= 0.0,
                "angle_drift_deg, ue_speed_kmh and ue_radius_m must be >= 0");
        require(bs_pos.size() == 2 && irs_pos.size() == 2 && ue_center.size() == 2, "positions must be [x, y] pairs");
        require(codebook_size >= 1, "codebook_size must be >= 1");
        require(ra_step_fraction > 0.0 && dpic_step_fraction > 0.0, "step fractions must be positive");
        require(direction_size >= 1, "direction_size must be >= 1");
        require(n_agents >= 1, "n_agents must be >= 1");
        require(!hidden.empty() && std::all_of(hidden.begin(), hidden.end(), [](int h) { return h > 0; }),
                "hidden layer sizes must be positive");
        require(actor_lr > 0.0 && critic_lr > 0.0, "learning rates must be positive");
        require(gamma >= 0.0 && gamma <= 1.0 && tau >= 0.0 && tau <= 1.0, "gamma and tau must be in [0, 1]");
        require(batch_size >= 1 && replay_capacity >= 1, "batch_size and replay_capacity must be >= 1");
        require(noise_decay > 0.0 && noise_decay <= 1.0 && noise_floor_divisor >= 1.0, "invalid noise schedule");
        require(reward_weight >= 0.0, "reward_weight must be >= 0");
        require(train_episodes >= 1 && train_timesteps >= 1 && eval_episodes >= 1 && eval_timesteps >= 1,
                "episode and timestep counts must be >= 1");
        require(workers >= 1, "workers must be >= 1");
        std::vector<int> ms = sweep_m;
        ms.push_back(codebook_size);
        ms.push_back(n_agents);
        for (int m : ms) {
            require(m >= 1, "codebook sizes must be >= 1");
            require(static_cast<double>(m) * reconfig_time_s < coherence_time_s,
                    "M = " + std::to_string(m) + " reconfigurations do not fit in the coherence time");
        }
    }

    Scenario scenario() const {
        Scenario sc;
        sc.channel.n_bs = n_bs;
        sc.channel.n_irs = n_irs;
        sc.channel.n_paths = n_paths;
        sc.channel.rician_k = rician_k;
        sc.channel.ple_ib = ple_ib;
        sc.channel.ple_ub = ple_ub;
        sc.channel.ple_ui = ple_ui;
        const double wavelength = kSpeedOfLight / carrier_hz;
        sc.channel.path_loss_reference =
            path_loss_ref_db ? std::pow(10.0, *path_loss_ref_db / 10.0) : free_space_reference_gain(wavelength);
        sc.channel.correlation = correlation;
        sc.channel.angle_drift_deg = angle_drift_deg;

        sc.geometry = Geometry::for_frequency(carrier_hz);
        sc.geometry.bs_pos = {bs_pos[0], bs_pos[1]};
        sc.geometry.irs_pos = {irs_pos[0], irs_pos[1]};
        sc.geometry.ue_pos = {ue_center[0], ue_center[1]};
        sc.geometry.ue_speed = ue_speed_kmh / 3.6;
        sc.geometry.bs_normal_deg = bs_normal_deg;
        sc.geometry.irs_normal_deg = irs_normal_deg;
        sc.ue_radius = ue_radius_m;

        sc.profile = profile_csv.empty() ? default_profile(carrier_hz) : load_profile_csv(profile_csv, carrier_hz);
        sc.budget = {dbm_to_watts(tx_power_dbm), dbm_to_watts(noise_power_dbm), bandwidth_hz};
        sc.timings = {coherence_time_s, reconfig_time_s, feedback_rate};
        sc.bounds = {c_min_pf * kPico, c_max_pf * kPico};
        sc.steps = StepSizes::from_bounds(sc.bounds, ra_step_fraction, dpic_step_fraction);
        sc.n_groups = n_groups;
        return sc;
    }

    TrainingSetup training_setup() const {
        TrainingSetup t;
        t.scenario = scenario();
        t.ddpg.hidden = hidden;
        t.ddpg.actor_lr = actor_lr;
        t.ddpg.critic_lr = critic_lr;
        t.ddpg.gamma = gamma;
        t.ddpg.tau = tau;
        t.ddpg.batch_size = batch_size;
        t.ddpg.replay_capacity = static_cast<std::size_t>(replay_capacity);
        t.ddpg.noise_is_std = noise_is_std;
        t.n_agents = n_agents;
        t.episodes = train_episodes;
        t.timesteps = train_timesteps;
        t.direction_size = direction_size;
        t.direction_seed = direction_seed;
        t.noise_decay = noise_decay;
        t.noise_floor_divisor = noise_floor_divisor;
        t.reward_weight = reward_weight;
        t.seed = seed;
        return t;
    }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["carrier_hz"] = c.carrier_hz;
    j["coherence_time_s"] = c.coherence_time_s;
    j["n_bs"] = c.n_bs;
    j["n_irs"] = c.n_irs;
    j["n_groups"] = c.n_groups;
    j["c_min_pf"] = c.c_min_pf;
    j["c_max_pf"] = c.c_max_pf;
    j["tx_power_dbm"] = c.tx_power_dbm;
    j["noise_power_dbm"] = c.noise_power_dbm;
    j["bandwidth_hz"] = c.bandwidth_hz;
    j["feedback_rate"] = c.feedback_rate;
    j["reconfig_time_s"] = c.reconfig_time_s;
    j["profile_csv"] = c.profile_csv;
    j["rician_k"] = c.rician_k;
    j["ple_ib"] = c.ple_ib;
    j["ple_ub"] = c.ple_ub;
    j["ple_ui"] = c.ple_ui;
    j["path_loss_ref_db"] = c.path_loss_ref_db ? nlohmann::json(*c.path_loss_ref_db) : nlohmann::json(nullptr);
    j["n_paths"] = c.n_paths;
    j["correlation"] = c.correlation;
    j["angle_drift_deg"] = c.angle_drift_deg;
    j["ue_speed_kmh"] = c.ue_speed_kmh;
    j["bs_pos"] = c.bs_pos;
    j["irs_pos"] = c.irs_pos;
    j["ue_center"] = c.ue_center;
    j["ue_radius_m"] = c.ue_radius_m;
    j["bs_normal_deg"] = c.bs_normal_deg;
    j["irs_normal_deg"] = c.irs_normal_deg;
    j["codebook_size"] = c.codebook_size;
    j["sweep_m"] = c.sweep_m;
    j["ra_step_fraction"] = c.ra_step_fraction;
    j["dpic_step_fraction"] = c.dpic_step_fraction;
    j["direction_codebook"] = {{"size", c.direction_size}, {"seed", c.direction_seed}};
    j["n_agents"] = c.n_agents;
    j["hidden"] = c.hidden;
    j["actor_lr"] = c.actor_lr;
    j["critic_lr"] = c.critic_lr;
    j["gamma"] = c.gamma;
    j["tau"] = c.tau;
    j["batch_size"] = c.batch_size;
    j["replay_capacity"] = c.replay_capacity;
    j["noise_is_std"] = c.noise_is_std;
    j["noise_decay"] = c.noise_decay;
    j["noise_floor_divisor"] = c.noise_floor_divisor;
    j["reward_weight"] = c.reward_weight;
    j["train_episodes"] = c.train_episodes;
    j["train_timesteps"] = c.train_timesteps;
    j["eval_episodes"] = c.eval_episodes;
    j["eval_timesteps"] = c.eval_timesteps;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["record_wall_clock"] = c.record_wall_clock;
    return j;
}

/// Parses a config object. Missing keys keep their defaults; unknown keys
/// are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& in) {
    if (!in.is_object())
        throw ConfigError("config must be a JSON object");
    nlohmann::json merged = to_json(ExperimentConfig{});
    for (const auto& [key, value] : in.items()) {
        if (!merged.contains(key))
            throw ConfigError("unknown config key '" + key + "'");
        if (merged[key].is_object()) {
            if (!value.is_object())
                throw ConfigError("config key '" + key + "' must be an object");
            for (const auto& [sub, v] : value.items()) {
                if (!merged[key].contains(sub))
                    throw ConfigError("unknown config key '" + key + "." + sub + "'");
                merged[key][sub] = v;
            }
        } else {
            merged[key] = value;
        }
    }

    ExperimentConfig c;
    try {
        c.carrier_hz = merged.at("carrier_hz").get<double>();
        c.coherence_time_s = merged.at("coherence_time_s").get<double>();
        c.n_bs = merged.at("n_bs").get<int>();
        c.n_irs = merged.at("n_irs").get<int>();
        c.n_groups = merged.at("n_groups").get<int>();
        c.c_min_pf = merged.at("c_min_pf").get<double>();
        c.c_max_pf = merged.at("c_max_pf").get<double>();
        c.tx_power_dbm = merged.at("tx_power_dbm").get<double>();
        c.noise_power_dbm = merged.at("noise_power_dbm").get<double>();
        c.bandwidth_hz = merged.at("bandwidth_hz").get<double>();
        c.feedback_rate = merged.at("feedback_rate").get<double>();
        c.reconfig_time_s = merged.at("reconfig_time_s").get<double>();
        c.profile_csv = merged.at("profile_csv").get<std::string>();
        c.rician_k = merged.at("rician_k").get<double>();
        c.ple_ib = merged.at("ple_ib").get<double>();
        c.ple_ub = merged.at("ple_ub").get<double>();
        c.ple_ui = merged.at("ple_ui").get<double>();
        const auto& ref = merged.at("path_loss_ref_db");
        c.path_loss_ref_db = ref.is_null() ? std::nullopt : std::optional<double>(ref.get<double>());
        c.n_paths = merged.at("n_paths").get<int>();
        c.correlation = merged.at("correlation").get<double>();
        c.angle_drift_deg = merged.at("angle_drift_deg").get<double>();
        c.ue_speed_kmh = merged.at("ue_speed_kmh").get<double>();
        c.bs_pos = merged.at("bs_pos").get<std::vector<double>>();
        c.irs_pos = merged.at("irs_pos").get<std::vector<double>>();
        c.ue_center = merged.at("ue_center").get<std::vector<double>>();
        c.ue_radius_m = merged.at("ue_radius_m").get<double>();
        c.bs_normal_deg = merged.at("bs_normal_deg").get<double>();
        c.irs_normal_deg = merged.at("irs_normal_deg").get<double>();
        c.codebook_size = merged.at("codebook_size").get<int>();
        c.sweep_m = merged.at("sweep_m").get<std::vector<int>>();
        c.ra_step_fraction = merged.at("ra_step_fraction").get<double>();
        c.dpic_step_fraction = merged.at("dpic_step_fraction").get<double>();
        c.direction_size = merged.at("direction_codebook").at("size").get<int>();
        c.direction_seed = merged.at("direction_codebook").at("seed").get<std::uint64_t>();
        c.n_agents = merged.at("n_agents").get<int>();
        c.hidden = merged.at("hidden").get<std::vector<int>>();
        c.actor_lr = merged.at("actor_lr").get<double>();
        c.critic_lr = merged.at("critic_lr").get<double>();
        c.gamma = merged.at("gamma").get<double>();
        c.tau = merged.at("tau").get<double>();
        c.batch_size = merged.at("batch_size").get<int>();
        c.replay_capacity = merged.at("replay_capacity").get<int>();
        c.noise_is_std = merged.at("noise_is_std").get<bool>();
        c.noise_decay = merged.at("noise_decay").get<double>();
        c.noise_floor_divisor = merged.at("noise_floor_divisor").get<double>();
        c.reward_weight = merged.at("reward_weight").get<double>();
        c.train_episodes = merged.at("train_episodes").get<int>();
        c.train_timesteps = merged.at("train_timesteps").get<int>();
        c.eval_episodes = merged.at("eval_episodes").get<int>();
        c.eval_timesteps = merged.at("eval_timesteps").get<int>();
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.workers = merged.at("workers").get<int>();
        c.record_wall_clock = merged.at("record_wall_clock").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed JSON in '" + path.string() + "': " + e.what());
    }
    ExperimentConfig c = config_from_json(j);
    if (!c.profile_csv.empty() && std::filesystem::path(c.profile_csv).is_relative())
        c.profile_csv = (path.parent_path() / c.profile_csv).lexically_normal().string();
    return c;
}

// ---------------------------------------------------------------- CSV

/// Shortest round-trip decimal form.
inline std::string fmt_num(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline constexpr const char* kMetricsHeader =
    "run_id,phase,scheme,episode,timestep,M,selected_index,rate_bps,effective_rate_bps,"
    "moving_avg_effective_rate_bps,reward_mean,epsilon,wall_clock_s";

/// One metrics line. Aggregate rows use -1 for episode, timestep or
/// selected_index.
struct MetricsRow {
    std::string run_id;
    std::string phase;
    std::string scheme;
    long episode = -1;
    long timestep = -1;
    long m = 0;
    long selected_index = -1;
    double rate = 0.0;
    double effective_rate = 0.0;
    double moving_avg = 0.0;
    double reward_mean = 0.0;
    double epsilon = 0.0;
    double wall_clock = 0.0;

    std::string csv() const {
        std::ostringstream os;
        os << run_id << ',' << phase << ',' << scheme << ',' << episode << ',' << timestep << ',' << m << ','
           << selected_index << ',' << fmt_num(rate) << ',' << fmt_num(effective_rate) << ',' << fmt_num(moving_avg)
           << ',' << fmt_num(reward_mean) << ',' << fmt_num(epsilon) << ',' << fmt_num(wall_clock);
        return os.str();
    }
};

/// Mean of values[max(0, i - window + 1) .. i].
inline std::vector<double> trailing_mean(const std::vector<double>& values, std::size_t window) {
    std::vector<double> out(values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        sum += values[i];
        if (i >= window)
            sum -= values[i - window];
        out[i] = sum / static_cast<double>(std::min(i + 1, window));
    }
    return out;
}

// ---------------------------------------------------------------- training

struct TrainingRun {
    TrainingResult result;
    std::vector<MetricsRow> rows;
};

inline CheckpointManifest manifest_for(const TrainingSetup& setup) {
    CheckpointManifest m;
    m.n_agents = setup.n_agents;
    m.dpic_step = setup.scenario.steps.dpic;
    m.direction_size = setup.direction_size;
    m.direction_dims = setup.scenario.n_groups;
    m.direction_seed = setup.direction_seed;
    m.normalization = setup.normalization();
    return m;
}

/// Trains the agents and, when out_dir is non-empty, writes training.csv
/// (one row per episode, flushed as it goes), the effective config and the
/// checkpoints under out_dir/checkpoints.
inline TrainingRun run_training(const ExperimentConfig& cfg, const std::filesystem::path& out_dir = {}) {
    cfg.validate();
    const TrainingSetup setup = cfg.training_setup();
    std::ofstream csv;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream(out_dir / "config.json") << to_json(cfg).dump(2) << '\n';
        csv.open(out_dir / "training.csv");
        if (!csv)
            throw Error("cannot write training.csv in '" + out_dir.string() + "'");
        csv << kMetricsHeader << '\n';
    }

    TrainingRun run;
    std::vector<double> eff;
    const auto start = std::chrono::steady_clock::now();
    const std::string run_id = "train-" + std::to_string(cfg.seed);
    auto on_episode = [&](const EpisodeMetrics& em) {
        eff.push_back(em.mean_effective_rate);
        const std::size_t n = eff.size();
        const std::size_t w = std::min<std::size_t>(n, 100);
        double ma = 0.0;
        for (std::size_t i = n - w; i < n; ++i)
            ma += eff[i];
        ma /= static_cast<double>(w);
        MetricsRow row{run_id, "train", cfg.n_agents > 1 ? "mdpic" : "sdpic", em.episode, -1, cfg.n_agents, -1,
                       em.mean_rate, em.mean_effective_rate, ma, em.mean_reward, em.epsilon, 0.0};
        if (cfg.record_wall_clock)
            row.wall_clock = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (csv.is_open())
            csv << row.csv() << '\n' << std::flush;
        run.rows.push_back(std::move(row));
    };
    run.result = train(setup, on_episode);
    if (!out_dir.empty())
        save_checkpoint(out_dir / "checkpoints", run.result.agents, manifest_for(setup));
    return run;
}

// ---------------------------------------------------------------- utilization

enum class EvalScheme { rvq, ra, sdpic, mdpic };

inline std::string to_string(EvalScheme s) {
    switch (s) {
    case EvalScheme::rvq: return "rvq";
    case EvalScheme::ra: return "ra";
    case EvalScheme::sdpic: return "sdpic";
    case EvalScheme::mdpic: return "mdpic";
    }
    return "?";
}

inline EvalScheme eval_scheme_from_string(const std::string& s) {
    if (s == "rvq")
        return EvalScheme::rvq;
    if (s == "ra")
        return EvalScheme::ra;
    if (s == "sdpic")
        return EvalScheme::sdpic;
    if (s == "mdpic")
        return EvalScheme::mdpic;
    throw ConfigError("unknown scheme '" + s + "' (expected rvq, ra, sdpic or mdpic)");
}

inline bool needs_checkpoint(EvalScheme s) { return s == EvalScheme::sdpic || s == EvalScheme::mdpic; }

struct UtilizationResult {
    EvalScheme scheme = EvalScheme::rvq;
    int m = 1;
    std::vector<double> rate_by_timestep;  // mean over episodes, bits/s
    std::vector<double> effective_rate_by_timestep;
    double mean_rate = 0.0;
    double mean_effective_rate = 0.0;
    double mean_time_overhead = 0.0;
    long feedback_bits = 0;
};

struct EpisodeTrace {
    std::vector<double> rate;
    std::vector<double> effective_rate;
    std::vector<double> overhead;
};

/// One utilization episode of `timesteps` coherence blocks.
inline EpisodeTrace utilization_episode(const Scenario& sc, EvalScheme scheme, int m, int timesteps,
                                        std::uint64_t seed, std::uint64_t episode,
                                        const std::vector<const Mlp*>& actors, const DirectionCodebook* directions,
                                        const Normalization& norm) {
    EpisodeStreams streams(seed, "eval", episode);
    ChannelState chan = start_episode(sc, seed, "eval", episode, streams.channel);
    std::vector<Codeword> codebook = rvq_codebook(m, sc.n_groups, sc.bounds.min, sc.bounds.max, streams.codebook);
    EpisodeTrace tr;
    for (int t = 0; t < timesteps; ++t) {
        BlockResult block;
        switch (scheme) {
        case EvalScheme::rvq:
            block = run_block(codebook, chan, sc.profile, sc.budget, sc.timings, Scheme::rvq);
            codebook = rvq_codebook(m, sc.n_groups, sc.bounds.min, sc.bounds.max, streams.codebook);
            break;
        case EvalScheme::ra:
            block = run_block(codebook, chan, sc.profile, sc.budget, sc.timings, Scheme::ra);
            codebook = ra_update(codebook[static_cast<std::size_t>(block.selected_index - 1)], m, sc.steps.ra,
                                 sc.bounds, streams.codebook);
            break;
        case EvalScheme::sdpic:
        case EvalScheme::mdpic: {
            UtilizationStep step = utilization_step(actors, codebook, chan, *directions, sc, norm);
            block = std::move(step.block);
            codebook = std::move(step.next_codebook);
            break;
        }
        }
        tr.rate.push_back(block.rate);
        tr.effective_rate.push_back(block.effective_rate);
        tr.overhead.push_back(block.time_overhead);
        evolve(chan, sc.timings.coherence_time, streams.channel);
    }
    return tr;
}

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads. Results are
/// placed by index, so output order never depends on scheduling.
template <typename Fn>
auto parallel_map(int n, int workers, Fn fn) {
    using R = decltype(fn(0));
    std::vector<R> out(static_cast<std::size_t>(n));
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i)
            out[static_cast<std::size_t>(i)] = fn(i);
        return out;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (int i = w; i < n; i += workers)
                    out[static_cast<std::size_t>(i)] = fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return out;
}

/// Utilization campaign for one scheme and codebook size. DPIC schemes need
/// a checkpoint; SDPIC uses its first agent only.
inline UtilizationResult run_utilization(const ExperimentConfig& cfg, const Checkpoint* checkpoint, EvalScheme scheme,
                                         int m) {
    cfg.validate();
    require(m >= 1, "M must be >= 1");
    const Scenario sc = cfg.scenario();
    sc.validate();
    const Normalization norm = Normalization::for_link(sc.budget, sc.channel.n_bs, sc.n_groups);

    std::vector<const Mlp*> actors;
    std::optional<DirectionCodebook> directions;
    if (needs_checkpoint(scheme)) {
        if (checkpoint == nullptr)
            throw ConfigError("scheme " + to_string(scheme) + " requires --checkpoints");
        const auto& man = checkpoint->manifest;
        require(man.direction_dims == sc.n_groups, "checkpoint was trained for a different N_G");
        const std::size_t used = scheme == EvalScheme::sdpic ? 1 : checkpoint->actors.size();
        for (std::size_t i = 0; i < used; ++i) {
            require(checkpoint->actors[i].input_size() == 2 * sc.channel.n_bs + sc.n_groups,
                    "checkpoint actor input size does not match the config");
            actors.push_back(&checkpoint->actors[i]);
        }
        directions.emplace(man.direction_seed, man.direction_size, man.direction_dims, man.dpic_step);
    }

    const int episodes = cfg.eval_episodes;
    const int timesteps = cfg.eval_timesteps;
    const auto traces = parallel_map(episodes, cfg.workers, [&](int e) {
        return utilization_episode(sc, scheme, m, timesteps, cfg.seed, static_cast<std::uint64_t>(e), actors,
                                   directions ? &*directions : nullptr, norm);
    });

    UtilizationResult res;
    res.scheme = scheme;
    res.m = m;
    res.rate_by_timestep.assign(static_cast<std::size_t>(timesteps), 0.0);
    res.effective_rate_by_timestep.assign(static_cast<std::size_t>(timesteps), 0.0);
    double overhead = 0.0;
    for (const auto& tr : traces)
        for (std::size_t t = 0; t < static_cast<std::size_t>(timesteps); ++t) {
            res.rate_by_timestep[t] += tr.rate[t];
            res.effective_rate_by_timestep[t] += tr.effective_rate[t];
            overhead += tr.overhead[t];
        }
    for (std::size_t t = 0; t < static_cast<std::size_t>(timesteps); ++t) {
        res.rate_by_timestep[t] /= episodes;
        res.effective_rate_by_timestep[t] /= episodes;
        res.mean_rate += res.rate_by_timestep[t];
        res.mean_effective_rate += res.effective_rate_by_timestep[t];
    }
    res.mean_rate /= timesteps;
    res.mean_effective_rate /= timesteps;
    res.mean_time_overhead = overhead / (static_cast<double>(episodes) * timesteps);
    res.feedback_bits = feedback_bits(needs_checkpoint(scheme) ? Scheme::dpic : Scheme::ra, m,
                                      directions ? directions->size() : 1);
    return res;
}

/// Per-timestep aggregate rows followed by one overall row (timestep -1).
inline std::vector<MetricsRow> utilization_rows(const ExperimentConfig& cfg, const UtilizationResult& r) {
    std::vector<MetricsRow> rows;
    const std::string run_id = "eval-" + std::to_string(cfg.seed);
    for (std::size_t t = 0; t < r.rate_by_timestep.size(); ++t)
        rows.push_back({run_id, "eval", to_string(r.scheme), -1, static_cast<long>(t), r.m, -1, r.rate_by_timestep[t],
                        r.effective_rate_by_timestep[t], 0.0, 0.0, 0.0, 0.0});
    rows.push_back({run_id, "eval", to_string(r.scheme), -1, -1, r.m, -1, r.mean_rate, r.mean_effective_rate, 0.0, 0.0,
                    0.0, 0.0});
    return rows;
}

inline void write_rows(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path.string() + "'");
    out << kMetricsHeader << '\n';
    for (const auto& r : rows)
        out << r.csv() << '\n';
}

// ---------------------------------------------------------------- sweep over M

inline constexpr const char* kSweepHeader =
    "scheme,M,mean_rate_bps,mean_effective_rate_bps,mean_time_overhead_s,feedback_bits";

struct SweepRow {
    EvalScheme scheme;
    int m;
    double mean_rate;
    double mean_effective_rate;
    double mean_time_overhead;
    long feedback_bits;

    std::string csv() const {
        return to_string(scheme) + ',' + std::to_string(m) + ',' + fmt_num(mean_rate) + ',' +
               fmt_num(mean_effective_rate) + ',' + fmt_num(mean_time_overhead) + ',' + std::to_string(feedback_bits);
    }
};

inline std::vector<SweepRow> sweep_m(const ExperimentConfig& cfg, const Checkpoint* checkpoint,
                                     const std::vector<EvalScheme>& schemes, const std::vector<int>& ms) {
    std::vector<SweepRow> rows;
    for (EvalScheme s : schemes)
        for (int m : ms) {
            const UtilizationResult r = run_utilization(cfg, checkpoint, s, m);
            rows.push_back({s, m, r.mean_rate, r.mean_effective_rate, r.mean_time_overhead, r.feedback_bits});
        }
    return rows;
}

inline void write_sweep(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path.string() + "'");
    out << kSweepHeader << '\n';
    for (const auto& r : rows)
        out << r.csv() << '\n';
}

// ---------------------------------------------------------------- reflection map

inline constexpr const char* kGammaHeader = "c_pf,theta_deg,magnitude,phase_deg";

/// Gamma(C, theta) on a c_steps x theta_steps grid over the capacitance
/// range and [0, 90] deg.
inline void write_gamma_map(std::ostream& out, const CircuitProfile& profile, const CapacitanceBounds& bounds,
                            int c_steps, int theta_steps) {
    require(c_steps >= 2 && theta_steps >= 2, "grid needs at least 2 points per axis");
    out << kGammaHeader << '\n';
    for (int i = 0; i < c_steps; ++i) {
        const double c = bounds.min + (bounds.max - bounds.min) * i / (c_steps - 1);
        for (int k = 0; k < theta_steps; ++k) {
            const double theta = 90.0 * k / (theta_steps - 1);
            const Complex g = reflection_coefficient(c, theta, profile);
            out << fmt_num(c / kPico) << ',' << fmt_num(theta) << ',' << fmt_num(std::abs(g)) << ','
                << fmt_num(rad2deg(std::arg(g))) << '\n';
        }
    }
}

}  // namespace irsfb
