#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "irsfb/harness.hpp"

using namespace irsfb;
namespace fs = std::filesystem;

namespace {

ExperimentConfig desk() {
    ExperimentConfig c;
    c.n_bs = 2;
    c.n_irs = 40;
    c.n_groups = 4;
    c.n_agents = 2;
    c.hidden = {32, 24};
    c.train_episodes = 6;
    c.train_timesteps = 20;
    c.eval_episodes = 500;
    c.eval_timesteps = 30;
    c.direction_size = 256;
    c.seed = 3;
    c.workers = 2;
    return c;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("irsfb_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);)
        out.push_back(l);
    return out;
}

std::vector<EpisodeTrace> traces(const ExperimentConfig& c, EvalScheme scheme, int m) {
    const Scenario sc = c.scenario();
    const Normalization norm = Normalization::for_link(sc.budget, sc.channel.n_bs, sc.n_groups);
    std::vector<EpisodeTrace> out;
    for (int e = 0; e < c.eval_episodes; ++e)
        out.push_back(utilization_episode(sc, scheme, m, c.eval_timesteps, c.seed, static_cast<std::uint64_t>(e), {},
                                          nullptr, norm));
    return out;
}

std::pair<double, double> mean_se(const std::vector<double>& v) {
    const auto n = static_cast<double>(v.size());
    double mean = 0.0, ss = 0.0;
    for (double x : v)
        mean += x / n;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1) / n)};
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
    const ExperimentConfig c = config_from_json(nlohmann::json::object());
    EXPECT_EQ(c, ExperimentConfig{});
    const Scenario sc = c.scenario();
    EXPECT_DOUBLE_EQ(sc.budget.tx_power, 0.1);
    EXPECT_DOUBLE_EQ(sc.budget.noise_power, 1e-11);
    EXPECT_EQ(sc.channel.n_bs, 5);
    EXPECT_EQ(sc.channel.n_irs, 200);
    EXPECT_EQ(sc.n_groups, 10);
    EXPECT_EQ(c.n_agents, 8);
    EXPECT_EQ(c.direction_size, 2048);
    EXPECT_DOUBLE_EQ(sc.timings.coherence_time, 5e-3);
    EXPECT_DOUBLE_EQ(sc.bounds.min, 0.4e-12);
    EXPECT_DOUBLE_EQ(sc.bounds.max, 2.7e-12);
    EXPECT_NEAR(sc.geometry.ue_speed, 3.0 / 3.6, 1e-15);
}

TEST(Config, DbmConversion) {
    EXPECT_DOUBLE_EQ(dbm_to_watts(20.0), 0.1);
    EXPECT_NEAR(dbm_to_watts(-80.0), 1e-11, 1e-26);
    ExperimentConfig c = config_from_json({{"tx_power_dbm", 30.0}});
    EXPECT_DOUBLE_EQ(c.scenario().budget.tx_power, 1.0);
}

TEST(Config, InvertedCapacitanceRangeNamesBothKeys) {
    try {
        config_from_json({{"c_min_pf", 3.0}, {"c_max_pf", 2.0}});
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("c_min_pf"), std::string::npos);
        EXPECT_NE(msg.find("c_max_pf"), std::string::npos);
    }
}

TEST(Config, UnknownAndMistypedKeysRejected) {
    EXPECT_THROW(config_from_json({{"n_irss", 10}}), ConfigError);
    EXPECT_THROW(config_from_json({{"direction_codebook", {{"sead", 1}}}}), ConfigError);
    EXPECT_THROW(config_from_json({{"n_bs", "five"}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json::array()), ConfigError);
}

TEST(Config, InvariantsChecked) {
    EXPECT_THROW(config_from_json({{"n_groups", 7}}), ConfigError);
    EXPECT_THROW(config_from_json({{"bandwidth_hz", 0.0}}), ConfigError);
    EXPECT_THROW(config_from_json({{"sweep_m", {1, 2, 64}}}), ConfigError);  // 64 x 100 us > 5 ms
    EXPECT_THROW(config_from_json({{"correlation", 1.5}}), ConfigError);
}

TEST(Config, RoundTripIsIdentical) {
    ExperimentConfig c = desk();
    c.tx_power_dbm = 17.3;
    c.path_loss_ref_db = std::nullopt;
    c.direction_seed = 0xFFFFFFFFFFFFULL;
    EXPECT_EQ(config_from_json(to_json(c)), c);
    EXPECT_EQ(config_from_json(nlohmann::json::parse(to_json(c).dump())), c);
}

TEST(Config, FileLoadingAndErrors) {
    const fs::path dir = scratch("config");
    std::ofstream(dir / "ok.json") << R"({"n_bs": 3, "profile_csv": "p.csv"})";
    std::ofstream(dir / "p.csv") << kProfileHeader << "\n0,2.0,0.4,0.5,1.0\n";
    const ExperimentConfig c = load_config(dir / "ok.json");
    EXPECT_EQ(c.n_bs, 3);
    EXPECT_EQ(fs::path(c.profile_csv), (dir / "p.csv").lexically_normal());
    EXPECT_EQ(c.scenario().profile.samples.size(), 1u);
    std::ofstream(dir / "bad.json") << "{ not json";
    EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
    EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
}

TEST(Config, FreeSpaceReferenceOption) {
    ExperimentConfig c;
    c.path_loss_ref_db = std::nullopt;
    EXPECT_DOUBLE_EQ(c.scenario().channel.path_loss_reference, free_space_reference_gain(3e8 / 5.195e9));
    c.path_loss_ref_db = -30.0;
    EXPECT_NEAR(c.scenario().channel.path_loss_reference, 1e-3, 1e-18);
}

TEST(Csv, NumberFormattingRoundTrips) {
    for (double v : {0.0, 1.0, -1e-300, 0.1, 12345678.9, 1.0 / 3.0})
        EXPECT_EQ(std::stod(fmt_num(v)), v);
    EXPECT_EQ(fmt_num(0.1), "0.1");
}

TEST(Csv, TrailingMeanDefinition) {
    std::vector<double> v(250);
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<double>(i * i % 17);
    const auto ma = trailing_mean(v, 100);
    for (std::size_t e = 0; e < v.size(); ++e) {
        const std::size_t lo = e >= 99 ? e - 99 : 0;
        double s = 0.0;
        for (std::size_t i = lo; i <= e; ++i)
            s += v[i];
        EXPECT_NEAR(ma[e], s / static_cast<double>(e - lo + 1), 1e-12);
    }
}

TEST(Training, CsvRowsCheckpointsAndDeterminism) {
    const ExperimentConfig c = desk();
    const fs::path a = scratch("train_a"), b = scratch("train_b");
    const TrainingRun run = run_training(c, a);
    run_training(c, b);
    const auto rows = lines(slurp(a / "training.csv"));
    ASSERT_EQ(rows.size(), 1u + 6u);
    EXPECT_EQ(rows[0], kMetricsHeader);
    EXPECT_EQ(slurp(a / "training.csv"), slurp(b / "training.csv"));
    EXPECT_TRUE(fs::exists(a / "checkpoints" / "manifest.json"));
    EXPECT_TRUE(fs::exists(a / "checkpoints" / "actor_2.json"));
    EXPECT_EQ(config_from_json(nlohmann::json::parse(slurp(a / "config.json"))), c);

    std::vector<double> raw;
    for (const auto& r : run.rows)
        raw.push_back(r.effective_rate);
    const auto ma = trailing_mean(raw, 100);
    for (std::size_t i = 0; i < run.rows.size(); ++i)
        EXPECT_DOUBLE_EQ(run.rows[i].moving_avg, ma[i]);
}

TEST(Utilization, DpicSchemesNeedCheckpoints) {
    EXPECT_THROW(run_utilization(desk(), nullptr, EvalScheme::mdpic, 4), ConfigError);
    EXPECT_THROW(run_utilization(desk(), nullptr, EvalScheme::sdpic, 4), ConfigError);
    EXPECT_THROW(eval_scheme_from_string("dpic"), ConfigError);
}

// Episodes are the independent units; timesteps within one share a channel.
TEST(Utilization, RvqIsFlatInTime) {
    const ExperimentConfig c = desk();
    const std::vector<EpisodeTrace> tr = traces(c, EvalScheme::rvq, 8);
    const auto T = static_cast<double>(c.eval_timesteps);
    const double tm = (T - 1) / 2;
    std::vector<double> slopes;
    for (const auto& e : tr) {
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t t = 0; t < e.rate.size(); ++t) {
            sxy += (static_cast<double>(t) - tm) * e.rate[t];
            sxx += (static_cast<double>(t) - tm) * (static_cast<double>(t) - tm);
        }
        slopes.push_back(sxy / sxx);
    }
    const auto [mean, se] = mean_se(slopes);
    EXPECT_LT(std::abs(mean), 1.96 * se) << "slope " << mean << " se " << se;
}

// Paired over episodes: no step may be significantly negative and the
// fifth block must be clearly above the first.
TEST(Utilization, RaImprovesOverFirstTimesteps) {
    const ExperimentConfig c = desk();
    const std::vector<EpisodeTrace> tr = traces(c, EvalScheme::ra, 8);
    auto diff = [&](std::size_t a, std::size_t b) {
        std::vector<double> d;
        for (const auto& e : tr)
            d.push_back(e.rate[b] - e.rate[a]);
        return mean_se(d);
    };
    for (std::size_t t = 1; t <= 5; ++t) {
        const auto [mean, se] = diff(t - 1, t);
        EXPECT_GT(mean + 1.96 * se, 0.0) << "step " << t;
    }
    const auto [gain, se] = diff(0, 5);
    EXPECT_GT(gain - 1.96 * se, 0.0);
    const UtilizationResult eight = run_utilization(c, nullptr, EvalScheme::ra, 8);
    const UtilizationResult one = run_utilization(c, nullptr, EvalScheme::ra, 1);
    EXPECT_GE(eight.mean_rate, one.mean_rate);
}

TEST(Utilization, WorkerCountDoesNotChangeOutput) {
    ExperimentConfig c = desk();
    c.eval_episodes = 37;
    c.workers = 1;
    const auto a = utilization_rows(c, run_utilization(c, nullptr, EvalScheme::ra, 4));
    c.workers = 5;
    const auto b = utilization_rows(c, run_utilization(c, nullptr, EvalScheme::ra, 4));
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_EQ(a[i].csv(), b[i].csv());
    EXPECT_EQ(a.size(), 31u);
    EXPECT_EQ(a.back().timestep, -1);
}

TEST(Utilization, TrainedAgentsEvaluate) {
    ExperimentConfig c = desk();
    c.eval_episodes = 20;
    const fs::path dir = scratch("eval");
    run_training(c, dir);
    const Checkpoint ck = load_checkpoint(dir / "checkpoints");
    const UtilizationResult md = run_utilization(c, &ck, EvalScheme::mdpic, 4);
    const UtilizationResult sd = run_utilization(c, &ck, EvalScheme::sdpic, 4);
    EXPECT_EQ(md.feedback_bits, 2 + 4 * 8);
    EXPECT_GT(md.mean_rate, 0.0);
    EXPECT_GT(sd.mean_rate, 0.0);
    ExperimentConfig other = c;
    other.n_groups = 5;
    EXPECT_THROW(run_utilization(other, &ck, EvalScheme::mdpic, 4), ConfigError);
}

TEST(Sweep, OverheadIncreasesWithM) {
    ExperimentConfig c = desk();
    c.eval_episodes = 50;
    const auto rows = sweep_m(c, nullptr, {EvalScheme::rvq, EvalScheme::ra}, {1, 2, 4, 8});
    ASSERT_EQ(rows.size(), 8u);
    for (std::size_t i = 1; i < 4; ++i) {
        EXPECT_GT(rows[i].mean_time_overhead, rows[i - 1].mean_time_overhead);
        EXPECT_GT(rows[4 + i].mean_time_overhead, rows[4 + i - 1].mean_time_overhead);
    }
    const fs::path dir = scratch("sweep");
    write_sweep(dir / "s.csv", rows);
    const auto l = lines(slurp(dir / "s.csv"));
    EXPECT_EQ(l[0], kSweepHeader);
    EXPECT_EQ(l.size(), 9u);
}

TEST(Sweep, ConstantRateMakesEffectiveRateDecreaseInM) {
    const Timings t;
    const double rate = 1e7;
    double prev = 1e300;
    for (long m : {1, 2, 4, 8, 16, 32}) {
        const double tp = time_overhead(Scheme::dpic, m, 2048, t, 10e6, true);
        const double eff = (t.coherence_time - tp) / t.coherence_time * rate;
        EXPECT_LT(eff, prev);
        prev = eff;
    }
}

TEST(GammaMap, GridShape) {
    std::ostringstream os;
    write_gamma_map(os, default_profile(), CapacitanceBounds{}, 5, 4);
    const auto l = lines(os.str());
    ASSERT_EQ(l.size(), 21u);
    EXPECT_EQ(l[0], kGammaHeader);
    EXPECT_EQ(l[1].substr(0, 6), "0.4,0,");
    EXPECT_EQ(l[20].substr(0, 7), "2.7,90,");
    EXPECT_THROW(write_gamma_map(os, default_profile(), CapacitanceBounds{}, 1, 4), ConfigError);
}
