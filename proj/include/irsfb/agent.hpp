#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "channel.hpp"
#include "codebook.hpp"
#include "core.hpp"
#include "neural.hpp"
#include "protocol.hpp"
#include "rng.hpp"
#include "scenario.hpp"

namespace irsfb {

// DNN-policy IRS control: the codeword-update MDP, DDPG training of
// independent agents and the noise-free utilization controller.

/// Scalings between physical units and network units.
struct Normalization {
    double channel = 1.0;      // h_eff multiplier, sqrt(P / (sigma^2 N_BS N_G))
    double capacitance = 1e12; // farads -> ~unit scale
    double action = 1e13;      // farad steps -> network action units

    static Normalization for_link(const LinkBudget& b, Eigen::Index n_bs, Eigen::Index n_groups) {
        Normalization n;
        n.channel = std::sqrt(b.tx_power / (b.noise_power * static_cast<double>(n_bs * n_groups)));
        return n;
    }
};

/// State layout: [Re h_eff (N_BS), Im h_eff (N_BS), q (N_G)], normalized.
inline RVector build_state(const CVector& h_eff, const Codeword& q, const Normalization& norm) {
    const Eigen::Index n_bs = h_eff.size();
    RVector s(2 * n_bs + q.size());
    s.head(n_bs) = norm.channel * h_eff.real();
    s.segment(n_bs, n_bs) = norm.channel * h_eff.imag();
    s.tail(q.size()) = norm.capacitance * q.values;
    return s;
}

inline RVector build_state(const CVector& h_eff, const Codeword& q, const LinkBudget& b, Eigen::Index n_bs,
                           Eigen::Index n_groups) {
    require(h_eff.size() == n_bs, "h_eff has wrong length");
    require(q.size() == n_groups, "codeword has wrong length");
    return build_state(h_eff, q, Normalization::for_link(b, n_bs, n_groups));
}

/// Inverse of build_state.
inline std::pair<CVector, Codeword> split_state(const RVector& s, Eigen::Index n_bs, const Normalization& norm) {
    CVector h(n_bs);
    for (Eigen::Index i = 0; i < n_bs; ++i)
        h[i] = Complex(s[i], s[n_bs + i]) / norm.channel;
    return {h, Codeword(RVector(s.tail(s.size() - 2 * n_bs) / norm.capacitance))};
}

/// r = (rate - nu * n_clip) / W, i.e. rate / W - n_clip when nu = W.
inline double reward(double rate_next, int n_clip, double nu, double bandwidth) {
    return (rate_next - nu * static_cast<double>(n_clip)) / bandwidth;
}

struct Transition {
    RVector state;
    RVector action;
    double reward = 0.0;
    RVector next_state;
};

/// Bounded FIFO; the oldest transition is evicted first.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 500000) : capacity_(capacity) {
        require(capacity >= 1, "replay capacity must be >= 1");
    }

    void push(Transition t) {
        if (items_.size() == capacity_)
            items_.pop_front();
        items_.push_back(std::move(t));
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return items_.empty(); }
    const Transition& operator[](std::size_t i) const { return items_[i]; }

    /// Uniform sampling with replacement.
    std::vector<const Transition*> sample(std::size_t n, Rng& rng) const {
        require(!items_.empty(), "cannot sample from an empty replay buffer");
        std::vector<const Transition*> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(&items_[rng.index(items_.size())]);
        return out;
    }

private:
    std::size_t capacity_;
    std::deque<Transition> items_;
};

/// Exploration variance schedule in action units:
/// eps_e = max(eps_min, decay * eps_{e-1}).
struct NoiseSchedule {
    double initial = 0.0;
    double floor = 0.0;
    double decay = 0.99;
    double current = 0.0;

    static NoiseSchedule standard(double initial, double floor_divisor = 300.0, double decay = 0.99) {
        return {initial, initial / floor_divisor, decay, initial};
    }

    void advance() { current = std::max(floor, decay * current); }
};

struct DdpgConfig {
    std::vector<int> hidden{400, 300};
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double gamma = 0.99;
    double tau = 0.001;
    int batch_size = 32;
    std::size_t replay_capacity = 500000;
    bool noise_is_std = false;  // interpret eps as a standard deviation instead of a variance
};

struct Agent {
    Mlp actor;
    Mlp critic;
    Mlp target_actor;
    Mlp target_critic;
    AdamState actor_opt;
    AdamState critic_opt;
    ReplayBuffer buffer;

    bool all_finite() const {
        return actor.all_finite() && critic.all_finite() && target_actor.all_finite() && target_critic.all_finite();
    }
};

/// Actor: state -> tanh output scaled to +-action_bound. Critic: [state;
/// action] -> scalar. Targets start as copies.
inline Agent make_agent(Eigen::Index state_dim, Eigen::Index action_dim, double action_bound, const DdpgConfig& cfg,
                        Rng& rng) {
    std::vector<int> a_sizes{static_cast<int>(state_dim)};
    a_sizes.insert(a_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    a_sizes.push_back(static_cast<int>(action_dim));
    std::vector<int> c_sizes{static_cast<int>(state_dim + action_dim)};
    c_sizes.insert(c_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    c_sizes.push_back(1);

    Agent a{make_mlp(a_sizes, Activation::relu, Activation::tanh, action_bound, rng),
            make_mlp(c_sizes, Activation::relu, Activation::linear, 1.0, rng),
            {},
            {},
            {},
            {},
            ReplayBuffer(cfg.replay_capacity)};
    a.target_actor = a.actor;
    a.target_critic = a.critic;
    a.actor_opt = AdamState(a.actor, {cfg.actor_lr});
    a.critic_opt = AdamState(a.critic, {cfg.critic_lr});
    return a;
}

struct BehaviorAction {
    RVector action;  // clipped continuous direction, action units
    int index = 0;   // 0-based entry of the direction codebook
};

/// u = clip(actor(s) + v, +-bound) with v ~ N(0, noise I) per entry, then the
/// nearest direction codebook entry. noise == 0 draws nothing.
inline BehaviorAction behavior_action(const Mlp& actor, const RVector& state, double noise,
                                      const DirectionCodebook& directions, const Normalization& norm, Rng& rng,
                                      bool noise_is_std = false) {
    const double bound = directions.max_step() * norm.action;
    RVector u = actor.forward(state);
    require(u.size() == directions.dims(), "actor output does not match direction codebook dims");
    if (noise > 0.0) {
        const double sd = noise_is_std ? noise : std::sqrt(noise);
        for (Eigen::Index i = 0; i < u.size(); ++i)
            u[i] += sd * rng.normal();
    }
    u = u.cwiseMax(-bound).cwiseMin(bound);
    const int k = directions.nearest(u, norm.action);
    return {std::move(u), k};
}

struct UpdateStats {
    double critic_loss = 0.0;  // batch MSE before the step
    double actor_objective = 0.0;
};

/// One Adam step of the critic on the batch MSE to fixed targets y. Inputs
/// are [state; action] columns. Returns the MSE before the step.
inline double critic_step(Mlp& critic, AdamState& opt, const RMatrix& sa, const RVector& y) {
    const ForwardTrace ct = critic.trace(sa);
    const RVector err = ct.output.row(0).transpose() - y;
    const auto B = static_cast<double>(sa.cols());
    const RMatrix dq = (2.0 / B) * err.transpose();
    adam_step(critic, backward(critic, ct, dq).params, opt);
    return err.squaredNorm() / B;
}

/// One DDPG step: critic regression to r + gamma Q'(s', pi'(s')), actor
/// ascent on Q(s, pi(s)) through the updated critic, then soft target
/// updates.
inline UpdateStats ddpg_update(Agent& agent, const std::vector<const Transition*>& batch, double gamma, double tau) {
    require(!batch.empty(), "empty DDPG batch");
    const Eigen::Index sd = batch.front()->state.size();
    const Eigen::Index ad = batch.front()->action.size();
    const auto B = static_cast<Eigen::Index>(batch.size());
    RMatrix s(sd, B), a(ad, B), s2(sd, B);
    RVector r(B);
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto& t = *batch[static_cast<std::size_t>(i)];
        s.col(i) = t.state;
        a.col(i) = t.action;
        s2.col(i) = t.next_state;
        r[i] = t.reward;
    }

    RMatrix sa2(sd + ad, B);
    sa2.topRows(sd) = s2;
    sa2.bottomRows(ad) = agent.target_actor.forward(s2);
    const RVector y = r + gamma * agent.target_critic.forward(sa2).row(0).transpose();

    RMatrix sa(sd + ad, B);
    sa.topRows(sd) = s;
    sa.bottomRows(ad) = a;
    UpdateStats stats;
    stats.critic_loss = critic_step(agent.critic, agent.critic_opt, sa, y);

    const ForwardTrace at = agent.actor.trace(s);
    sa.bottomRows(ad) = at.output;
    const ForwardTrace qt = agent.critic.trace(sa);
    stats.actor_objective = qt.output.mean();
    const RMatrix up = RMatrix::Constant(1, B, -1.0 / static_cast<double>(B));
    const BackwardResult cq = backward(agent.critic, qt, up);
    adam_step(agent.actor, backward(agent.actor, at, cq.input.bottomRows(ad)).params, agent.actor_opt);

    soft_update(agent.target_critic, agent.critic, tau);
    soft_update(agent.target_actor, agent.actor, tau);
    return stats;
}

/// Codeword m (1-based) is handled by agent mod(m - 1, M_A) + 1.
inline int assign_agent(int m, int n_agents) {
    require(m >= 1 && n_agents >= 1, "assign_agent needs m >= 1 and M_A >= 1");
    return (m - 1) % n_agents + 1;
}

struct TrainingSetup {
    Scenario scenario;
    DdpgConfig ddpg;
    int n_agents = 8;
    int episodes = 1000;
    int timesteps = 500;
    int direction_size = 2048;
    std::uint64_t direction_seed = 1;
    double noise_initial = 0.0;  // action units; 0 picks (c_max - c_min) / 5
    double noise_floor_divisor = 300.0;
    double noise_decay = 0.99;
    double reward_weight = 0.0;  // nu in bits/s; 0 picks nu = W
    std::uint64_t seed = 0;

    Normalization normalization() const {
        return Normalization::for_link(scenario.budget, scenario.channel.n_bs, scenario.n_groups);
    }
    DirectionCodebook directions() const {
        return DirectionCodebook(direction_seed, direction_size, scenario.n_groups, scenario.steps.dpic);
    }
    double nu() const { return reward_weight > 0.0 ? reward_weight : scenario.budget.bandwidth; }
    NoiseSchedule noise() const {
        const double eps0 =
            noise_initial > 0.0 ? noise_initial : scenario.bounds.span() / 5.0 * normalization().action;
        return NoiseSchedule::standard(eps0, noise_floor_divisor, noise_decay);
    }
};

struct EpisodeMetrics {
    int episode = 0;
    double mean_rate = 0.0;            // best codeword per block, bits/s
    double mean_effective_rate = 0.0;  // bits/s
    double mean_reward = 0.0;
    double epsilon = 0.0;
};

struct TrainingResult {
    std::vector<Agent> agents;
    std::vector<EpisodeMetrics> episodes;
};

/// Trains M_A independent agents, agent m owning codeword m.
inline TrainingResult train(const TrainingSetup& setup,
                            const std::function<void(const EpisodeMetrics&)>& on_episode = {}) {
    const Scenario& sc = setup.scenario;
    sc.validate();
    require(setup.n_agents >= 1, "M_A must be >= 1");
    require(setup.episodes >= 1 && setup.timesteps >= 1, "episode and timestep counts must be >= 1");
    require(setup.ddpg.batch_size >= 1, "batch size must be >= 1");

    const Normalization norm = setup.normalization();
    const DirectionCodebook directions = setup.directions();
    const Eigen::Index n_bs = sc.channel.n_bs;
    const Eigen::Index n_g = sc.n_groups;
    const double bound = directions.max_step() * norm.action;
    const double W = sc.budget.bandwidth;
    const int MA = setup.n_agents;

    TrainingResult out;
    std::vector<Rng> replay_rng;
    for (int m = 0; m < MA; ++m) {
        Rng init = Rng::substream(setup.seed, "train/init", static_cast<std::uint64_t>(m));
        out.agents.push_back(make_agent(2 * n_bs + n_g, n_g, bound, setup.ddpg, init));
        replay_rng.push_back(Rng::substream(setup.seed, "train/replay", static_cast<std::uint64_t>(m)));
    }

    struct Pending {
        RVector state;
        RVector action;
        int clipped = 0;
    };

    NoiseSchedule noise = setup.noise();
    const double overhead_final = time_overhead(Scheme::dpic, MA, directions.size(), sc.timings, W, true);
    const double overhead_last = time_overhead(Scheme::dpic, MA, directions.size(), sc.timings, W, false);

    for (int e = 0; e < setup.episodes; ++e) {
        if (e >= 1)
            noise.advance();
        EpisodeStreams streams(setup.seed, "train", static_cast<std::uint64_t>(e));
        ChannelState chan = start_episode(sc, setup.seed, "train", static_cast<std::uint64_t>(e), streams.channel);
        std::vector<Codeword> codebook = rvq_codebook(MA, n_g, sc.bounds.min, sc.bounds.max, streams.codebook);
        std::vector<std::optional<Pending>> pending(static_cast<std::size_t>(MA));

        double rate_sum = 0.0, eff_sum = 0.0, reward_sum = 0.0;
        long reward_count = 0;
        for (int t = 0; t < setup.timesteps; ++t) {
            double best = -1.0;
            int best_m = 0;
            for (int m = 0; m < MA; ++m) {
                auto& agent = out.agents[static_cast<std::size_t>(m)];
                auto& q = codebook[static_cast<std::size_t>(m)];
                const CVector h = effective_channel(chan, q, sc.profile);
                const double rate = data_rate(h, sc.budget);
                if (rate > best) {
                    best = rate;
                    best_m = m + 1;
                }
                RVector s = build_state(h, q, norm);
                auto& prev = pending[static_cast<std::size_t>(m)];
                if (prev) {
                    const double r = reward(rate, prev->clipped, setup.nu(), W);
                    reward_sum += r;
                    ++reward_count;
                    agent.buffer.push({std::move(prev->state), std::move(prev->action), r, s});
                }
                BehaviorAction act = behavior_action(agent.actor, s, noise.current, directions, norm, streams.noise,
                                                     setup.ddpg.noise_is_std);
                ClipResult next = dpic_apply(q, directions.entry(act.index), sc.bounds);
                q = std::move(next.codeword);
                prev = Pending{std::move(s), std::move(act.action), next.clipped};

                if (agent.buffer.size() >= static_cast<std::size_t>(setup.ddpg.batch_size))
                    ddpg_update(agent,
                                agent.buffer.sample(static_cast<std::size_t>(setup.ddpg.batch_size),
                                                    replay_rng[static_cast<std::size_t>(m)]),
                                setup.ddpg.gamma, setup.ddpg.tau);
            }
            const double tp = best_m == MA ? overhead_last : overhead_final;
            rate_sum += best;
            eff_sum += (sc.timings.coherence_time - tp) / sc.timings.coherence_time * best;
            evolve(chan, sc.timings.coherence_time, streams.channel);
        }
        for (int m = 0; m < MA; ++m)
            if (!out.agents[static_cast<std::size_t>(m)].all_finite())
                throw DivergenceError("agent " + std::to_string(m + 1) + " has non-finite parameters after episode " +
                                      std::to_string(e));

        EpisodeMetrics em;
        em.episode = e;
        em.mean_rate = rate_sum / setup.timesteps;
        em.mean_effective_rate = eff_sum / setup.timesteps;
        em.mean_reward = reward_count > 0 ? reward_sum / static_cast<double>(reward_count) : 0.0;
        em.epsilon = noise.current;
        out.episodes.push_back(em);
        if (on_episode)
            on_episode(em);
    }
    return out;
}

struct UtilizationStep {
    BlockResult block;
    std::vector<Codeword> next_codebook;
};

/// Protocol steps 1-3 with DPIC feedback accounting, then each codeword is
/// moved by its assigned agent without exploration noise.
inline UtilizationStep utilization_step(const std::vector<const Mlp*>& actors, const std::vector<Codeword>& codebook,
                                        const ChannelState& state, const DirectionCodebook& directions,
                                        const Scenario& sc, const Normalization& norm) {
    require(!actors.empty(), "no trained agents");
    UtilizationStep out;
    out.block = run_block(codebook, state, sc.profile, sc.budget, sc.timings, Scheme::dpic, directions.size());
    out.next_codebook.reserve(codebook.size());
    Rng unused(0);
    const int MA = static_cast<int>(actors.size());
    for (std::size_t m = 0; m < codebook.size(); ++m) {
        const Mlp& actor = *actors[static_cast<std::size_t>(assign_agent(static_cast<int>(m) + 1, MA) - 1)];
        const CVector h = effective_channel(state, codebook[m], sc.profile);
        const BehaviorAction act = behavior_action(actor, build_state(h, codebook[m], norm), 0.0, directions, norm, unused);
        out.next_codebook.push_back(dpic_apply(codebook[m], directions.entry(act.index), sc.bounds).codeword);
    }
    return out;
}

// Checkpoints: manifest.json plus one weight JSON per network.

struct CheckpointManifest {
    int n_agents = 0;
    double dpic_step = 0.0;  // farads
    int direction_size = 0;
    Eigen::Index direction_dims = 0;
    std::uint64_t direction_seed = 0;
    Normalization normalization;
};

inline void save_checkpoint(const std::filesystem::path& dir, const std::vector<Agent>& agents,
                            const CheckpointManifest& manifest) {
    std::filesystem::create_directories(dir);
    nlohmann::json j{{"n_agents", manifest.n_agents},
                     {"dpic_step_farads", manifest.dpic_step},
                     {"direction_codebook",
                      {{"seed", manifest.direction_seed},
                       {"size", manifest.direction_size},
                       {"dims", manifest.direction_dims},
                       {"max_step_farads", manifest.dpic_step}}},
                     {"normalization",
                      {{"channel", manifest.normalization.channel},
                       {"capacitance", manifest.normalization.capacitance},
                       {"action", manifest.normalization.action}}}};
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t m = 0; m < agents.size(); ++m) {
        const std::string id = std::to_string(m + 1);
        const auto& a = agents[m];
        save_mlp(a.actor, (dir / ("actor_" + id + ".json")).string());
        save_mlp(a.critic, (dir / ("critic_" + id + ".json")).string());
        save_mlp(a.target_actor, (dir / ("target_actor_" + id + ".json")).string());
        save_mlp(a.target_critic, (dir / ("target_critic_" + id + ".json")).string());
        files.push_back({{"actor", "actor_" + id + ".json"},
                         {"critic", "critic_" + id + ".json"},
                         {"target_actor", "target_actor_" + id + ".json"},
                         {"target_critic", "target_critic_" + id + ".json"}});
    }
    j["agents"] = std::move(files);
    std::ofstream out(dir / "manifest.json");
    if (!out)
        throw Error("cannot write checkpoint manifest in '" + dir.string() + "'");
    out << j.dump(2) << '\n';
}

struct Checkpoint {
    CheckpointManifest manifest;
    std::vector<Mlp> actors;
    std::vector<Mlp> critics;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in)
        throw ConfigError("missing checkpoint manifest in '" + dir.string() + "'");
    Checkpoint ck;
    try {
        nlohmann::json j;
        in >> j;
        auto& m = ck.manifest;
        m.n_agents = j.at("n_agents").get<int>();
        m.dpic_step = j.at("dpic_step_farads").get<double>();
        const auto& d = j.at("direction_codebook");
        m.direction_seed = d.at("seed").get<std::uint64_t>();
        m.direction_size = d.at("size").get<int>();
        m.direction_dims = d.at("dims").get<Eigen::Index>();
        const auto& n = j.at("normalization");
        m.normalization = {n.at("channel").get<double>(), n.at("capacitance").get<double>(),
                           n.at("action").get<double>()};
        for (const auto& a : j.at("agents")) {
            ck.actors.push_back(load_mlp((dir / a.at("actor").get<std::string>()).string()));
            ck.critics.push_back(load_mlp((dir / a.at("critic").get<std::string>()).string()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed checkpoint manifest: " + std::string(e.what()));
    }
    require(static_cast<int>(ck.actors.size()) == ck.manifest.n_agents && ck.manifest.n_agents >= 1,
            "checkpoint agent count does not match manifest");
    return ck;
}

}  // namespace irsfb
