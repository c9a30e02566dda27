#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "core.hpp"
#include "metaatom.hpp"
#include "rng.hpp"

namespace irsfb {

// Geometric multi-path channels for the UE -> BS, IRS -> BS and UE -> IRS
// links. Both arrays are uniform linear arrays in the azimuth plane; angles
// are measured from the array normal (broadside = 0 deg).

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double distance(Vec2 a, Vec2 b) { return std::hypot(b.x - a.x, b.y - a.y); }

/// Signed angle (degrees) between an array normal and the direction to a
/// target point.
inline double angle_from_normal(Vec2 from, double normal_deg, Vec2 to) {
    const double nx = std::cos(deg2rad(normal_deg));
    const double ny = std::sin(deg2rad(normal_deg));
    const double dx = to.x - from.x;
    const double dy = to.y - from.y;
    return rad2deg(std::atan2(nx * dy - ny * dx, nx * dx + ny * dy));
}

struct Geometry {
    Vec2 bs_pos{0.0, 0.0};
    Vec2 irs_pos{90.0, 30.0};
    Vec2 ue_pos{100.0, 0.0};
    double ue_speed = 3.0 / 3.6;  // m/s
    double ue_heading = 0.0;      // radians
    double wavelength = kSpeedOfLight / kDefaultCarrierHz;
    double bs_spacing = 0.5 * kSpeedOfLight / kDefaultCarrierHz;
    double irs_spacing = 0.1 * kSpeedOfLight / kDefaultCarrierHz;
    double bs_normal_deg = 0.0;     // BS array faces +x
    double irs_normal_deg = -90.0;  // IRS faces -y, towards the street

    static Geometry for_frequency(double frequency) {
        Geometry g;
        g.wavelength = kSpeedOfLight / frequency;
        g.bs_spacing = g.wavelength / 2.0;
        g.irs_spacing = g.wavelength / 10.0;
        return g;
    }

    void validate() const {
        auto finite = [](Vec2 p) { return std::isfinite(p.x) && std::isfinite(p.y); };
        require(finite(bs_pos) && finite(irs_pos) && finite(ue_pos), "positions must be finite");
        require(ue_speed >= 0.0, "UE speed must be >= 0");
        require(bs_spacing > 0.0 && irs_spacing > 0.0, "array spacings must be positive");
        require(wavelength > 0.0, "wavelength must be positive");
    }
};

struct ChannelConfig {
    Eigen::Index n_bs = 5;
    Eigen::Index n_irs = 200;
    int n_paths = 10;
    double rician_k = 5.0;
    double ple_ib = 2.0;
    double ple_ub = 3.75;
    double ple_ui = 2.2;
    double path_loss_reference = 1e-3;  // linear power gain at d0 = 1 m
    double correlation = 0.95;          // Gauss-Markov rho
    double angle_drift_deg = 0.1;

    void validate() const {
        require(n_bs >= 1 && n_irs >= 1, "array sizes must be >= 1");
        require(n_paths >= 1, "need at least one path per link");
        require(rician_k >= 0.0, "Rician K must be >= 0");
        require(path_loss_reference > 0.0, "path-loss reference gain must be positive");
        require(correlation >= 0.0 && correlation <= 1.0, "rho must be in [0, 1]");
        require(angle_drift_deg >= 0.0, "angle drift must be >= 0");
    }
};

/// One propagation path. Which angles are meaningful depends on the link:
/// UE->BS uses bs_angle, UE->IRS uses irs_angle (incident angle), IRS->BS
/// uses both (arrival at the BS, departure at the IRS).
struct Path {
    Complex gain;
    double bs_angle_deg = 0.0;
    double irs_angle_deg = 0.0;
};

using PathSet = std::vector<Path>;

inline constexpr double kReferenceDistance = 1.0;

/// Entry k = exp(-j 2 pi k spacing sin(angle) / wavelength).
inline CVector array_response(Eigen::Index n, double spacing, double angle_deg, double wavelength) {
    const double step = -2.0 * kPi * spacing * std::sin(deg2rad(angle_deg)) / wavelength;
    CVector a(n);
    for (Eigen::Index k = 0; k < n; ++k)
        a[k] = std::polar(1.0, step * static_cast<double>(k));
    return a;
}

/// Free-space gain at the reference distance, (lambda / (4 pi d0))^2.
inline double free_space_reference_gain(double wavelength) {
    const double r = wavelength / (4.0 * kPi * kReferenceDistance);
    return r * r;
}

/// Log-distance path loss: reference_gain * (d0 / d)^ple. Distances below d0
/// are clamped to d0.
inline double path_loss(double d, double ple, double reference_gain) {
    if (d < kReferenceDistance) {
        warn("path-loss distance " + std::to_string(d) + " m below reference, clamped to 1 m");
        d = kReferenceDistance;
    }
    return reference_gain * std::pow(kReferenceDistance / d, ple);
}

struct ChannelState {
    ChannelConfig config;
    Geometry geometry;

    PathSet ub_paths;  // UE -> BS, NLoS only
    PathSet ib_paths;  // IRS -> BS, NLoS part of the Rician link
    PathSet ui_paths;  // UE -> IRS, NLoS only

    double pl_ub = 0.0;
    double pl_ib = 0.0;
    double pl_ui = 0.0;
    double los_bs_angle_deg = 0.0;
    double los_irs_angle_deg = 0.0;

    // Derived from the above by rebuild().
    CVector h_ub;
    CMatrix h_ib;
    std::vector<CVector> h_ui;  // per-path UE -> IRS channel

    /// Recomputes large-scale terms and LoS angles from the geometry.
    void update_geometry() {
        const double ref = config.path_loss_reference;
        pl_ub = path_loss(distance(geometry.ue_pos, geometry.bs_pos), config.ple_ub, ref);
        pl_ib = path_loss(distance(geometry.irs_pos, geometry.bs_pos), config.ple_ib, ref);
        pl_ui = path_loss(distance(geometry.ue_pos, geometry.irs_pos), config.ple_ui, ref);
        los_bs_angle_deg = angle_from_normal(geometry.bs_pos, geometry.bs_normal_deg, geometry.irs_pos);
        los_irs_angle_deg = angle_from_normal(geometry.irs_pos, geometry.irs_normal_deg, geometry.bs_pos);
    }

    void rebuild() {
        const auto& g = geometry;
        const auto n_bs = config.n_bs;
        const auto n_irs = config.n_irs;
        const double inv_l = 1.0 / static_cast<double>(config.n_paths);

        h_ub = CVector::Zero(n_bs);
        for (const auto& p : ub_paths)
            h_ub += p.gain * array_response(n_bs, g.bs_spacing, p.bs_angle_deg, g.wavelength);
        h_ub *= std::sqrt(pl_ub * inv_l);

        const double k = config.rician_k;
        const double los_w = std::sqrt(k / (k + 1.0));
        const double nlos_w = std::sqrt(1.0 / (k + 1.0)) * std::sqrt(inv_l);
        h_ib = los_w * array_response(n_bs, g.bs_spacing, los_bs_angle_deg, g.wavelength) *
               array_response(n_irs, g.irs_spacing, los_irs_angle_deg, g.wavelength).transpose();
        for (const auto& p : ib_paths)
            h_ib += (nlos_w * p.gain) * array_response(n_bs, g.bs_spacing, p.bs_angle_deg, g.wavelength) *
                    array_response(n_irs, g.irs_spacing, p.irs_angle_deg, g.wavelength).transpose();
        h_ib *= std::sqrt(pl_ib);

        h_ui.clear();
        h_ui.reserve(ui_paths.size());
        const double ui_amp = std::sqrt(pl_ui * inv_l);
        for (const auto& p : ui_paths)
            h_ui.push_back((ui_amp * p.gain) * array_response(n_irs, g.irs_spacing, p.irs_angle_deg, g.wavelength));
    }
};

/// Draws a fresh channel realization for the given geometry.
inline ChannelState sample_initial(const ChannelConfig& config, const Geometry& geometry, Rng& rng) {
    config.validate();
    geometry.validate();
    ChannelState s;
    s.config = config;
    s.geometry = geometry;
    const int L = config.n_paths;
    for (int l = 0; l < L; ++l)
        s.ub_paths.push_back({rng.complex_normal(), rng.uniform(-90.0, 90.0), 0.0});
    for (int l = 0; l < L; ++l) {
        const Complex gain = rng.complex_normal();
        const double bs = rng.uniform(-90.0, 90.0);
        const double irs = rng.uniform(-90.0, 90.0);
        s.ib_paths.push_back({gain, bs, irs});
    }
    for (int l = 0; l < L; ++l) {
        const Complex gain = rng.complex_normal();
        s.ui_paths.push_back({gain, 0.0, rng.uniform(0.0, 90.0)});
    }
    s.update_geometry();
    s.rebuild();
    return s;
}

/// Advances the channel by one coherence block of length dt.
inline void evolve(ChannelState& s, double dt, Rng& rng) {
    const double rho = s.config.correlation;
    const double innov = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    const double drift = s.config.angle_drift_deg;
    auto fade = [&](Complex& g) { g = rho * g + innov * rng.complex_normal(); };
    auto jitter = [&](double a, double lo, double hi) { return std::clamp(a + rng.uniform(-drift, drift), lo, hi); };

    for (auto& p : s.ub_paths) {
        fade(p.gain);
        p.bs_angle_deg = jitter(p.bs_angle_deg, -90.0, 90.0);
    }
    for (auto& p : s.ib_paths) {
        fade(p.gain);
        p.bs_angle_deg = jitter(p.bs_angle_deg, -90.0, 90.0);
        p.irs_angle_deg = jitter(p.irs_angle_deg, -90.0, 90.0);
    }
    for (auto& p : s.ui_paths) {
        fade(p.gain);
        p.irs_angle_deg = jitter(p.irs_angle_deg, 0.0, 90.0);
    }

    auto& g = s.geometry;
    g.ue_pos.x += g.ue_speed * dt * std::cos(g.ue_heading);
    g.ue_pos.y += g.ue_speed * dt * std::sin(g.ue_heading);
    s.update_geometry();
    s.rebuild();
}

/// End-to-end compound channel for a group-level codeword:
/// h_ub + H_ib * sum_l diag(Gamma(q, theta_l)) h_ui_l.
inline CVector effective_channel(const ChannelState& s, const Codeword& q, const CircuitProfile& profile) {
    const Eigen::Index n_irs = s.config.n_irs;
    const Eigen::Index n_groups = q.size();
    require(n_groups > 0 && n_irs % n_groups == 0,
            "codeword length " + std::to_string(n_groups) + " incompatible with N_IRS = " + std::to_string(n_irs));
    require(s.h_ib.rows() == s.config.n_bs && s.h_ib.cols() == n_irs && s.h_ub.size() == s.config.n_bs,
            "channel state dimensions inconsistent");
    const Eigen::Index block = n_irs / n_groups;

    CVector reflected = CVector::Zero(n_irs);
    for (std::size_t l = 0; l < s.ui_paths.size(); ++l) {
        const CVector gamma = group_reflections(q, s.ui_paths[l].irs_angle_deg, profile);
        const CVector& h = s.h_ui[l];
        require(h.size() == n_irs, "UE-IRS path dimension mismatch");
        for (Eigen::Index g = 0; g < n_groups; ++g)
            reflected.segment(g * block, block) += gamma[g] * h.segment(g * block, block);
    }
    return s.h_ub + s.h_ib * reflected;
}

}  // namespace irsfb
