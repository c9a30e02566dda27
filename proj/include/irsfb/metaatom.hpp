#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"

namespace irsfb {

// Varactor meta-atom: equivalent-circuit impedance and reflection coefficient
// as a function of the tuning capacitance and the azimuth incident angle.

inline constexpr double kFreeSpaceImpedance = 376.73;
inline constexpr double kDefaultCarrierHz = 5.195e9;

/// Circuit parameters at one incident angle (SI units).
struct CircuitSample {
    double theta_deg = 0.0;
    double top_inductance = 0.0;     // henries
    double top_capacitance = 0.0;    // farads
    double top_resistance = 0.0;     // ohms
    double bottom_inductance = 0.0;  // henries

    friend bool operator==(const CircuitSample&, const CircuitSample&) = default;
};

/// Circuit parameters at a queried angle.
struct CircuitParams {
    double top_inductance;
    double top_capacitance;
    double top_resistance;
    double bottom_inductance;

    friend bool operator==(const CircuitParams&, const CircuitParams&) = default;
};

/// Angle-dependent equivalent circuit of a meta-atom, tabulated over theta.
struct CircuitProfile {
    std::vector<CircuitSample> samples;
    double free_space_impedance = kFreeSpaceImpedance;  // ohms
    double frequency = kDefaultCarrierHz;               // hertz

    double angular_frequency() const { return 2.0 * kPi * frequency; }

    void validate() const {
        require(!samples.empty(), "circuit profile has no samples");
        require(free_space_impedance > 0.0, "free-space impedance must be positive");
        require(frequency > 0.0, "carrier frequency must be positive");
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto& s = samples[i];
            require(std::isfinite(s.theta_deg) && s.theta_deg >= 0.0 && s.theta_deg <= 90.0,
                    "profile theta out of [0, 90] at row " + std::to_string(i + 1));
            require(i == 0 || s.theta_deg > samples[i - 1].theta_deg,
                    "profile thetas must be strictly increasing (row " + std::to_string(i + 1) + ")");
            require(std::isfinite(s.top_resistance) && s.top_resistance >= 0.0,
                    "R_T must be >= 0 (row " + std::to_string(i + 1) + ")");
            require(std::isfinite(s.top_inductance) && s.top_inductance > 0.0,
                    "L_T must be > 0 (row " + std::to_string(i + 1) + ")");
            require(std::isfinite(s.top_capacitance) && s.top_capacitance > 0.0,
                    "C_T must be > 0 (row " + std::to_string(i + 1) + ")");
            require(std::isfinite(s.bottom_inductance) && s.bottom_inductance > 0.0,
                    "L_B must be > 0 (row " + std::to_string(i + 1) + ")");
        }
    }
};

/// Placeholder profile shipped with the library: a single angle-independent
/// sample that is resonant inside [0.4, 2.7] pF at 5.195 GHz. Not measured
/// data; supply a profile file to reproduce a real surface.
inline CircuitProfile default_profile(double frequency = kDefaultCarrierHz) {
    CircuitProfile p;
    p.samples = {{0.0, 2.0 * kNano, 0.4 * kPico, 0.5, 1.0 * kNano}};
    p.frequency = frequency;
    return p;
}

/// Tunable capacitance range of the varactor.
struct CapacitanceBounds {
    double min = 0.4 * kPico;
    double max = 2.7 * kPico;

    void validate() const {
        require(min > 0.0, "c_min must be positive");
        require(min < max, "c_min must be smaller than c_max");
    }
    double span() const { return max - min; }
    double clip(double c) const { return std::clamp(c, min, max); }
    bool contains(double c) const { return c >= min && c <= max; }
};

/// One IRS configuration: a capacitance per control group, in farads.
struct Codeword {
    RVector values;

    Codeword() = default;
    explicit Codeword(RVector v) : values(std::move(v)) {}
    Codeword(Eigen::Index n, double fill) : values(RVector::Constant(n, fill)) {}

    Eigen::Index size() const { return values.size(); }
    double operator[](Eigen::Index i) const { return values[i]; }
    double& operator[](Eigen::Index i) { return values[i]; }

    bool within(const CapacitanceBounds& b) const {
        return (values.array() >= b.min).all() && (values.array() <= b.max).all();
    }

    friend bool operator==(const Codeword& a, const Codeword& b) {
        return a.values.size() == b.values.size() && (a.values.array() == b.values.array()).all();
    }
};

/// Piecewise-linear in theta, constant outside the tabulated range.
inline CircuitParams interpolate_profile(const CircuitProfile& profile, double theta_deg) {
    if (profile.samples.empty())
        throw ConfigError("circuit profile has no samples");
    if (!(theta_deg >= 0.0 && theta_deg <= 90.0))
        throw ConfigError("incident angle " + std::to_string(theta_deg) + " deg outside [0, 90]");

    const auto& s = profile.samples;
    auto params_of = [](const CircuitSample& x) {
        return CircuitParams{x.top_inductance, x.top_capacitance, x.top_resistance, x.bottom_inductance};
    };
    if (theta_deg <= s.front().theta_deg)
        return params_of(s.front());
    if (theta_deg >= s.back().theta_deg)
        return params_of(s.back());

    auto hi = std::upper_bound(s.begin(), s.end(), theta_deg,
                               [](double t, const CircuitSample& x) { return t < x.theta_deg; });
    auto lo = hi - 1;
    if (lo->theta_deg == theta_deg)
        return params_of(*lo);
    const double w = (theta_deg - lo->theta_deg) / (hi->theta_deg - lo->theta_deg);
    auto lerp = [w](double a, double b) { return a + w * (b - a); };
    return {lerp(lo->top_inductance, hi->top_inductance), lerp(lo->top_capacitance, hi->top_capacitance),
            lerp(lo->top_resistance, hi->top_resistance), lerp(lo->bottom_inductance, hi->bottom_inductance)};
}

/// Meta-atom impedance: the bottom-layer inductance in parallel with the
/// series R-L-C_T-C top branch.
inline Complex impedance(double capacitance, double theta_deg, const CircuitProfile& profile) {
    if (!(capacitance > 0.0))
        throw ConfigError("capacitance must be positive");
    const CircuitParams c = interpolate_profile(profile, theta_deg);
    const double w = profile.angular_frequency();
    const Complex j(0.0, 1.0);

    const Complex bottom = j * w * c.bottom_inductance;
    const Complex top = c.top_resistance + j * w * c.top_inductance + 1.0 / (j * w * c.top_capacitance) +
                        1.0 / (j * w * capacitance);
    const Complex den = bottom + top;
    if (std::abs(den) < 1e-12) {
        std::ostringstream os;
        os << "impedance pole at C = " << capacitance << " F, theta = " << theta_deg << " deg";
        throw SingularityError(os.str());
    }
    return bottom * top / den;
}

inline Complex reflection_from_impedance(Complex z, double z0) {
    const Complex den = z + z0;
    if (den == Complex(0.0, 0.0))
        throw SingularityError("reflection coefficient undefined for Z = -Z0");
    return (z - z0) / den;
}

inline Complex reflection_coefficient(double capacitance, double theta_deg, const CircuitProfile& profile) {
    return reflection_from_impedance(impedance(capacitance, theta_deg, profile), profile.free_space_impedance);
}

/// Contiguous blocks of n_irs / n_groups meta-atoms share one group value.
inline RVector expand_groups(const Codeword& q, Eigen::Index n_irs, Eigen::Index n_groups) {
    require(n_groups > 0 && n_irs > 0, "group counts must be positive");
    require(n_irs % n_groups == 0, "N_G = " + std::to_string(n_groups) + " does not divide N_IRS = " +
                                       std::to_string(n_irs));
    require(q.size() == n_groups, "codeword has " + std::to_string(q.size()) + " entries, expected " +
                                      std::to_string(n_groups));
    const Eigen::Index block = n_irs / n_groups;
    RVector out(n_irs);
    for (Eigen::Index g = 0; g < n_groups; ++g)
        out.segment(g * block, block).setConstant(q[g]);
    return out;
}

/// Reflection coefficient of each group at one incident angle.
inline CVector group_reflections(const Codeword& q, double theta_deg, const CircuitProfile& profile) {
    CVector out(q.size());
    for (Eigen::Index g = 0; g < q.size(); ++g)
        out[g] = reflection_coefficient(q[g], theta_deg, profile);
    return out;
}

/// Diagonal of the reflection matrix over all meta-atoms.
inline CVector reflection_vector(const Codeword& q, double theta_deg, const CircuitProfile& profile,
                                 Eigen::Index n_irs, Eigen::Index n_groups) {
    const RVector c = expand_groups(q, n_irs, n_groups);
    CVector out(n_irs);
    for (Eigen::Index n = 0; n < n_irs; ++n)
        out[n] = reflection_coefficient(c[n], theta_deg, profile);
    return out;
}

namespace detail {

inline double parse_strict_double(const std::string& field, std::size_t row) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        throw ConfigError("profile row " + std::to_string(row) + ": not a number: '" + field + "'");
    }
    while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used])))
        ++used;
    if (used != field.size() || !std::isfinite(v))
        throw ConfigError("profile row " + std::to_string(row) + ": invalid value '" + field + "'");
    return v;
}

inline std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

}  // namespace detail

inline constexpr const char* kProfileHeader = "theta_deg,L_T_nH,C_T_pF,R_T_ohm,L_B_nH";

/// Parses a circuit profile CSV (nH / pF at the boundary, SI inside).
inline CircuitProfile parse_profile_csv(std::istream& in, double frequency = kDefaultCarrierHz,
                                        double z0 = kFreeSpaceImpedance) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != kProfileHeader)
        throw ConfigError(std::string("profile header must be exactly '") + kProfileHeader + "'");

    CircuitProfile p;
    p.frequency = frequency;
    p.free_space_impedance = z0;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        line = detail::trim(line);
        if (line.empty())
            continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ','))
            fields.push_back(detail::trim(f));
        if (fields.size() != 5)
            throw ConfigError("profile row " + std::to_string(row) + ": expected 5 fields");
        double v[5];
        for (int i = 0; i < 5; ++i)
            v[i] = detail::parse_strict_double(fields[i], row);
        if (!p.samples.empty() && v[0] == p.samples.back().theta_deg)
            throw ConfigError("profile row " + std::to_string(row) + ": duplicate theta " + fields[0]);
        p.samples.push_back({v[0], v[1] * kNano, v[2] * kPico, v[3], v[4] * kNano});
    }
    p.validate();
    return p;
}

inline CircuitProfile load_profile_csv(const std::string& path, double frequency = kDefaultCarrierHz,
                                       double z0 = kFreeSpaceImpedance) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open profile file '" + path + "'");
    return parse_profile_csv(in, frequency, z0);
}

}  // namespace irsfb
