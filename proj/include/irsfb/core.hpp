#pragma once

#include <complex>
#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace irsfb {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 3.0e8;

// Unit conversions used at file/config boundaries. Everything inside the
// library is SI.
inline constexpr double kPico = 1e-12;
inline constexpr double kNano = 1e-9;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad file, violated invariant,
/// dimension mismatch). The CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Impedance or reflection coefficient evaluated at a pole.
class SingularityError : public Error {
public:
    using Error::Error;
};

/// Protocol overhead does not fit in the coherence block.
class ProtocolInfeasible : public Error {
public:
    using Error::Error;
};

/// Training produced non-finite parameters.
class DivergenceError : public Error {
public:
    using Error::Error;
};

inline void warn(const std::string& msg) { std::cerr << "irsfb: warning: " << msg << '\n'; }

inline void require(bool cond, const std::string& msg) {
    if (!cond)
        throw ConfigError(msg);
}

}  // namespace irsfb
