#pragma once

#include <cstdint>
#include <cstring>
#include <limits>
#include <vector>

#include "core.hpp"
#include "metaatom.hpp"
#include "rng.hpp"

namespace irsfb {

/// Maximum per-entry step sizes (farads) for the two adaptive schemes.
struct StepSizes {
    double ra = 0.46 * kPico;
    double dpic = 0.575 * kPico;

    static StepSizes from_bounds(const CapacitanceBounds& b, double ra_fraction = 0.2, double dpic_fraction = 0.25) {
        return {b.span() * ra_fraction, b.span() * dpic_fraction};
    }
    void validate() const { require(ra > 0.0 && dpic > 0.0, "step sizes must be positive"); }
};

/// Random codebook: M codewords with i.i.d. Uniform(low, high) entries.
inline std::vector<Codeword> rvq_codebook(int count, Eigen::Index dims, double low, double high, Rng& rng) {
    require(count >= 1, "codebook size must be >= 1");
    require(low <= high, "RVQ range is empty");
    std::vector<Codeword> cb;
    cb.reserve(static_cast<std::size_t>(count));
    for (int m = 0; m < count; ++m) {
        Codeword q(dims, 0.0);
        for (Eigen::Index i = 0; i < dims; ++i)
            q[i] = rng.uniform(low, high);
        cb.push_back(std::move(q));
    }
    return cb;
}

/// Fixed set of K step directions shared by the BS and the IRS. Fully
/// determined by (seed, size, dims, max_step).
class DirectionCodebook {
public:
    DirectionCodebook(std::uint64_t seed, int size, Eigen::Index dims, double max_step)
        : seed_(seed), max_step_(max_step) {
        require(size >= 1, "direction codebook size must be >= 1");
        require(dims >= 1, "direction codebook dims must be >= 1");
        require(max_step >= 0.0, "direction step must be >= 0");
        Rng rng(seed);
        entries_.resize(dims, size);
        for (int k = 0; k < size; ++k)
            for (Eigen::Index i = 0; i < dims; ++i)
                entries_(i, k) = rng.uniform(-max_step, max_step);
    }

    int size() const { return static_cast<int>(entries_.cols()); }
    Eigen::Index dims() const { return entries_.rows(); }
    std::uint64_t seed() const { return seed_; }
    double max_step() const { return max_step_; }

    /// Direction k (0-based), farads.
    auto entry(int k) const { return entries_.col(k); }
    const RMatrix& entries() const { return entries_; }

    /// Index of the entry closest (Euclidean) to `target`, which is given in
    /// the same units as the entries scaled by `scale`. Ties resolve to the
    /// lowest index.
    int nearest(const RVector& target, double scale = 1.0) const {
        require(target.size() == dims(), "quantizer input dimension mismatch");
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int k = 0; k < size(); ++k) {
            const double d = (entries_.col(k) * scale - target).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        return best;
    }

    /// FNV-style hash over the entry bit patterns; stable for the lifetime of
    /// the object.
    std::uint64_t fingerprint() const {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (Eigen::Index i = 0; i < entries_.size(); ++i) {
            std::uint64_t bits;
            const double v = entries_.data()[i];
            std::memcpy(&bits, &v, sizeof bits);
            h = (h ^ bits) * 0x100000001B3ULL;
        }
        return h;
    }

private:
    std::uint64_t seed_;
    double max_step_;
    RMatrix entries_;  // dims x size
};

inline DirectionCodebook direction_codebook(int size, Eigen::Index dims, double max_step, std::uint64_t seed) {
    return DirectionCodebook(seed, size, dims, max_step);
}

/// Random-adjacency update: M perturbed copies of the selected codeword.
inline std::vector<Codeword> ra_update(const Codeword& selected, int count, double step, const CapacitanceBounds& b,
                                       Rng& rng) {
    require(count >= 1, "codebook size must be >= 1");
    std::vector<Codeword> cb;
    cb.reserve(static_cast<std::size_t>(count));
    for (int m = 0; m < count; ++m) {
        Codeword q = selected;
        for (Eigen::Index i = 0; i < q.size(); ++i)
            q[i] = b.clip(selected[i] + rng.uniform(-step, step));
        cb.push_back(std::move(q));
    }
    return cb;
}

struct ClipResult {
    Codeword codeword;
    int clipped = 0;  // entries strictly outside the bounds before clipping
};

/// Applies one direction step to a codeword and clips it to the bounds.
template <typename Direction>
ClipResult dpic_apply(const Codeword& q, const Direction& step, const CapacitanceBounds& b) {
    require(q.size() == step.size(), "direction dimension mismatch");
    ClipResult out{q, 0};
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        const double raw = q[i] + step[i];
        if (raw < b.min || raw > b.max)
            ++out.clipped;
        out.codeword[i] = b.clip(raw);
    }
    return out;
}

}  // namespace irsfb
