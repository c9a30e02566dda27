#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "channel.hpp"
#include "core.hpp"
#include "metaatom.hpp"

namespace irsfb {

// Adaptive-codebook limited feedback protocol. Per coherence block:
//   1. sound every codeword in codebook order,
//   2. BS picks the best one by rate,
//   3. BS feeds back the index (plus direction indices for DPIC) and the
//      IRS applies the winner,
//   4. codebook update, which is done by the caller.

struct LinkBudget {
    double tx_power = 0.1;      // watts
    double noise_power = 1e-11; // watts
    double bandwidth = 10e6;    // hertz

    void validate() const {
        require(tx_power > 0.0 && noise_power > 0.0 && bandwidth > 0.0, "link budget values must be positive");
    }
};

struct Timings {
    double coherence_time = 5e-3;  // seconds
    double reconfig_time = 100e-6; // seconds
    double feedback_rate = 0.1;    // bits/s/Hz

    void validate() const {
        require(coherence_time > 0.0 && reconfig_time > 0.0 && feedback_rate > 0.0, "timings must be positive");
        require(coherence_time > reconfig_time, "coherence time must exceed reconfiguration time");
    }
};

enum class Scheme { rvq, ra, dpic };

inline std::string_view to_string(Scheme s) {
    switch (s) {
    case Scheme::rvq: return "rvq";
    case Scheme::ra: return "ra";
    case Scheme::dpic: return "dpic";
    }
    return "?";
}

struct BlockResult {
    int selected_index = 1;  // 1-based
    double rate = 0.0;       // bits/s
    double time_overhead = 0.0;
    double effective_rate = 0.0;
    long feedback_bits = 0;
    std::vector<double> rates;  // per sounded codeword
};

inline double snr(const CVector& h_eff, const LinkBudget& b) { return b.tx_power * h_eff.squaredNorm() / b.noise_power; }

inline double data_rate(const CVector& h_eff, const LinkBudget& b) { return b.bandwidth * std::log2(1.0 + snr(h_eff, b)); }

/// ceil(log2(n)) for n >= 1, exact in integers.
inline long ceil_log2(long n) {
    long bits = 0;
    long v = 1;
    while (v < n) {
        v <<= 1;
        ++bits;
    }
    return bits;
}

inline long feedback_bits(Scheme scheme, long m, long k) {
    require(m >= 1, "codebook size must be >= 1");
    if (scheme == Scheme::dpic) {
        require(k >= 1, "direction codebook size must be >= 1");
        return ceil_log2(m) + m * ceil_log2(k);
    }
    return ceil_log2(m);
}

/// T_p = M T_reconf + bits / (W R_fb) + T_final.
inline double time_overhead(Scheme scheme, long m, long k, const Timings& t, double bandwidth,
                            bool final_reconf_needed) {
    const double tp = static_cast<double>(m) * t.reconfig_time +
                      static_cast<double>(feedback_bits(scheme, m, k)) / (bandwidth * t.feedback_rate) +
                      (final_reconf_needed ? t.reconfig_time : 0.0);
    if (tp >= t.coherence_time)
        throw ProtocolInfeasible("protocol overhead " + std::to_string(tp) + " s exceeds coherence time for M = " +
                                 std::to_string(m));
    return tp;
}

inline double effective_rate(const CVector& h_eff, const LinkBudget& b, double coherence_time, double overhead) {
    if (overhead >= coherence_time) {
        warn("overhead exceeds coherence time, effective rate is zero");
        return 0.0;
    }
    return (coherence_time - overhead) / coherence_time * data_rate(h_eff, b);
}

struct Selection {
    int index = 1;  // 1-based
    std::vector<double> rates;
};

/// Steps 1-2: rate of every codeword, argmax with ties to the lowest index.
inline Selection sound_and_select(const std::vector<Codeword>& codebook, const ChannelState& state,
                                  const CircuitProfile& profile, const LinkBudget& budget) {
    if (codebook.empty())
        throw ConfigError("codebook is empty");
    Selection sel;
    sel.rates.reserve(codebook.size());
    double best = -1.0;
    for (std::size_t m = 0; m < codebook.size(); ++m) {
        const double r = data_rate(effective_channel(state, codebook[m], profile), budget);
        sel.rates.push_back(r);
        if (r > best) {
            best = r;
            sel.index = static_cast<int>(m) + 1;
        }
    }
    return sel;
}

/// Steps 1-3 of one coherence block.
inline BlockResult run_block(const std::vector<Codeword>& codebook, const ChannelState& state,
                             const CircuitProfile& profile, const LinkBudget& budget, const Timings& timings,
                             Scheme scheme, long direction_size = 1) {
    Selection sel = sound_and_select(codebook, state, profile, budget);
    const long m = static_cast<long>(codebook.size());
    BlockResult out;
    out.selected_index = sel.index;
    out.rate = sel.rates[static_cast<std::size_t>(sel.index - 1)];
    out.feedback_bits = feedback_bits(scheme, m, direction_size);
    const bool final_needed = sel.index != m;
    out.time_overhead = time_overhead(scheme, m, direction_size, timings, budget.bandwidth, final_needed);
    out.effective_rate = (timings.coherence_time - out.time_overhead) / timings.coherence_time * out.rate;
    out.rates = std::move(sel.rates);
    return out;
}

}  // namespace irsfb
