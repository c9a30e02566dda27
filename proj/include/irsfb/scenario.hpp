#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "channel.hpp"
#include "codebook.hpp"
#include "metaatom.hpp"
#include "protocol.hpp"
#include "rng.hpp"

namespace irsfb {

/// Everything physical about one simulated link: arrays, channels, surface,
/// link budget and protocol timing.
struct Scenario {
    ChannelConfig channel;
    Geometry geometry;      // ue_pos is the centre of the UE placement disc
    double ue_radius = 5.0; // meters
    CircuitProfile profile = default_profile();
    LinkBudget budget;
    Timings timings;
    CapacitanceBounds bounds;
    StepSizes steps;
    Eigen::Index n_groups = 10;

    void validate() const {
        channel.validate();
        geometry.validate();
        profile.validate();
        budget.validate();
        timings.validate();
        bounds.validate();
        steps.validate();
        require(ue_radius >= 0.0, "UE placement radius must be >= 0");
        require(n_groups >= 1 && channel.n_irs % n_groups == 0,
                "N_G = " + std::to_string(n_groups) + " must divide N_IRS = " + std::to_string(channel.n_irs));
    }
};

/// Independent random streams of one episode.
struct EpisodeStreams {
    Rng channel;
    Rng codebook;
    Rng noise;

    EpisodeStreams(std::uint64_t seed, std::string_view phase, std::uint64_t episode)
        : channel(Rng::substream(seed, std::string(phase) + "/channel", episode)),
          codebook(Rng::substream(seed, std::string(phase) + "/codebook", episode)),
          noise(Rng::substream(seed, std::string(phase) + "/noise", episode)) {}
};

/// UE placed uniformly in the disc around the configured centre, heading
/// uniform in [0, 2 pi), then a fresh channel realization.
inline ChannelState start_episode(const Scenario& sc, std::uint64_t seed, std::string_view phase,
                                  std::uint64_t episode, Rng& channel_rng) {
    Rng place = Rng::substream(seed, std::string(phase) + "/geometry", episode);
    Geometry g = sc.geometry;
    const double r = sc.ue_radius * std::sqrt(place.canonical());
    const double a = 2.0 * kPi * place.canonical();
    g.ue_pos.x += r * std::cos(a);
    g.ue_pos.y += r * std::sin(a);
    g.ue_heading = 2.0 * kPi * place.canonical();
    return sample_initial(sc.channel, g, channel_rng);
}

}  // namespace irsfb
