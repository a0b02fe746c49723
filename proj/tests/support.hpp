#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <dtwin/closed_loop.hpp>
#include <dtwin/scenario.hpp>

#include <optional>

namespace dtwin::testing {

/// A scenario whose link speeds, load and outages never change. Link speeds
/// are whole Mbps in [lo, hi] with both ends present between producers 2 and
/// 3, and blocks are large enough (2 kB transactions at 60 tps) that every
/// block transfer lasts at least 2*hi ms, so the per-link speed inferred from
/// one block is within 0.5 Mbps of the truth. `offline` is down throughout.
inline Scenario constant_scenario(std::uint64_t seed, int lo, int hi, std::optional<int> offline = std::nullopt,
                                  Duration horizon = Duration{120000}) {
    Scenario s;
    s.seed = seed;
    s.params.horizon = horizon;
    s.params.interval = horizon;
    s.params.step = Duration{10000};
    s.params.tps = {60.0, 60.0};
    s.params.tx_size = {2000, 2000};
    s.params.speed = {static_cast<double>(lo), static_cast<double>(hi)};
    s.params.outage_prob = 0.0;

    const int k = s.params.nodes;
    RngStream rng(seed, "constant-scenario");
    SpeedMatrix m = SpeedMatrix::Zero(k, k);
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b)
            if (a != b) m(a, b) = static_cast<double>(rng.uniform_int(lo, hi));
    m(2, 3) = lo;
    m(3, 2) = hi;
    s.network = NetworkSchedule(horizon, {m});

    std::vector<Outage> outages;
    if (offline) outages.push_back({NodeId{*offline}, SimTime{}, at_ms(horizon.count())});
    s.failures = FailureSchedule(k, std::move(outages));
    s.tps_trace = {60.0};
    s.size_trace = {SizeSpec::fixed(2000)};
    return s;
}

}  // namespace dtwin::testing
