#pragma once

// Randomised system instances: per-interval workload, link speeds and
// producer outages, plus the WL1/WL2 workload presets and a text format
// that reloads a scenario bit-exactly.

#include <dtwin/blockchain.hpp>
#include <dtwin/network.hpp>
#include <dtwin/system.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace dtwin {

template <typename T>
struct Range {
    T lo{};
    T hi{};
    constexpr bool operator==(const Range&) const = default;
};

struct ScenarioParams {
    Range<double> tps{5.0, 50.0};
    Range<std::int64_t> tx_size{200, 2000};           // bytes
    double outage_prob = 0.05;                         // per producer per TI interval
    Range<std::int64_t> outage_duration{2000, 10000};  // ms, rounded up to whole intervals
    Range<double> speed{2.0, 20.0};                    // Mbps
    Duration horizon{3600 * 1000};
    Duration interval{30 * 1000};  // TI
    Duration step{10 * 1000};      // TS
    int nodes = 8;                 // K
    int producers = 5;             // M

    /// Throws std::invalid_argument on inconsistent values.
    void validate() const;
    [[nodiscard]] std::size_t interval_count() const {
        return static_cast<std::size_t>(horizon.count() / interval.count());
    }
    bool operator==(const ScenarioParams&) const = default;
};

ScenarioParams default_wl1_params();
ScenarioParams default_wl2_params();

struct Scenario {
    ScenarioParams params;
    std::uint64_t seed = 0;
    NetworkSchedule network;
    FailureSchedule failures;
    std::vector<double> tps_trace;       // per interval
    std::vector<SizeSpec> size_trace;    // per interval

    /// Transaction arrivals for the whole horizon (stream "workload").
    [[nodiscard]] std::vector<Transaction> transactions() const;
    [[nodiscard]] NetworkModel network_model(Duration propagation = kDefaultPropagation) const;
};

/// Each TI interval draws, independently: a speed band inside the speed range
/// and per-link speeds within that band, an arrival rate, a transaction size
/// band, and for every producer not already down an outage start (at the
/// interval boundary) with the configured probability.
Scenario generate_scenario(const ScenarioParams& params, std::uint64_t seed);

enum class WorkloadLabel : std::uint8_t { WL1, WL2, Custom };

std::string_view to_string(WorkloadLabel w);

struct Workload {
    WorkloadLabel label = WorkloadLabel::Custom;
    std::vector<Scenario> scenarios;
};

/// `count` scenarios with seeds derived from (master_seed, label).
Workload make_workload(WorkloadLabel label, const ScenarioParams& params, std::uint64_t master_seed,
                       std::size_t count);
std::uint64_t workload_seed(WorkloadLabel label, std::uint64_t master_seed, std::size_t index);

/// Default chain configuration matching a scenario's K and M.
ChainConfig chain_config_for(const ScenarioParams& params);

/// JSON scenario file; doubles are written in shortest round-trip form so a
/// reloaded scenario is bit-identical.
void write_scenario(std::ostream& os, const Scenario& s);
Scenario read_scenario(std::istream& is);
void save_scenario(const std::string& path, const Scenario& s);
Scenario load_scenario(const std::string& path);

}  // namespace dtwin
