#pragma once

// Sensing half of the feedback loop: committed blocks and their consensus
// histories in, estimated (F, N_L, N_H) state and a calibrated what-if model
// out.

#include <dtwin/blockchain.hpp>
#include <dtwin/network.hpp>
#include <dtwin/scenario.hpp>

#include <compare>
#include <optional>
#include <span>
#include <vector>

namespace dtwin {

/// Discrete RL state (F, N_L, N_H).
struct StateKey {
    bool failure = false;
    int n_low = 0;
    int n_high = 0;
    constexpr auto operator<=>(const StateKey&) const = default;
};

struct TwinState {
    bool failure = false;
    int n_low = 0;
    int n_high = 0;
    double tps_estimate = 0.0;
    SimTime as_of;

    // Smoothed continuous estimates behind the rounded bounds.
    double low_mbps = 0.0;
    double high_mbps = 0.0;
    std::int64_t windows = 0;  // windows observed so far

    [[nodiscard]] StateKey key() const { return {failure, n_low, n_high}; }
    bool operator==(const TwinState&) const = default;
};

struct ObservationBatch {
    std::vector<Block> blocks;
    std::vector<MissedCycle> missed;
    SimTime from;
    SimTime to;
    /// Broadcast transactions still uncommitted at `to`.
    std::vector<Transaction> pending;
};

struct TwinConfig {
    int producers = 5;
    double smoothing = 0.5;  // weight of the newest window (1 = memoryless)
    Duration propagation = kDefaultPropagation;
};

/// F = 1 when the window is empty, when any round lacks some producer, or
/// when a slot was lost to an offline producer or a failed round.
bool detect_failures(const ObservationBatch& batch, int producers);

/// Raw (unrounded) min/max link speed estimates from the block transfers in
/// the window, nullopt if there are none. Each pre-prepare gives a lower bound
/// 8*size/(delay - propagation) on its link; the tightest per link is used.
std::optional<std::pair<double, double>> raw_network_bounds(const ObservationBatch& batch, Duration propagation);

/// Smoothed and rounded (N_L, N_H); carries `previous` forward when the
/// window has no usable messages.
SpeedBounds infer_network_bounds(const ObservationBatch& batch, const TwinState& previous, const TwinConfig& cfg);

double estimate_tps(const ObservationBatch& batch, const TwinState& previous, const TwinConfig& cfg);

TwinState twin_state(const ObservationBatch& batch, const TwinState& previous, const TwinConfig& cfg);

/// Producers absent from at least one round in the window.
std::vector<NodeId> absent_producers(const ObservationBatch& batch, int producers);

/// Per-window digest kept by the twin for calibration.
struct WindowSummary {
    SimTime from;
    SimTime to;
    std::optional<std::pair<double, double>> raw_bounds;
    std::size_t tx_count = 0;
    std::optional<SizeSpec> tx_sizes;  // observed min/max
    std::vector<NodeId> absent;
    bool failure = false;
};

WindowSummary summarize(const ObservationBatch& batch, const TwinConfig& cfg);

/// What-if model of the physical system derived from the observations.
struct SimulatorModel {
    bool cold_start = true;
    double speed_low = 0.0;   // Mbps
    double speed_high = 0.0;  // Mbps
    double tps = 0.0;
    SizeSpec tx_size;
    std::vector<double> failure_frequency;  // per producer, fraction of windows absent
    std::optional<NodeId> last_failed;      // most recently absent producer
    /// Uncommitted transactions at the decision point, created_at relative
    /// to it (so <= 0).
    std::vector<Transaction> backlog;
    int nodes = 8;
    int producers = 5;
};

struct ModelDefaults {
    double speed_low = 2.0;
    double speed_high = 20.0;
    double tps = 25.0;
    SizeSpec tx_size{200, 2000};
    int nodes = 8;
    int producers = 5;
};

/// Builds a model from every observed window. With no windows the defaults
/// are returned and `cold_start` stays true.
SimulatorModel calibrate_simulator(std::span<const WindowSummary> history, const ModelDefaults& defaults,
                                   const TwinConfig& cfg);

/// One-TS what-if scenario for state `s` under `model`: links uniform within
/// the state's speed bounds and, when F = 1, the most likely failed producer
/// down for the whole horizon.
Scenario what_if_scenario(const SimulatorModel& model, const TwinState& s, Duration horizon, std::uint64_t seed);

/// Stateful twin: owns the smoothed state and the observation history.
class DigitalTwin {
public:
    explicit DigitalTwin(TwinConfig cfg, TwinState initial = {}) : cfg_(cfg), state_(initial) {}

    const TwinState& observe(ObservationBatch batch);
    [[nodiscard]] const TwinState& state() const { return state_; }
    [[nodiscard]] const std::vector<WindowSummary>& history() const { return history_; }
    /// Calibrated model carrying the latest observed backlog.
    [[nodiscard]] SimulatorModel model(const ModelDefaults& defaults) const;
    [[nodiscard]] const TwinConfig& config() const { return cfg_; }

private:
    TwinConfig cfg_;
    TwinState state_;
    std::vector<WindowSummary> history_;
    std::vector<Transaction> backlog_;
};

}  // namespace dtwin
