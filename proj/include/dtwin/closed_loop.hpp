#pragma once

// One feedback-loop run: every TS the twin state goes to a controller, the
// chosen protocol drives the physical chain for the next window, and the
// window's latency comes back as the reward.

#include <dtwin/scenario.hpp>
#include <dtwin/system.hpp>
#include <dtwin/twin.hpp>

#include <cstdint>
#include <string_view>
#include <vector>

namespace dtwin {

enum class DecisionSource : std::uint8_t { QGreedy, QExplore, WhatIfFallback, WhatIf, Static };

std::string_view to_string(DecisionSource s);

struct Decision {
    Protocol action = Protocol::Pbft;
    DecisionSource source = DecisionSource::Static;
    int simulator_calls = 0;
};

struct DecisionRecord {
    SimTime from;
    SimTime to;
    TwinState state;
    Protocol action = Protocol::Pbft;
    double reward = 0.0;
    DecisionSource source = DecisionSource::Static;
    int simulator_calls = 0;
    std::int64_t decision_wall_ns = 0;
};

struct DecisionContext {
    const DigitalTwin& twin;
    std::size_t window = 0;
    SimTime from;
    SimTime to;
    std::uint64_t scenario_seed = 0;
};

class Controller {
public:
    virtual ~Controller() = default;
    virtual Decision decide(const TwinState& state, const DecisionContext& ctx) = 0;
    /// Called after each window with the realised reward.
    virtual void learn(const TwinState& /*state*/, Protocol /*action*/, double /*reward*/, const TwinState& /*next*/) {}
};

class StaticController final : public Controller {
public:
    explicit StaticController(Protocol p) : protocol_(p) {}
    Decision decide(const TwinState&, const DecisionContext&) override { return {protocol_, DecisionSource::Static, 0}; }

private:
    Protocol protocol_;
};

struct LoopOptions {
    TwinConfig twin;
    /// Reward used for windows that commit no block, as a multiple of TS in
    /// seconds (negated).
    double no_blocks_penalty_factor = 10.0;
    bool keep_blocks = false;  // retain the ledger in the result
};

struct EpisodeResult {
    /// Transaction-weighted mean latency (s) over every committed block;
    /// NaN when nothing committed.
    double mean_latency = 0.0;
    std::size_t committed_txs = 0;
    std::vector<DecisionRecord> decisions;
    std::vector<TwinState> twin_states;  // after each window
    std::int64_t simulator_calls = 0;
    std::int64_t decision_wall_ns = 0;
    std::vector<Block> ledger;  // only with keep_blocks
    std::vector<MissedCycle> missed;
};

/// Windows of length TS over the scenario horizon.
EpisodeResult run_episode(const Scenario& scenario, const ChainConfig& chain, Controller& controller,
                          const LoopOptions& options = {});

/// Fixed-protocol run of a scenario for `until`; the latency of blocks
/// committed in [0, until), nullopt if none. `backlog` transactions
/// (created_at <= 0) start out in every pool.
std::optional<double> simulate_fixed(const Scenario& scenario, const ChainConfig& chain, Protocol protocol,
                                     SimTime until, std::span<const Transaction> backlog = {});

/// Mean latency (s) of every committed block in a ledger, NaN if empty.
double ledger_latency(std::span<const Block> ledger, std::size_t* tx_count = nullptr);

}  // namespace dtwin
