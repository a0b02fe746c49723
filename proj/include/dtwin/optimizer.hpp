#pragma once

// Decision half of the feedback loop: a tabular Q-learner over the twin's
// (F, N_L, N_H) state, with twin-simulated what-if evaluation for states the
// table has not seen.

#include <dtwin/closed_loop.hpp>
#include <dtwin/scenario.hpp>
#include <dtwin/twin.hpp>

#include <array>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace dtwin {

struct QEntry {
    double q = 0.0;
    std::int64_t visits = 0;
    bool operator==(const QEntry&) const = default;
};

class QTable {
public:
    using Row = std::array<QEntry, 2>;

    [[nodiscard]] const QEntry& at(const StateKey& s, Protocol a) const;
    QEntry& entry(const StateKey& s, Protocol a);
    [[nodiscard]] double q(const StateKey& s, Protocol a) const { return at(s, a).q; }
    [[nodiscard]] double max_q(const StateKey& s) const;
    /// Total visits of a state over both actions.
    [[nodiscard]] std::int64_t visits(const StateKey& s) const;
    [[nodiscard]] std::size_t size() const { return rows_.size(); }
    [[nodiscard]] const std::map<StateKey, Row>& rows() const { return rows_; }

    /// Text dump: one "F N_L N_H action q visits" line per entry.
    void save(std::ostream& os) const;
    static QTable load(std::istream& is);
    void save(const std::string& path) const;
    static QTable load(const std::string& path);

    bool operator==(const QTable&) const = default;

private:
    std::map<StateKey, Row> rows_;
};

struct AgentConfig {
    double alpha = 0.1;
    double gamma = 0.9;
    double epsilon = 0.1;
    double epsilon_decay = 0.995;  // per training episode
    double epsilon_floor = 0.01;
    std::int64_t unseen_threshold = 1;  // visits below this trigger what-if
    int replicates = 3;                 // what-if seeds per action
    int synthetic_per_episode = 5;
    double no_blocks_penalty_factor = 10.0;
    bool learn_online = true;  // keep updating Q during evaluation
    ModelDefaults model;

    void validate() const;
};

/// Q(s,a) <- Q(s,a) + alpha (r + gamma max_b Q(s',b) - Q(s,a)). Throws on a
/// non-finite reward.
void q_update(QTable& table, const StateKey& s, Protocol a, double reward, const StateKey& next, double alpha,
              double gamma);

/// Epsilon-greedy; greedy ties go to PBFT.
Decision select_action(const QTable& table, const StateKey& s, double epsilon, RngStream& rng);

struct WhatIfResult {
    std::array<double, 2> latency{};  // mean simulated latency (s) per action
    int simulator_calls = 0;
    [[nodiscard]] Protocol best() const { return latency[1] < latency[0] ? Protocol::BigFoot : Protocol::Pbft; }
};

/// Simulates both protocols for one TS on `replicates` what-if scenarios and
/// averages each protocol's latency. Both protocols see the same scenarios.
WhatIfResult what_if_evaluate(const SimulatorModel& model, const TwinState& s, const ChainConfig& chain,
                              Duration step, std::uint64_t seed, const AgentConfig& cfg);

/// Writes simulated rewards into the table as a stationary Bellman target.
void augment(QTable& table, const StateKey& s, const WhatIfResult& result, const AgentConfig& cfg);

/// Seed for the what-if scenarios of one decision.
std::uint64_t what_if_seed(std::uint64_t scenario_seed, std::size_t window);

Decision agent_plus_decide(QTable& table, const TwinState& s, const SimulatorModel& model, const ChainConfig& chain,
                           Duration step, std::uint64_t seed, double epsilon, RngStream& rng, const AgentConfig& cfg);

Decision simulation_only_decide(const TwinState& s, const SimulatorModel& model, const ChainConfig& chain,
                                Duration step, std::uint64_t seed, const AgentConfig& cfg);

/// Q-learning agent; with `use_twin` it falls back to what-if simulation for
/// unseen states and writes the results back into its table.
class QAgentController final : public Controller {
public:
    QAgentController(QTable& table, const AgentConfig& cfg, const ChainConfig& chain, Duration step, double epsilon,
                     bool learn, bool use_twin, std::uint64_t rng_seed);
    Decision decide(const TwinState& state, const DecisionContext& ctx) override;
    void learn(const TwinState& state, Protocol action, double reward, const TwinState& next) override;

private:
    QTable& table_;
    AgentConfig cfg_;
    ChainConfig chain_;
    Duration step_;
    double epsilon_;
    bool learn_;
    bool use_twin_;
    RngStream rng_;
};

/// Picks the action with the best what-if latency every window.
class SimOnlyController final : public Controller {
public:
    SimOnlyController(const AgentConfig& cfg, const ChainConfig& chain, Duration step)
        : cfg_(cfg), chain_(chain), step_(step) {}
    Decision decide(const TwinState& state, const DecisionContext& ctx) override;

private:
    AgentConfig cfg_;
    ChainConfig chain_;
    Duration step_;
};

struct TrainResult {
    QTable table;
    std::vector<double> episode_latency;  // mean latency (s) per episode
    std::vector<double> episode_epsilon;
};

/// Offline training on a workload: episode e replays scenario e mod |W| with
/// epsilon decayed per episode, followed by `synthetic_per_episode` what-if
/// injections on random states drawn from `synthetic_params`.
TrainResult train_offline(const Workload& workload, const ScenarioParams& synthetic_params, const ChainConfig& chain,
                          int episodes, const AgentConfig& cfg, std::uint64_t seed, const TwinConfig& twin = {},
                          QTable initial = {});

}  // namespace dtwin
