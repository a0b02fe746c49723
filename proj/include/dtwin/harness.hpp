#pragma once

// Experiment orchestration behind the `dtwin` CLI. Each command is a pure
// function of ExperimentConfig apart from the wall-clock timing files.

#include <dtwin/closed_loop.hpp>
#include <dtwin/json_io.hpp>
#include <dtwin/optimizer.hpp>
#include <dtwin/scenario.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dtwin {

/// Bad or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A required input file is absent (CLI exit code 3).
struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ControllerKind : std::uint8_t { PbftStatic, BigFootStatic, Agent, AgentPlus, SimOnly };

std::string_view to_string(ControllerKind k);
ControllerKind controller_from_string(std::string_view s);  // throws ConfigError
inline constexpr std::array kAllControllers{ControllerKind::PbftStatic, ControllerKind::BigFootStatic,
                                            ControllerKind::Agent, ControllerKind::AgentPlus,
                                            ControllerKind::SimOnly};

struct ExperimentConfig {
    std::uint64_t master_seed = 42;
    ScenarioParams wl1 = default_wl1_params();
    ScenarioParams wl2 = default_wl2_params();
    /// Optional scenario files replacing the generated workload.
    std::vector<std::string> wl1_files;
    std::vector<std::string> wl2_files;
    std::size_t scenarios_per_workload = 10;
    AgentConfig agent;
    ChainConfig chain;  // nodes/producers are taken from the workload params
    double twin_smoothing = 0.5;
    int episodes = 200;
    std::string eval_workload = "WL2";
    std::vector<ControllerKind> controllers{kAllControllers.begin(), kAllControllers.end()};
    bool freeze_qtable = false;
    std::string qtable;  // defaults to <out_dir>/qtable.txt
    bool trace = false;  // also write block/consensus/twin traces for the first scenario
    std::filesystem::path out_dir = "out";

    void validate() const;  // throws ConfigError
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);

Workload load_workload(const ExperimentConfig& cfg, WorkloadLabel label);
ChainConfig chain_for(const ExperimentConfig& cfg, const ScenarioParams& params);
TwinConfig twin_for(const ExperimentConfig& cfg, const ScenarioParams& params);

struct ResultRow {
    std::string workload;
    ControllerKind controller = ControllerKind::PbftStatic;
    std::size_t scenario = 0;
    std::uint64_t seed = 0;
    double mean_latency = 0.0;
    std::size_t committed_txs = 0;
    std::int64_t simulator_calls = 0;
    std::int64_t decision_wall_ns = 0;
    std::size_t decisions = 0;
};

struct EvaluationReport {
    std::vector<ResultRow> rows;  // sorted by (controller, scenario)
    /// Per row, in the same order.
    std::vector<std::vector<DecisionRecord>> decisions;
};

/// Runs one controller on one scenario starting from `table` (copied).
EpisodeResult run_controller(const ExperimentConfig& cfg, ControllerKind kind, const Scenario& scenario,
                             const QTable& table, bool keep_blocks = false);

EvaluationReport evaluate(const ExperimentConfig& cfg, const Workload& workload, const QTable& table);

/// Writes the scenario for (workload, index) and returns its path.
std::filesystem::path cmd_gen_scenario(const ExperimentConfig& cfg, WorkloadLabel label, std::size_t index,
                                       const std::optional<std::filesystem::path>& out = std::nullopt);
TrainResult cmd_train(const ExperimentConfig& cfg);
EvaluationReport cmd_evaluate(const ExperimentConfig& cfg,
                              const std::optional<std::filesystem::path>& scenario_in = std::nullopt);
EvaluationReport cmd_compare_runtime(const ExperimentConfig& cfg);

QTable load_qtable(const ExperimentConfig& cfg);  // throws MissingArtifact

// CSV writers; all but the timing file are deterministic.
void write_learning_curve(const std::filesystem::path& path, const TrainResult& r);
void write_results(const std::filesystem::path& path, const EvaluationReport& r);
void write_timing(const std::filesystem::path& path, const EvaluationReport& r);
void write_decisions(const std::filesystem::path& path, const EvaluationReport& r);
void write_runtime(const std::filesystem::path& path, const EvaluationReport& r);
void write_block_trace(const std::filesystem::path& path, std::span<const Block> ledger,
                       std::span<const MissedCycle> missed);
void write_consensus_trace(const std::filesystem::path& path, std::span<const Block> ledger);
void write_twin_trace(const std::filesystem::path& path, std::span<const TwinState> states);

}  // namespace dtwin
