// dtwin: scenario generation, training and evaluation of the protocol-
// switching controllers.

#include <dtwin/harness.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::vector<std::string> controllers;
    std::optional<int> episodes;
    bool freeze = false;
};

dtwin::ExperimentConfig resolve(const Overrides& o) {
    dtwin::ExperimentConfig cfg = o.config.empty() ? dtwin::ExperimentConfig{} : dtwin::load_config(o.config);
    if (o.seed) cfg.master_seed = *o.seed;
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (o.episodes) cfg.episodes = *o.episodes;
    if (o.freeze) cfg.freeze_qtable = true;
    if (!o.controllers.empty()) {
        cfg.controllers.clear();
        for (const auto& c : o.controllers) cfg.controllers.push_back(dtwin::controller_from_string(c));
    }
    cfg.validate();
    return cfg;
}

void print_summary(const dtwin::EvaluationReport& r) {
    std::map<std::string, std::pair<double, int>> by;
    for (const auto& row : r.rows) {
        auto& [sum, n] = by[std::string(dtwin::to_string(row.controller))];
        sum += row.mean_latency;
        ++n;
    }
    for (const auto& [name, acc] : by) {
        std::cout << name << ": mean latency " << acc.first / acc.second << " s over " << acc.second << " scenarios\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Digital-twin driven consensus protocol switching"};
    app.require_subcommand(1);

    Overrides o;
    app.add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "Master seed");
    app.add_option("--out-dir", o.out_dir, "Output directory");
    app.add_option("--controllers", o.controllers,
                   "Controllers: pbft-static bigfoot-static agent agent+ sim-only")
        ->delimiter(',');
    app.add_option("--episodes", o.episodes, "Training episodes");
    app.add_flag("--freeze-qtable", o.freeze, "Disable Q updates during evaluation");

    auto* gen = app.add_subcommand("gen-scenario", "Write one workload scenario to a file");
    std::string workload = "WL1";
    std::size_t index = 0;
    std::optional<std::string> scenario_out;
    gen->add_option("--workload", workload, "WL1 or WL2")->check(CLI::IsMember({"WL1", "WL2"}));
    gen->add_option("--index", index, "Scenario index within the workload");
    gen->add_option("--scenario-out", scenario_out, "Output path");

    auto* train = app.add_subcommand("train", "Train the Q-table offline on WL1");

    auto* eval = app.add_subcommand("evaluate", "Run controllers on the evaluation workload");
    std::optional<std::string> scenario_in;
    eval->add_option("--scenario-in", scenario_in, "Evaluate a single scenario file instead");

    auto* runtime = app.add_subcommand("compare-runtime", "Decision cost of agent+ against sim-only");

    CLI11_PARSE(app, argc, argv);

    try {
        const dtwin::ExperimentConfig cfg = resolve(o);
        if (gen->parsed()) {
            const auto label = workload == "WL1" ? dtwin::WorkloadLabel::WL1 : dtwin::WorkloadLabel::WL2;
            std::optional<std::filesystem::path> out;
            if (scenario_out) out = *scenario_out;
            std::cout << dtwin::cmd_gen_scenario(cfg, label, index, out).string() << '\n';
        } else if (train->parsed()) {
            const auto r = dtwin::cmd_train(cfg);
            std::cout << "trained " << r.episode_latency.size() << " episodes, " << r.table.size() << " states\n";
        } else if (eval->parsed()) {
            std::optional<std::filesystem::path> in;
            if (scenario_in) in = *scenario_in;
            print_summary(dtwin::cmd_evaluate(cfg, in));
        } else if (runtime->parsed()) {
            const auto r = dtwin::cmd_compare_runtime(cfg);
            for (const auto& row : r.rows) {
                std::cout << dtwin::to_string(row.controller) << " scenario " << row.scenario << ": "
                          << row.simulator_calls << " simulator calls, " << row.decision_wall_ns << " ns\n";
            }
        }
    } catch (const dtwin::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const dtwin::MissingArtifact& e) {
        std::cerr << "missing artifact: " << e.what() << '\n';
        return kExitMissing;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
