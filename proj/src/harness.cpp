#include <dtwin/harness.hpp>

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>

namespace dtwin {

using nlohmann::json;

namespace fs = std::filesystem;

std::string_view to_string(ControllerKind k) {
    switch (k) {
        case ControllerKind::PbftStatic: return "pbft-static";
        case ControllerKind::BigFootStatic: return "bigfoot-static";
        case ControllerKind::Agent: return "agent";
        case ControllerKind::AgentPlus: return "agent+";
        case ControllerKind::SimOnly: return "sim-only";
    }
    return "?";
}

ControllerKind controller_from_string(std::string_view s) {
    for (ControllerKind k : kAllControllers) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("unknown controller '" + std::string(s) + "'");
}

// --- config --------------------------------------------------------------

void ExperimentConfig::validate() const {
    try {
        wl1.validate();
        wl2.validate();
        agent.validate();
        chain.consensus.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (scenarios_per_workload == 0) throw ConfigError("scenarios_per_workload must be positive");
    if (episodes < 1) throw ConfigError("episodes must be at least 1");
    if (!(twin_smoothing > 0 && twin_smoothing <= 1)) throw ConfigError("twin_smoothing must be in (0, 1]");
    if (eval_workload != "WL1" && eval_workload != "WL2") throw ConfigError("eval_workload must be WL1 or WL2");
    if (controllers.empty()) throw ConfigError("no controllers");
    if (wl1.step != wl2.step) throw ConfigError("WL1 and WL2 must share TS");
}

namespace {

json agent_to_json(const AgentConfig& a) {
    return json{{"alpha", a.alpha},
                {"gamma", a.gamma},
                {"epsilon", a.epsilon},
                {"epsilon_decay", a.epsilon_decay},
                {"epsilon_floor", a.epsilon_floor},
                {"unseen_threshold", a.unseen_threshold},
                {"whatif_replicates", a.replicates},
                {"synthetic_per_episode", a.synthetic_per_episode},
                {"no_blocks_penalty_factor", a.no_blocks_penalty_factor},
                {"learn_online", a.learn_online},
                {"model_defaults",
                 {{"speed_low_mbps", a.model.speed_low},
                  {"speed_high_mbps", a.model.speed_high},
                  {"tps", a.model.tps},
                  {"tx_size", {a.model.tx_size.min_bytes, a.model.tx_size.max_bytes}}}}};
}

AgentConfig agent_from_json(const json& j) {
    AgentConfig a;
    a.alpha = j.value("alpha", a.alpha);
    a.gamma = j.value("gamma", a.gamma);
    a.epsilon = j.value("epsilon", a.epsilon);
    a.epsilon_decay = j.value("epsilon_decay", a.epsilon_decay);
    a.epsilon_floor = j.value("epsilon_floor", a.epsilon_floor);
    a.unseen_threshold = j.value("unseen_threshold", a.unseen_threshold);
    a.replicates = j.value("whatif_replicates", a.replicates);
    a.synthetic_per_episode = j.value("synthetic_per_episode", a.synthetic_per_episode);
    a.no_blocks_penalty_factor = j.value("no_blocks_penalty_factor", a.no_blocks_penalty_factor);
    a.learn_online = j.value("learn_online", a.learn_online);
    if (j.contains("model_defaults")) {
        const json& m = j.at("model_defaults");
        a.model.speed_low = m.value("speed_low_mbps", a.model.speed_low);
        a.model.speed_high = m.value("speed_high_mbps", a.model.speed_high);
        a.model.tps = m.value("tps", a.model.tps);
        if (m.contains("tx_size")) {
            a.model.tx_size = {m.at("tx_size").at(0).get<std::int64_t>(), m.at("tx_size").at(1).get<std::int64_t>()};
        }
    }
    return a;
}

}  // namespace

json config_to_json(const ExperimentConfig& c) {
    json controllers = json::array();
    for (ControllerKind k : c.controllers) controllers.push_back(std::string(to_string(k)));
    return json{{"master_seed", c.master_seed},
                {"wl1", c.wl1},
                {"wl2", c.wl2},
                {"wl1_files", c.wl1_files},
                {"wl2_files", c.wl2_files},
                {"scenarios_per_workload", c.scenarios_per_workload},
                {"agent", agent_to_json(c.agent)},
                {"chain", c.chain},
                {"twin_smoothing", c.twin_smoothing},
                {"episodes", c.episodes},
                {"eval_workload", c.eval_workload},
                {"controllers", std::move(controllers)},
                {"freeze_qtable", c.freeze_qtable},
                {"qtable", c.qtable},
                {"trace", c.trace},
                {"out_dir", c.out_dir.string()}};
}

ExperimentConfig config_from_json(const json& j) {
    try {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        static const std::vector<std::string> known{
            "master_seed", "wl1", "wl2", "wl1_files", "wl2_files", "scenarios_per_workload", "agent", "chain",
            "twin_smoothing", "episodes", "eval_workload", "controllers", "freeze_qtable", "qtable", "trace", "out_dir"};
        for (const auto& [key, value] : j.items()) {
            if (std::ranges::find(known, key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
        }
        ExperimentConfig c;
        c.master_seed = j.value("master_seed", c.master_seed);
        if (j.contains("wl1")) j.at("wl1").get_to(c.wl1);
        if (j.contains("wl2")) j.at("wl2").get_to(c.wl2);
        c.wl1_files = j.value("wl1_files", c.wl1_files);
        c.wl2_files = j.value("wl2_files", c.wl2_files);
        c.scenarios_per_workload = j.value("scenarios_per_workload", c.scenarios_per_workload);
        if (j.contains("agent")) c.agent = agent_from_json(j.at("agent"));
        if (j.contains("chain")) j.at("chain").get_to(c.chain);
        c.twin_smoothing = j.value("twin_smoothing", c.twin_smoothing);
        c.episodes = j.value("episodes", c.episodes);
        c.eval_workload = j.value("eval_workload", c.eval_workload);
        if (j.contains("controllers")) {
            c.controllers.clear();
            for (const auto& s : j.at("controllers")) c.controllers.push_back(controller_from_string(s.get<std::string>()));
        }
        c.freeze_qtable = j.value("freeze_qtable", c.freeze_qtable);
        c.qtable = j.value("qtable", c.qtable);
        c.trace = j.value("trace", c.trace);
        c.out_dir = j.value("out_dir", c.out_dir.string());
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config " + path.string());
    try {
        return config_from_json(json::parse(is, nullptr, true, /*ignore_comments=*/true));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

// --- workloads and runs --------------------------------------------------

Workload load_workload(const ExperimentConfig& cfg, WorkloadLabel label) {
    const auto& files = label == WorkloadLabel::WL1 ? cfg.wl1_files : cfg.wl2_files;
    const auto& params = label == WorkloadLabel::WL1 ? cfg.wl1 : cfg.wl2;
    if (files.empty()) return make_workload(label, params, cfg.master_seed, cfg.scenarios_per_workload);
    Workload w;
    w.label = label;
    for (const auto& f : files) {
        if (!fs::exists(f)) throw MissingArtifact("scenario file not found: " + f);
        w.scenarios.push_back(load_scenario(f));
    }
    return w;
}

ChainConfig chain_for(const ExperimentConfig& cfg, const ScenarioParams& params) {
    ChainConfig c = cfg.chain;
    c.nodes = params.nodes;
    c.producers = params.producers;
    c.consensus.n = params.producers;
    return c;
}

TwinConfig twin_for(const ExperimentConfig& cfg, const ScenarioParams& params) {
    TwinConfig t;
    t.producers = params.producers;
    t.smoothing = cfg.twin_smoothing;
    return t;
}

EpisodeResult run_controller(const ExperimentConfig& cfg, ControllerKind kind, const Scenario& scenario,
                             const QTable& table, bool keep_blocks) {
    const ChainConfig chain = chain_for(cfg, scenario.params);
    LoopOptions loop;
    loop.twin = twin_for(cfg, scenario.params);
    loop.no_blocks_penalty_factor = cfg.agent.no_blocks_penalty_factor;
    loop.keep_blocks = keep_blocks;
    AgentConfig agent = cfg.agent;
    agent.model.nodes = scenario.params.nodes;
    agent.model.producers = scenario.params.producers;
    const bool learn = agent.learn_online && !cfg.freeze_qtable;
    const std::uint64_t rng_seed = detail::splitmix64(scenario.seed ^ detail::fnv1a("controller"));

    switch (kind) {
        case ControllerKind::PbftStatic:
        case ControllerKind::BigFootStatic: {
            StaticController c(kind == ControllerKind::PbftStatic ? Protocol::Pbft : Protocol::BigFoot);
            return run_episode(scenario, chain, c, loop);
        }
        case ControllerKind::Agent:
        case ControllerKind::AgentPlus: {
            QTable local = table;
            QAgentController c(local, agent, chain, scenario.params.step, 0.0, learn, kind == ControllerKind::AgentPlus,
                               rng_seed);
            return run_episode(scenario, chain, c, loop);
        }
        case ControllerKind::SimOnly: {
            SimOnlyController c(agent, chain, scenario.params.step);
            return run_episode(scenario, chain, c, loop);
        }
    }
    throw std::logic_error("unreachable controller kind");
}

EvaluationReport evaluate(const ExperimentConfig& cfg, const Workload& workload, const QTable& table) {
    EvaluationReport report;
    for (ControllerKind kind : cfg.controllers) {
        for (std::size_t i = 0; i < workload.scenarios.size(); ++i) {
            const Scenario& sc = workload.scenarios[i];
            EpisodeResult run = run_controller(cfg, kind, sc, table);
            ResultRow row;
            row.workload = std::string(to_string(workload.label));
            row.controller = kind;
            row.scenario = i;
            row.seed = sc.seed;
            row.mean_latency = run.mean_latency;
            row.committed_txs = run.committed_txs;
            row.simulator_calls = run.simulator_calls;
            row.decision_wall_ns = run.decision_wall_ns;
            row.decisions = run.decisions.size();
            report.rows.push_back(row);
            report.decisions.push_back(std::move(run.decisions));
        }
    }
    return report;
}

QTable load_qtable(const ExperimentConfig& cfg) {
    const fs::path p = cfg.qtable.empty() ? cfg.out_dir / "qtable.txt" : fs::path(cfg.qtable);
    if (!fs::exists(p)) throw MissingArtifact("q-table not found: " + p.string() + " (run `dtwin train` first)");
    return QTable::load(p.string());
}

namespace {

bool needs_table(const ExperimentConfig& cfg) {
    return std::ranges::any_of(cfg.controllers,
                               [](ControllerKind k) { return k == ControllerKind::Agent || k == ControllerKind::AgentPlus; });
}

WorkloadLabel eval_label(const ExperimentConfig& cfg) {
    return cfg.eval_workload == "WL1" ? WorkloadLabel::WL1 : WorkloadLabel::WL2;
}

void write_traces(const ExperimentConfig& cfg, const Workload& w, const QTable& table) {
    for (ControllerKind kind : cfg.controllers) {
        const EpisodeResult run = run_controller(cfg, kind, w.scenarios.front(), table, true);
        const std::string stem = std::string(to_string(kind));
        write_block_trace(cfg.out_dir / ("blocks_" + stem + ".csv"), run.ledger, run.missed);
        write_consensus_trace(cfg.out_dir / ("consensus_" + stem + ".csv"), run.ledger);
        write_twin_trace(cfg.out_dir / ("twin_" + stem + ".csv"), run.twin_states);
    }
}

}  // namespace

fs::path cmd_gen_scenario(const ExperimentConfig& cfg, WorkloadLabel label, std::size_t index,
                          const std::optional<fs::path>& out) {
    const auto& params = label == WorkloadLabel::WL1 ? cfg.wl1 : cfg.wl2;
    const Scenario s = generate_scenario(params, workload_seed(label, cfg.master_seed, index));
    const fs::path p = out ? *out : cfg.out_dir / ("scenario_" + std::string(to_string(label)) + "_" +
                                                  std::to_string(index) + ".json");
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    save_scenario(p.string(), s);
    return p;
}

TrainResult cmd_train(const ExperimentConfig& cfg) {
    cfg.validate();
    const Workload wl1 = load_workload(cfg, WorkloadLabel::WL1);
    const ScenarioParams& params = wl1.scenarios.front().params;
    AgentConfig agent = cfg.agent;
    agent.model.nodes = params.nodes;
    agent.model.producers = params.producers;
    TrainResult r = train_offline(wl1, cfg.wl1, chain_for(cfg, params), cfg.episodes, agent,
                                  detail::splitmix64(cfg.master_seed ^ detail::fnv1a("train")), twin_for(cfg, params));
    fs::create_directories(cfg.out_dir);
    r.table.save((cfg.qtable.empty() ? cfg.out_dir / "qtable.txt" : fs::path(cfg.qtable)).string());
    write_learning_curve(cfg.out_dir / "learning_curve.csv", r);
    return r;
}

EvaluationReport cmd_evaluate(const ExperimentConfig& cfg, const std::optional<fs::path>& scenario_in) {
    cfg.validate();
    const QTable table = needs_table(cfg) ? load_qtable(cfg) : QTable{};
    Workload w;
    if (scenario_in) {
        if (!fs::exists(*scenario_in)) throw MissingArtifact("scenario file not found: " + scenario_in->string());
        w.label = WorkloadLabel::Custom;
        w.scenarios.push_back(load_scenario(scenario_in->string()));
    } else {
        w = load_workload(cfg, eval_label(cfg));
    }
    EvaluationReport report = evaluate(cfg, w, table);
    fs::create_directories(cfg.out_dir);
    write_results(cfg.out_dir / "results.csv", report);
    write_decisions(cfg.out_dir / "decisions.csv", report);
    write_timing(cfg.out_dir / "timing.csv", report);
    if (cfg.trace) write_traces(cfg, w, table);
    return report;
}

EvaluationReport cmd_compare_runtime(const ExperimentConfig& cfg) {
    ExperimentConfig c = cfg;
    c.controllers = {ControllerKind::AgentPlus, ControllerKind::SimOnly};
    c.validate();
    const QTable table = load_qtable(c);
    EvaluationReport report = evaluate(c, load_workload(c, eval_label(c)), table);
    fs::create_directories(c.out_dir);
    write_runtime(c.out_dir / "runtime.csv", report);
    return report;
}

// --- CSV -------------------------------------------------------------------

namespace {

std::ofstream open_csv(const fs::path& path, const char* header) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << header << '\n';
    return os;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

void write_learning_curve(const fs::path& path, const TrainResult& r) {
    auto os = open_csv(path, "episode,epsilon,mean_latency_s");
    for (std::size_t e = 0; e < r.episode_latency.size(); ++e) {
        os << e << ',' << fmt(r.episode_epsilon[e]) << ',' << fmt(r.episode_latency[e]) << '\n';
    }
}

void write_results(const fs::path& path, const EvaluationReport& r) {
    auto os = open_csv(path, "workload,controller,scenario,seed,mean_latency_s,committed_txs,simulator_calls,decisions");
    for (const ResultRow& row : r.rows) {
        os << row.workload << ',' << to_string(row.controller) << ',' << row.scenario << ',' << row.seed << ','
           << fmt(row.mean_latency) << ',' << row.committed_txs << ',' << row.simulator_calls << ',' << row.decisions
           << '\n';
    }
}

void write_timing(const fs::path& path, const EvaluationReport& r) {
    auto os = open_csv(path, "workload,controller,scenario,seed,decisions,decision_wall_ns,mean_decision_wall_ns");
    for (const ResultRow& row : r.rows) {
        const double mean = row.decisions ? static_cast<double>(row.decision_wall_ns) / row.decisions : 0.0;
        os << row.workload << ',' << to_string(row.controller) << ',' << row.scenario << ',' << row.seed << ','
           << row.decisions << ',' << row.decision_wall_ns << ',' << fmt(mean) << '\n';
    }
}

void write_decisions(const fs::path& path, const EvaluationReport& r) {
    auto os = open_csv(path, "controller,scenario,window_end_ms,F,N_L,N_H,action,source,reward,simulator_calls");
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        for (const DecisionRecord& d : r.decisions[i]) {
            os << to_string(r.rows[i].controller) << ',' << r.rows[i].scenario << ',' << d.to.ms << ','
               << (d.state.failure ? 1 : 0) << ',' << d.state.n_low << ',' << d.state.n_high << ','
               << to_string(d.action) << ',' << to_string(d.source) << ',' << fmt(d.reward) << ','
               << d.simulator_calls << '\n';
        }
    }
}

void write_runtime(const fs::path& path, const EvaluationReport& r) {
    auto os = open_csv(path,
                       "workload,controller,scenario,seed,decisions,simulator_calls,decision_wall_ns,"
                       "mean_decision_wall_ns,mean_latency_s");
    for (const ResultRow& row : r.rows) {
        const double mean = row.decisions ? static_cast<double>(row.decision_wall_ns) / row.decisions : 0.0;
        os << row.workload << ',' << to_string(row.controller) << ',' << row.scenario << ',' << row.seed << ','
           << row.decisions << ',' << row.simulator_calls << ',' << row.decision_wall_ns << ',' << fmt(mean) << ','
           << fmt(row.mean_latency) << '\n';
    }
}

void write_block_trace(const fs::path& path, std::span<const Block> ledger, std::span<const MissedCycle> missed) {
    auto os = open_csv(path,
                       "slot,height,producer,protocol_used,used_fallback,proposed_at_ms,committed_at_ms,tx_count,"
                       "avg_latency_s,missed_cycle_flag,miss_reason");
    std::size_t b = 0;
    std::size_t m = 0;
    while (b < ledger.size() || m < missed.size()) {
        const bool take_block = m == missed.size() || (b < ledger.size() && ledger[b].slot <= missed[m].slot);
        if (take_block) {
            const Block& blk = ledger[b++];
            const double avg = blk.txs.empty() ? 0.0 : avg_transaction_latency(blk);
            os << blk.slot << ',' << blk.height << ',' << blk.producer.value << ',' << to_string(blk.protocol) << ','
               << (blk.used_fallback ? 1 : 0) << ',' << blk.proposed_at.ms << ',' << blk.committed_at.ms << ','
               << blk.txs.size() << ',' << fmt(avg) << ",0,\n";
        } else {
            const MissedCycle& mc = missed[m++];
            os << mc.slot << ",," << mc.producer.value << ",,," << mc.at.ms << ",,0,,1," << to_string(mc.reason)
               << '\n';
        }
    }
}

void write_consensus_trace(const fs::path& path, std::span<const Block> ledger) {
    auto os = open_csv(path, "height,phase,sender,receiver,size_bytes,sent_at_ms,received_at_ms");
    for (const Block& b : ledger) {
        for (const MessageRecord& msg : b.history.messages) {
            os << b.height << ',' << to_string(msg.phase) << ',' << msg.sender.value << ',' << msg.receiver.value << ','
               << msg.size_bytes << ',' << msg.sent_at.ms << ',' << msg.received_at.ms << '\n';
        }
    }
}

void write_twin_trace(const fs::path& path, std::span<const TwinState> states) {
    auto os = open_csv(path, "window_end_ms,F,N_L,N_H,tps_estimate");
    for (const TwinState& s : states) {
        os << s.as_of.ms << ',' << (s.failure ? 1 : 0) << ',' << s.n_low << ',' << s.n_high << ','
           << fmt(s.tps_estimate) << '\n';
    }
}

}  // namespace dtwin
