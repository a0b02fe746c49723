#include <dtwin/optimizer.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace dtwin {

namespace {

constexpr std::size_t index_of(Protocol a) { return a == Protocol::Pbft ? 0 : 1; }

const QTable::Row kEmptyRow{};

}  // namespace

const QEntry& QTable::at(const StateKey& s, Protocol a) const {
    const auto it = rows_.find(s);
    return it == rows_.end() ? kEmptyRow[index_of(a)] : it->second[index_of(a)];
}

QEntry& QTable::entry(const StateKey& s, Protocol a) { return rows_[s][index_of(a)]; }

double QTable::max_q(const StateKey& s) const { return std::max(q(s, Protocol::Pbft), q(s, Protocol::BigFoot)); }

std::int64_t QTable::visits(const StateKey& s) const {
    return at(s, Protocol::Pbft).visits + at(s, Protocol::BigFoot).visits;
}

void QTable::save(std::ostream& os) const {
    os << "# F N_L N_H action q visits\n";
    os << std::setprecision(17);
    for (const auto& [s, row] : rows_) {
        for (Protocol a : kProtocols) {
            const QEntry& e = row[index_of(a)];
            os << (s.failure ? 1 : 0) << ' ' << s.n_low << ' ' << s.n_high << ' ' << to_string(a) << ' ' << e.q << ' '
               << e.visits << '\n';
        }
    }
}

QTable QTable::load(std::istream& is) {
    QTable t;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int f = 0;
        StateKey s;
        std::string action;
        QEntry e;
        if (!(ls >> f >> s.n_low >> s.n_high >> action >> e.q >> e.visits) || (f != 0 && f != 1)) {
            throw std::runtime_error("malformed q-table line " + std::to_string(lineno));
        }
        s.failure = f == 1;
        t.entry(s, protocol_from_string(action)) = e;
    }
    return t;
}

void QTable::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    save(os);
}

QTable QTable::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return load(is);
}

void AgentConfig::validate() const {
    auto bad = [](const char* what) { throw std::invalid_argument(std::string("invalid agent config: ") + what); };
    if (!(alpha > 0 && alpha <= 1)) bad("alpha");
    if (!(gamma >= 0 && gamma < 1)) bad("gamma");
    if (!(epsilon >= 0 && epsilon <= 1) || !(epsilon_floor >= 0 && epsilon_floor <= 1)) bad("epsilon");
    if (!(epsilon_decay > 0 && epsilon_decay <= 1)) bad("epsilon decay");
    if (unseen_threshold < 0 || replicates < 1 || synthetic_per_episode < 0) bad("counts");
    if (!(no_blocks_penalty_factor > 0)) bad("penalty");
}

void q_update(QTable& table, const StateKey& s, Protocol a, double reward, const StateKey& next, double alpha,
              double gamma) {
    if (!std::isfinite(reward)) throw std::invalid_argument("q_update: non-finite reward");
    const double target = reward + gamma * table.max_q(next);
    QEntry& e = table.entry(s, a);
    e.q += alpha * (target - e.q);
    ++e.visits;
}

Decision select_action(const QTable& table, const StateKey& s, double epsilon, RngStream& rng) {
    if (rng.unit() < epsilon) {
        const Protocol a = rng.bernoulli(0.5) ? Protocol::BigFoot : Protocol::Pbft;
        return {a, DecisionSource::QExplore, 0};
    }
    const Protocol a = table.q(s, Protocol::BigFoot) > table.q(s, Protocol::Pbft) ? Protocol::BigFoot : Protocol::Pbft;
    return {a, DecisionSource::QGreedy, 0};
}

std::uint64_t what_if_seed(std::uint64_t scenario_seed, std::size_t window) {
    return detail::splitmix64(scenario_seed ^ detail::fnv1a("what-if") ^ detail::splitmix64(window));
}

WhatIfResult what_if_evaluate(const SimulatorModel& model, const TwinState& s, const ChainConfig& chain,
                              Duration step, std::uint64_t seed, const AgentConfig& cfg) {
    WhatIfResult r;
    const double penalty = cfg.no_blocks_penalty_factor * static_cast<double>(step.count()) / 1000.0;
    const SimTime until = at_ms(step.count());
    for (int k = 0; k < cfg.replicates; ++k) {
        const Scenario sc = what_if_scenario(model, s, step, detail::splitmix64(seed + static_cast<std::uint64_t>(k)));
        for (Protocol a : kProtocols) {
            const auto lat = simulate_fixed(sc, chain, a, until, model.backlog);
            r.latency[index_of(a)] += lat ? *lat : penalty;
            ++r.simulator_calls;
        }
    }
    for (double& l : r.latency) l /= cfg.replicates;
    return r;
}

void augment(QTable& table, const StateKey& s, const WhatIfResult& result, const AgentConfig& cfg) {
    // Value of staying in s under the better action forever, so simulated
    // entries sit on the same scale as entries learned by bootstrapping.
    const double best = -std::min(result.latency[0], result.latency[1]);
    const double tail = cfg.gamma * best / (1.0 - cfg.gamma);
    for (Protocol a : kProtocols) {
        QEntry& e = table.entry(s, a);
        const double target = -result.latency[index_of(a)] + tail;
        const double lr = e.visits == 0 ? 1.0 : cfg.alpha;
        e.q += lr * (target - e.q);
        ++e.visits;
    }
}

Decision agent_plus_decide(QTable& table, const TwinState& s, const SimulatorModel& model, const ChainConfig& chain,
                           Duration step, std::uint64_t seed, double epsilon, RngStream& rng, const AgentConfig& cfg) {
    if (table.visits(s.key()) >= cfg.unseen_threshold) return select_action(table, s.key(), epsilon, rng);
    const WhatIfResult r = what_if_evaluate(model, s, chain, step, seed, cfg);
    augment(table, s.key(), r, cfg);
    return {r.best(), DecisionSource::WhatIfFallback, r.simulator_calls};
}

Decision simulation_only_decide(const TwinState& s, const SimulatorModel& model, const ChainConfig& chain,
                                Duration step, std::uint64_t seed, const AgentConfig& cfg) {
    const WhatIfResult r = what_if_evaluate(model, s, chain, step, seed, cfg);
    return {r.best(), DecisionSource::WhatIf, r.simulator_calls};
}

QAgentController::QAgentController(QTable& table, const AgentConfig& cfg, const ChainConfig& chain, Duration step,
                                   double epsilon, bool learn, bool use_twin, std::uint64_t rng_seed)
    : table_(table), cfg_(cfg), chain_(chain), step_(step), epsilon_(epsilon), learn_(learn), use_twin_(use_twin),
      rng_(rng_seed, "agent") {}

Decision QAgentController::decide(const TwinState& state, const DecisionContext& ctx) {
    if (!use_twin_) return select_action(table_, state.key(), epsilon_, rng_);
    if (table_.visits(state.key()) >= cfg_.unseen_threshold) return select_action(table_, state.key(), epsilon_, rng_);
    const SimulatorModel model = ctx.twin.model(cfg_.model);
    return agent_plus_decide(table_, state, model, chain_, step_, what_if_seed(ctx.scenario_seed, ctx.window), epsilon_,
                             rng_, cfg_);
}

void QAgentController::learn(const TwinState& state, Protocol action, double reward, const TwinState& next) {
    if (learn_) q_update(table_, state.key(), action, reward, next.key(), cfg_.alpha, cfg_.gamma);
}

Decision SimOnlyController::decide(const TwinState& state, const DecisionContext& ctx) {
    const SimulatorModel model = ctx.twin.model(cfg_.model);
    return simulation_only_decide(state, model, chain_, step_, what_if_seed(ctx.scenario_seed, ctx.window), cfg_);
}

namespace {

/// Ground-truth state and model of a one-interval scenario.
std::pair<TwinState, SimulatorModel> synthetic_state(const Scenario& sc) {
    const int m = sc.params.producers;
    const auto producers = producer_ids(m);
    std::vector<NodeId> online;
    std::optional<NodeId> down;
    for (NodeId p : producers) {
        if (sc.failures.is_online(p, SimTime{})) {
            online.push_back(p);
        } else {
            down = p;
        }
    }
    TwinState s;
    s.failure = down.has_value();
    const SpeedBounds b = true_bounds(sc.network, sc.failures, SimTime{}, online);
    s.n_low = b.low;
    s.n_high = b.high;
    s.windows = 1;

    SimulatorModel model;
    model.cold_start = false;
    model.nodes = sc.params.nodes;
    model.producers = m;
    model.speed_low = b.low;
    model.speed_high = b.high;
    model.tps = sc.tps_trace.front();
    model.tx_size = sc.size_trace.front();
    model.failure_frequency.assign(static_cast<std::size_t>(m), 0.0);
    model.last_failed = down;
    return {s, model};
}

}  // namespace

TrainResult train_offline(const Workload& workload, const ScenarioParams& synthetic_params, const ChainConfig& chain,
                          int episodes, const AgentConfig& cfg, std::uint64_t seed, const TwinConfig& twin,
                          QTable initial) {
    cfg.validate();
    if (workload.scenarios.empty()) throw std::invalid_argument("train_offline: empty workload");
    if (episodes < 1) throw std::invalid_argument("train_offline: need at least one episode");
    TrainResult result;
    result.table = std::move(initial);

    ScenarioParams synth = synthetic_params;
    synth.horizon = synth.interval;

    LoopOptions loop;
    loop.twin = twin;
    loop.no_blocks_penalty_factor = cfg.no_blocks_penalty_factor;

    double epsilon = cfg.epsilon;
    for (int e = 0; e < episodes; ++e) {
        const Scenario& sc = workload.scenarios[static_cast<std::size_t>(e) % workload.scenarios.size()];
        const std::uint64_t episode_seed = detail::splitmix64(seed ^ detail::splitmix64(static_cast<std::uint64_t>(e)));
        QAgentController agent(result.table, cfg, chain, sc.params.step, epsilon, true, false, episode_seed);
        const EpisodeResult run = run_episode(sc, chain, agent, loop);
        result.episode_latency.push_back(run.mean_latency);
        result.episode_epsilon.push_back(epsilon);

        for (int g = 0; g < cfg.synthetic_per_episode; ++g) {
            const std::uint64_t gs = detail::splitmix64(episode_seed + 1 + static_cast<std::uint64_t>(g));
            const Scenario synthetic = generate_scenario(synth, gs);
            const auto [state, model] = synthetic_state(synthetic);
            const WhatIfResult r = what_if_evaluate(model, state, chain, sc.params.step, gs, cfg);
            augment(result.table, state.key(), r, cfg);
        }
        epsilon = std::max(cfg.epsilon_floor, epsilon * cfg.epsilon_decay);
    }
    return result;
}

}  // namespace dtwin
