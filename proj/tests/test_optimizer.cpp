#include <dtwin/optimizer.hpp>

#include "support.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>

using namespace dtwin;

namespace {

constexpr StateKey kS0{false, 4, 9};
constexpr StateKey kS1{true, 2, 6};

ChainConfig chain5() { return chain_config_for(ScenarioParams{}); }

SimulatorModel model_with(double lo, double hi, bool failed) {
    SimulatorModel m;
    m.cold_start = false;
    m.speed_low = lo;
    m.speed_high = hi;
    m.tps = 30.0;
    m.tx_size = SizeSpec{500, 1500};
    m.failure_frequency.assign(5, 0.0);
    if (failed) m.last_failed = NodeId{3};
    return m;
}

TwinState state_of(bool failure, int lo, int hi) {
    TwinState s;
    s.failure = failure;
    s.n_low = lo;
    s.n_high = hi;
    s.windows = 1;
    return s;
}

}  // namespace

TEST_CASE("q_update arithmetic") {
    QTable t;
    q_update(t, kS0, Protocol::Pbft, -3.0, kS0, 1.0, 0.0);
    CHECK(t.q(kS0, Protocol::Pbft) == -3.0);
    CHECK(t.at(kS0, Protocol::Pbft).visits == 1);

    QTable u;
    u.entry(kS1, Protocol::BigFoot).q = 1.0;
    q_update(u, kS0, Protocol::Pbft, -2.0, kS1, 0.5, 0.9);
    CHECK(u.q(kS0, Protocol::Pbft) == doctest::Approx(-0.55));
    CHECK(u.at(kS0, Protocol::BigFoot).visits == 0);
    CHECK(u.visits(kS0) == 1);

    CHECK_THROWS_AS(q_update(u, kS0, Protocol::Pbft, std::numeric_limits<double>::quiet_NaN(), kS0, 0.5, 0.9),
                    std::invalid_argument);
    CHECK_THROWS_AS(q_update(u, kS0, Protocol::Pbft, -std::numeric_limits<double>::infinity(), kS0, 0.5, 0.9),
                    std::invalid_argument);
    CHECK(u.visits(kS0) == 1);
}

TEST_CASE("greedy selection and tie-break") {
    RngStream rng(1, "sel");
    QTable t;
    CHECK(select_action(t, kS0, 0.0, rng).action == Protocol::Pbft);  // unseen: tie
    t.entry(kS0, Protocol::Pbft).q = -2.0;
    t.entry(kS0, Protocol::BigFoot).q = -1.0;
    const Decision d = select_action(t, kS0, 0.0, rng);
    CHECK(d.action == Protocol::BigFoot);
    CHECK(d.source == DecisionSource::QGreedy);
    CHECK(d.simulator_calls == 0);
    t.entry(kS0, Protocol::BigFoot).q = -2.0;
    CHECK(select_action(t, kS0, 0.0, rng).action == Protocol::Pbft);
}

TEST_CASE("full exploration splits evenly") {
    RngStream rng(3, "explore");
    QTable t;
    t.entry(kS0, Protocol::BigFoot).q = 5.0;
    const int n = 10000;
    int bigfoot = 0;
    for (int i = 0; i < n; ++i) {
        const Decision d = select_action(t, kS0, 1.0, rng);
        CHECK(d.source == DecisionSource::QExplore);
        bigfoot += d.action == Protocol::BigFoot ? 1 : 0;
    }
    CHECK(std::abs(bigfoot - n / 2) < 3 * std::sqrt(n * 0.25));
}

TEST_CASE("Q-learning matches value iteration on a stationary two-state MDP") {
    // states 0,1 x actions PBFT,BIGFOOT; deterministic rewards and successors
    const StateKey keys[2] = {kS0, kS1};
    Eigen::Matrix<double, 2, 2> R;
    R << -1.0, -0.4,   //
        -2.0, -3.5;
    const int next[2][2] = {{1, 0}, {0, 1}};
    const double gamma = 0.9;

    // value iteration with a 4x2 transition matrix over (s,a) rows
    Eigen::Matrix<double, 4, 2> T = Eigen::Matrix<double, 4, 2>::Zero();
    Eigen::Vector4d r;
    for (int s = 0; s < 2; ++s)
        for (int a = 0; a < 2; ++a) {
            T(2 * s + a, next[s][a]) = 1.0;
            r(2 * s + a) = R(s, a);
        }
    Eigen::Vector4d q = Eigen::Vector4d::Zero();
    for (int it = 0; it < 2000; ++it) {
        Eigen::Vector2d v(std::max(q(0), q(1)), std::max(q(2), q(3)));
        q = r + gamma * T * v;
    }

    QTable table;
    std::vector<std::int64_t> visits(4, 0);
    for (int k = 0; k < 100000; ++k) {
        const int s = (k / 2) % 2, a = k % 2;
        const int i = 2 * s + a;
        const double alpha = 1.0 / (1.0 + static_cast<double>(visits[static_cast<std::size_t>(i)]++) / 5000.0);
        q_update(table, keys[s], kProtocols[static_cast<std::size_t>(a)], R(s, a), keys[next[s][a]], alpha, gamma);
    }
    for (int s = 0; s < 2; ++s) {
        for (int a = 0; a < 2; ++a) {
            CAPTURE(s);
            CAPTURE(a);
            CHECK(std::abs(table.q(keys[s], kProtocols[static_cast<std::size_t>(a)]) - q(2 * s + a)) < 1e-6);
        }
    }
    // argmax over Q is argmin over latency: state 0 prefers the cheaper BIGFOOT
    RngStream rng(0, "g");
    CHECK(select_action(table, kS0, 0.0, rng).action == Protocol::BigFoot);
    CHECK(select_action(table, kS1, 0.0, rng).action == Protocol::Pbft);
}

TEST_CASE("q-table text round trip is exact") {
    QTable t;
    t.entry(kS0, Protocol::Pbft) = {-0.1234567890123456789, 3};
    t.entry(kS1, Protocol::BigFoot) = {1.0 / 3.0, 7};
    std::stringstream ss;
    t.save(ss);
    const QTable back = QTable::load(ss);
    CHECK(back == t);

    std::istringstream bad("0 1 2 RAFT -1 1\n");
    CHECK_THROWS(QTable::load(bad));
    std::istringstream short_line("0 1 2 PBFT\n");
    CHECK_THROWS(QTable::load(short_line));
}

TEST_CASE("what-if evaluation reflects the state") {
    const AgentConfig cfg;
    const auto chain = chain5();
    const Duration step{10000};

    const WhatIfResult healthy = what_if_evaluate(model_with(8, 12, false), state_of(false, 8, 12), chain, step, 5, cfg);
    CHECK(healthy.simulator_calls == 2 * cfg.replicates);
    CHECK(healthy.latency[1] < healthy.latency[0]);
    CHECK(healthy.best() == Protocol::BigFoot);

    const WhatIfResult failing = what_if_evaluate(model_with(8, 12, true), state_of(true, 8, 12), chain, step, 5, cfg);
    CHECK(failing.latency[0] < failing.latency[1]);
    CHECK(failing.best() == Protocol::Pbft);

    const WhatIfResult again = what_if_evaluate(model_with(8, 12, false), state_of(false, 8, 12), chain, step, 5, cfg);
    CHECK(again.latency == healthy.latency);

    AgentConfig one = cfg;
    one.replicates = 1;
    CHECK(what_if_evaluate(model_with(8, 12, false), state_of(false, 8, 12), chain, step, 9, one).simulator_calls == 2);
}

TEST_CASE("augmentation writes the stationary target") {
    AgentConfig cfg;
    cfg.gamma = 0.5;
    cfg.alpha = 0.25;
    WhatIfResult r;
    r.latency = {0.8, 0.6};
    QTable t;
    augment(t, kS0, r, cfg);
    // tail = gamma * (-0.6) / (1 - gamma) = -0.6
    CHECK(t.q(kS0, Protocol::Pbft) == doctest::Approx(-0.8 - 0.6));
    CHECK(t.q(kS0, Protocol::BigFoot) == doctest::Approx(-0.6 - 0.6));
    CHECK(t.visits(kS0) == 2);

    r.latency = {0.4, 0.6};  // second write moves by alpha
    augment(t, kS0, r, cfg);
    CHECK(t.q(kS0, Protocol::Pbft) == doctest::Approx(-1.4 + 0.25 * ((-0.4 - 0.4) - -1.4)));
    CHECK(t.visits(kS0) == 4);
}

TEST_CASE("agent+ simulates only below the visit threshold") {
    AgentConfig cfg;
    const auto chain = chain5();
    const TwinState s = state_of(false, 8, 12);
    const SimulatorModel m = model_with(8, 12, false);
    RngStream rng(4, "agent+");

    QTable t;
    const Decision first = agent_plus_decide(t, s, m, chain, Duration{10000}, 1, 0.0, rng, cfg);
    CHECK(first.source == DecisionSource::WhatIfFallback);
    CHECK(first.simulator_calls == 2 * cfg.replicates);
    CHECK(first.action == Protocol::BigFoot);
    CHECK(t.visits(s.key()) == 2);

    const Decision second = agent_plus_decide(t, s, m, chain, Duration{10000}, 1, 0.0, rng, cfg);
    CHECK(second.source == DecisionSource::QGreedy);
    CHECK(second.simulator_calls == 0);
    CHECK(second.action == Protocol::BigFoot);  // the augmented entries decide

    cfg.unseen_threshold = 5;
    CHECK(agent_plus_decide(t, s, m, chain, Duration{10000}, 1, 0.0, rng, cfg).source ==
          DecisionSource::WhatIfFallback);
    cfg.unseen_threshold = 0;
    QTable empty;
    CHECK(agent_plus_decide(empty, s, m, chain, Duration{10000}, 1, 0.0, rng, cfg).simulator_calls == 0);
    CHECK(empty.size() == 0);
}

TEST_CASE("simulation-only decisions") {
    const AgentConfig cfg;
    const auto chain = chain5();
    const Decision ok = simulation_only_decide(state_of(false, 8, 12), model_with(8, 12, false), chain,
                                               Duration{10000}, 3, cfg);
    CHECK(ok.action == Protocol::BigFoot);
    CHECK(ok.source == DecisionSource::WhatIf);
    CHECK(ok.simulator_calls == 2 * cfg.replicates);
    const Decision down = simulation_only_decide(state_of(true, 8, 12), model_with(8, 12, true), chain,
                                                 Duration{10000}, 3, cfg);
    CHECK(down.action == Protocol::Pbft);
}

TEST_CASE("online learning replays the decision records") {
    // Independent replay of the Bellman update over the recorded transitions.
    const Scenario sc = generate_scenario(
        [] {
            ScenarioParams p;
            p.horizon = Duration{120000};
            p.outage_prob = 0.2;
            return p;
        }(),
        12);
    for (double gamma : {0.0, 0.9}) {
        AgentConfig cfg;
        cfg.gamma = gamma;
        cfg.alpha = 0.3;
        QTable table;
        QAgentController agent(table, cfg, chain5(), sc.params.step, 0.5, true, false, 77);
        const EpisodeResult r = run_episode(sc, chain5(), agent);
        REQUIRE(r.decisions.size() == 12);

        std::map<std::pair<StateKey, int>, double> q;
        auto qv = [&](const StateKey& s, int a) {
            const auto it = q.find({s, a});
            return it == q.end() ? 0.0 : it->second;
        };
        for (std::size_t i = 0; i < r.decisions.size(); ++i) {
            const auto& d = r.decisions[i];
            const StateKey s = d.state.key();
            const StateKey n = r.twin_states[i].key();
            const int a = d.action == Protocol::Pbft ? 0 : 1;
            const double target = d.reward + gamma * std::max(qv(n, 0), qv(n, 1));
            q[{s, a}] = qv(s, a) + 0.3 * (target - qv(s, a));
            if (i + 1 < r.decisions.size()) CHECK(r.decisions[i + 1].state.key() == n);
        }
        for (const auto& [key, value] : q) {
            CHECK(table.q(key.first, kProtocols[static_cast<std::size_t>(key.second)]) == doctest::Approx(value));
        }
    }
}

TEST_CASE("gamma zero converges to the one-step cost of a constant scenario") {
    // The state is fixed after the first window, so every entry is an
    // exponential average of that action's window rewards.
    const Scenario sc = testing::constant_scenario(4, 6, 10, std::nullopt, Duration{200000});
    AgentConfig cfg;
    cfg.gamma = 0.0;
    cfg.alpha = 1.0;
    QTable table;
    QAgentController agent(table, cfg, chain5(), sc.params.step, 0.5, true, false, 5);
    const EpisodeResult r = run_episode(sc, chain5(), agent);
    std::map<std::pair<StateKey, Protocol>, double> last;
    for (const auto& d : r.decisions) last[{d.state.key(), d.action}] = d.reward;
    for (const auto& [key, reward] : last) CHECK(table.q(key.first, key.second) == reward);
    // the steady state favours the fast path, as the simulator predicts
    const StateKey steady = r.twin_states.back().key();
    if (table.at(steady, Protocol::Pbft).visits > 0 && table.at(steady, Protocol::BigFoot).visits > 0) {
        CHECK(table.q(steady, Protocol::BigFoot) > table.q(steady, Protocol::Pbft));
    }
}

TEST_CASE("frozen agents leave the table untouched") {
    const Scenario sc = testing::constant_scenario(4, 6, 10);
    AgentConfig cfg;
    QTable table;
    table.entry(kS0, Protocol::Pbft).q = -1.0;
    const QTable before = table;
    QAgentController agent(table, cfg, chain5(), sc.params.step, 0.0, false, false, 5);
    run_episode(sc, chain5(), agent);
    CHECK(table == before);
}

TEST_CASE("agent+ never calls the simulator more than sim-only") {
    ScenarioParams p;
    p.horizon = Duration{120000};
    p.outage_prob = 0.2;
    const Scenario sc = generate_scenario(p, 21);
    AgentConfig cfg;
    QTable table;
    QAgentController plus(table, cfg, chain5(), p.step, 0.0, true, true, 5);
    SimOnlyController sim(cfg, chain5(), p.step);
    const EpisodeResult a = run_episode(sc, chain5(), plus);
    const EpisodeResult b = run_episode(sc, chain5(), sim);
    CHECK(b.simulator_calls == 2 * cfg.replicates * static_cast<std::int64_t>(b.decisions.size()));
    CHECK(a.simulator_calls < b.simulator_calls);
    for (const auto& d : a.decisions) {
        CHECK(((d.source == DecisionSource::WhatIfFallback) == (d.simulator_calls > 0)));
    }
}

TEST_CASE("offline training") {
    ScenarioParams p;
    p.horizon = Duration{60000};
    const Workload w = make_workload(WorkloadLabel::WL1, p, 1, 2);
    AgentConfig cfg;
    cfg.synthetic_per_episode = 2;
    CHECK_THROWS_AS(train_offline(w, p, chain5(), 0, cfg, 1), std::invalid_argument);
    CHECK_THROWS_AS(train_offline(Workload{}, p, chain5(), 1, cfg, 1), std::invalid_argument);

    const TrainResult a = train_offline(w, p, chain5(), 3, cfg, 9);
    const TrainResult b = train_offline(w, p, chain5(), 3, cfg, 9);
    REQUIRE(a.episode_latency.size() == 3);
    CHECK(a.table == b.table);
    CHECK(a.episode_latency == b.episode_latency);
    CHECK(a.episode_epsilon[0] == cfg.epsilon);
    CHECK(a.episode_epsilon[1] == doctest::Approx(cfg.epsilon * cfg.epsilon_decay));
    CHECK(a.table.size() > 0);
}
