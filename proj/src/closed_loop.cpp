#include <dtwin/closed_loop.hpp>

#include <chrono>
#include <cmath>
#include <limits>

namespace dtwin {

std::string_view to_string(DecisionSource s) {
    switch (s) {
        case DecisionSource::QGreedy: return "q-greedy";
        case DecisionSource::QExplore: return "q-explore";
        case DecisionSource::WhatIfFallback: return "what-if-fallback";
        case DecisionSource::WhatIf: return "what-if";
        case DecisionSource::Static: return "static";
    }
    return "?";
}

double ledger_latency(std::span<const Block> ledger, std::size_t* tx_count) {
    std::int64_t sum = 0;
    std::size_t n = 0;
    for (const Block& b : ledger) {
        sum += total_latency_ms(b);
        n += b.txs.size();
    }
    if (tx_count) *tx_count = n;
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(sum) / 1000.0 / static_cast<double>(n);
}

EpisodeResult run_episode(const Scenario& scenario, const ChainConfig& chain, Controller& controller,
                          const LoopOptions& options) {
    const auto& params = scenario.params;
    Blockchain system(chain, scenario.network_model(options.twin.propagation), scenario.transactions());
    DigitalTwin twin(options.twin);
    EpisodeResult result;

    const std::int64_t step = params.step.count();
    const auto windows = static_cast<std::size_t>(params.horizon.count() / step);
    const double penalty = options.no_blocks_penalty_factor * static_cast<double>(step) / 1000.0;
    result.decisions.reserve(windows);

    for (std::size_t w = 0; w < windows; ++w) {
        const SimTime from = at_ms(static_cast<std::int64_t>(w) * step);
        const SimTime to = from + params.step;
        const TwinState state = twin.state();

        const DecisionContext ctx{twin, w, from, to, scenario.seed};
        const auto t0 = std::chrono::steady_clock::now();
        const Decision d = controller.decide(state, ctx);
        const auto wall = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - t0);

        system.set_protocol(d.action);
        // Events at `to` belong to the next window's decision.
        system.run_until(to - Duration{1});

        ObservationBatch batch;
        const auto blocks = system.blocks_in(from, to);
        batch.blocks.assign(blocks.begin(), blocks.end());
        batch.missed = system.missed_in(from, to);
        batch.from = from;
        batch.to = to;
        batch.pending = system.backlog(to);

        const auto latency = window_latency(batch.blocks, from, to);
        const double reward = latency ? -*latency : -penalty;
        const TwinState next = twin.observe(std::move(batch));
        controller.learn(state, d.action, reward, next);
        result.twin_states.push_back(next);

        DecisionRecord rec;
        rec.from = from;
        rec.to = to;
        rec.state = state;
        rec.action = d.action;
        rec.reward = reward;
        rec.source = d.source;
        rec.simulator_calls = d.simulator_calls;
        rec.decision_wall_ns = wall.count();
        result.simulator_calls += d.simulator_calls;
        result.decision_wall_ns += wall.count();
        result.decisions.push_back(rec);
    }

    result.mean_latency = ledger_latency(system.ledger(), &result.committed_txs);
    if (options.keep_blocks) {
        result.ledger = system.ledger();
        result.missed = system.missed_cycles();
    }
    return result;
}

std::optional<double> simulate_fixed(const Scenario& scenario, const ChainConfig& chain, Protocol protocol,
                                     SimTime until, std::span<const Transaction> backlog) {
    std::vector<Transaction> txs(backlog.begin(), backlog.end());
    for (std::size_t i = 0; i < txs.size(); ++i) txs[i].id = i;
    for (Transaction tx : scenario.transactions()) {
        tx.id = txs.size();
        txs.push_back(tx);
    }
    Blockchain system(chain, scenario.network_model(), std::move(txs), protocol);
    system.run_until(until - Duration{1});
    return window_latency(system.ledger(), SimTime{}, until);
}

}  // namespace dtwin
