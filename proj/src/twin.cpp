#include <dtwin/twin.hpp>

#include <algorithm>
#include <limits>
#include <map>

namespace dtwin {

std::vector<NodeId> absent_producers(const ObservationBatch& batch, int producers) {
    std::vector<NodeId> absent;
    for (int p = 0; p < producers; ++p) {
        const NodeId id{p};
        const bool missing = std::ranges::any_of(batch.blocks, [&](const Block& b) { return !b.history.participated(id); });
        const bool missed_slot = std::ranges::any_of(batch.missed, [&](const MissedCycle& m) {
            return m.producer == id && m.reason == MissReason::ProducerOffline;
        });
        if (missing || missed_slot) absent.push_back(id);
    }
    return absent;
}

bool detect_failures(const ObservationBatch& batch, int producers) {
    if (batch.blocks.empty()) return true;
    const bool lost_slot = std::ranges::any_of(batch.missed, [](const MissedCycle& m) {
        return m.reason == MissReason::ProducerOffline || m.reason == MissReason::ConsensusFailed;
    });
    return lost_slot || !absent_producers(batch, producers).empty();
}

std::optional<std::pair<double, double>> raw_network_bounds(const ObservationBatch& batch, Duration propagation) {
    std::map<std::pair<int, int>, double> best;
    for (const Block& b : batch.blocks) {
        for (const MessageRecord& m : b.history.messages) {
            if (m.phase != Phase::PrePrepare) continue;
            const std::int64_t transfer_ms = (m.received_at - m.sent_at - propagation).count();
            if (transfer_ms <= 0) continue;
            const double mbps = 8.0 * static_cast<double>(m.size_bytes) / (static_cast<double>(transfer_ms) * 1000.0);
            auto [it, inserted] = best.try_emplace({m.sender.value, m.receiver.value}, mbps);
            if (!inserted) it->second = std::max(it->second, mbps);
        }
    }
    if (best.empty()) return std::nullopt;
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& [link, mbps] : best) {
        lo = std::min(lo, mbps);
        hi = std::max(hi, mbps);
    }
    return std::pair{lo, hi};
}

namespace {

struct SmoothedBounds {
    double low;
    double high;
};

std::optional<SmoothedBounds> smooth_bounds(const ObservationBatch& batch, const TwinState& previous,
                                            const TwinConfig& cfg) {
    const auto raw = raw_network_bounds(batch, cfg.propagation);
    if (!raw) return std::nullopt;
    if (previous.high_mbps <= 0.0) return SmoothedBounds{raw->first, raw->second};
    const double l = cfg.smoothing;
    return SmoothedBounds{l * raw->first + (1 - l) * previous.low_mbps, l * raw->second + (1 - l) * previous.high_mbps};
}

}  // namespace

SpeedBounds infer_network_bounds(const ObservationBatch& batch, const TwinState& previous, const TwinConfig& cfg) {
    const auto s = smooth_bounds(batch, previous, cfg);
    if (!s) return {previous.n_low, previous.n_high};
    return {round_mbps(s->low), round_mbps(s->high)};
}

double estimate_tps(const ObservationBatch& batch, const TwinState& previous, const TwinConfig& cfg) {
    std::size_t txs = 0;
    for (const Block& b : batch.blocks) txs += b.txs.size();
    const double seconds = (batch.to - batch.from).count() / 1000.0;
    const double raw = seconds > 0 ? static_cast<double>(txs) / seconds : 0.0;
    if (previous.windows == 0) return raw;
    return cfg.smoothing * raw + (1 - cfg.smoothing) * previous.tps_estimate;
}

TwinState twin_state(const ObservationBatch& batch, const TwinState& previous, const TwinConfig& cfg) {
    TwinState next = previous;
    next.failure = detect_failures(batch, cfg.producers);
    if (const auto s = smooth_bounds(batch, previous, cfg)) {
        next.low_mbps = s->low;
        next.high_mbps = s->high;
        next.n_low = round_mbps(s->low);
        next.n_high = round_mbps(s->high);
    }
    next.tps_estimate = estimate_tps(batch, previous, cfg);
    next.as_of = batch.to;
    next.windows = previous.windows + 1;
    return next;
}

WindowSummary summarize(const ObservationBatch& batch, const TwinConfig& cfg) {
    WindowSummary w;
    w.from = batch.from;
    w.to = batch.to;
    w.raw_bounds = raw_network_bounds(batch, cfg.propagation);
    w.absent = absent_producers(batch, cfg.producers);
    w.failure = detect_failures(batch, cfg.producers);
    for (const Block& b : batch.blocks) {
        w.tx_count += b.txs.size();
        for (const Transaction& tx : b.txs) {
            if (!w.tx_sizes) {
                w.tx_sizes = SizeSpec{tx.size_bytes, tx.size_bytes};
            } else {
                w.tx_sizes->min_bytes = std::min(w.tx_sizes->min_bytes, tx.size_bytes);
                w.tx_sizes->max_bytes = std::max(w.tx_sizes->max_bytes, tx.size_bytes);
            }
        }
    }
    return w;
}

SimulatorModel calibrate_simulator(std::span<const WindowSummary> history, const ModelDefaults& defaults,
                                   const TwinConfig& cfg) {
    SimulatorModel m;
    m.nodes = defaults.nodes;
    m.producers = defaults.producers;
    m.speed_low = defaults.speed_low;
    m.speed_high = defaults.speed_high;
    m.tps = defaults.tps;
    m.tx_size = defaults.tx_size;
    m.failure_frequency.assign(static_cast<std::size_t>(defaults.producers), 0.0);
    if (history.empty()) return m;
    m.cold_start = false;

    bool have_speed = false;
    bool have_tps = false;
    for (const WindowSummary& w : history) {
        if (w.raw_bounds) {
            const double l = have_speed ? cfg.smoothing : 1.0;
            m.speed_low = l * w.raw_bounds->first + (1 - l) * m.speed_low;
            m.speed_high = l * w.raw_bounds->second + (1 - l) * m.speed_high;
            have_speed = true;
        }
        const double seconds = (w.to - w.from).count() / 1000.0;
        if (seconds > 0) {
            const double rate = static_cast<double>(w.tx_count) / seconds;
            const double l = have_tps ? cfg.smoothing : 1.0;
            m.tps = l * rate + (1 - l) * m.tps;
            have_tps = true;
        }
        if (w.tx_sizes) m.tx_size = *w.tx_sizes;
        for (NodeId p : w.absent) {
            if (p.value < m.producers) m.failure_frequency[static_cast<std::size_t>(p.value)] += 1.0;
        }
        if (!w.absent.empty()) {
            // Prefer the producer seen down most often among this window's absentees.
            m.last_failed = *std::ranges::max_element(w.absent, {}, [&](NodeId p) {
                return m.failure_frequency[static_cast<std::size_t>(p.value)];
            });
        }
    }
    for (auto& f : m.failure_frequency) f /= static_cast<double>(history.size());
    return m;
}

Scenario what_if_scenario(const SimulatorModel& model, const TwinState& s, Duration horizon, std::uint64_t seed) {
    Scenario sc;
    sc.seed = seed;
    sc.params.nodes = model.nodes;
    sc.params.producers = model.producers;
    sc.params.horizon = horizon;
    sc.params.interval = horizon;
    sc.params.step = horizon;
    double lo = s.windows > 0 && s.n_high > 0 ? static_cast<double>(s.n_low) : model.speed_low;
    double hi = s.windows > 0 && s.n_high > 0 ? static_cast<double>(s.n_high) : model.speed_high;
    lo = std::max(lo, 0.5);
    hi = std::max(hi, lo);
    sc.params.speed = {lo, hi};
    const double tps = std::max(model.tps, 1.0);
    sc.params.tps = {tps, tps};
    sc.params.tx_size = {model.tx_size.min_bytes, model.tx_size.max_bytes};
    sc.params.outage_prob = 0.0;

    RngStream rng(seed, "what-if/network");
    SpeedMatrix m = SpeedMatrix::Zero(model.nodes, model.nodes);
    for (int r = 0; r < model.nodes; ++r) {
        for (int c = 0; c < model.nodes; ++c) {
            if (r != c) m(r, c) = rng.uniform(lo, hi);
        }
    }
    sc.network = NetworkSchedule(horizon, {m});
    sc.tps_trace = {tps};
    sc.size_trace = {model.tx_size};

    std::vector<Outage> outages;
    if (s.failure) {
        std::optional<NodeId> down = model.last_failed;
        if (!down) {
            const auto it = std::ranges::max_element(model.failure_frequency);
            if (it != model.failure_frequency.end() && *it > 0) {
                down = NodeId{static_cast<int>(it - model.failure_frequency.begin())};
            }
        }
        if (down) outages.push_back({*down, SimTime{}, at_ms(horizon.count())});
    }
    sc.failures = FailureSchedule(model.nodes, std::move(outages));
    return sc;
}

const TwinState& DigitalTwin::observe(ObservationBatch batch) {
    state_ = twin_state(batch, state_, cfg_);
    history_.push_back(summarize(batch, cfg_));
    backlog_ = std::move(batch.pending);
    for (Transaction& tx : backlog_) tx.created_at = at_ms((tx.created_at - batch.to).count());
    return state_;
}

SimulatorModel DigitalTwin::model(const ModelDefaults& defaults) const {
    SimulatorModel m = calibrate_simulator(history_, defaults, cfg_);
    m.backlog = backlog_;
    return m;
}

}  // namespace dtwin
