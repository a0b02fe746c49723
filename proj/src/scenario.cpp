#include <dtwin/json_io.hpp>
#include <dtwin/scenario.hpp>

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace dtwin {

void ScenarioParams::validate() const {
    auto bad = [](const char* what) { throw std::invalid_argument(std::string("invalid scenario params: ") + what); };
    if (!(tps.lo > 0) || tps.lo > tps.hi) bad("tps range");
    if (tx_size.lo <= 0 || tx_size.lo > tx_size.hi) bad("tx size range");
    if (!(outage_prob >= 0 && outage_prob <= 1)) bad("outage probability");
    if (outage_duration.lo <= 0 || outage_duration.lo > outage_duration.hi) bad("outage duration range");
    if (!(speed.lo > 0) || speed.lo > speed.hi) bad("speed range");
    if (interval.count() <= 0 || step.count() <= 0) bad("TI and TS must be positive");
    if (horizon.count() <= 0 || horizon.count() % interval.count() != 0) bad("horizon must be a multiple of TI");
    if (producers < 1 || producers > nodes) bad("need 1 <= M <= K");
}

ScenarioParams default_wl1_params() { return ScenarioParams{}; }

ScenarioParams default_wl2_params() {
    ScenarioParams p;
    p.tps = {20.0, 80.0};
    p.speed = {1.0, 12.0};
    p.outage_prob = 0.12;
    return p;
}

std::string_view to_string(WorkloadLabel w) {
    switch (w) {
        case WorkloadLabel::WL1: return "WL1";
        case WorkloadLabel::WL2: return "WL2";
        case WorkloadLabel::Custom: return "custom";
    }
    return "?";
}

Scenario generate_scenario(const ScenarioParams& params, std::uint64_t seed) {
    params.validate();
    Scenario s;
    s.params = params;
    s.seed = seed;
    const std::size_t intervals = params.interval_count();
    const int k = params.nodes;

    RngStream net_rng(seed, "network");
    RngStream load_rng(seed, "workload-shape");
    RngStream fail_rng(seed, "failures");

    std::vector<SpeedMatrix> matrices;
    matrices.reserve(intervals);
    std::vector<Outage> outages;
    std::vector<SimTime> down_until(static_cast<std::size_t>(params.producers));
    const SimTime horizon = at_ms(params.horizon.count());

    for (std::size_t i = 0; i < intervals; ++i) {
        const double a = net_rng.uniform(params.speed.lo, params.speed.hi);
        const double b = net_rng.uniform(params.speed.lo, params.speed.hi);
        const double lo = std::min(a, b);
        const double hi = std::max(a, b);
        SpeedMatrix m = SpeedMatrix::Zero(k, k);
        for (int r = 0; r < k; ++r) {
            for (int c = 0; c < k; ++c) {
                if (r != c) m(r, c) = net_rng.uniform(lo, hi);
            }
        }
        matrices.push_back(std::move(m));

        s.tps_trace.push_back(load_rng.uniform(params.tps.lo, params.tps.hi));
        const auto s1 = load_rng.uniform_int(params.tx_size.lo, params.tx_size.hi);
        const auto s2 = load_rng.uniform_int(params.tx_size.lo, params.tx_size.hi);
        s.size_trace.push_back(SizeSpec{std::min(s1, s2), std::max(s1, s2)});

        const SimTime start = at_ms(static_cast<std::int64_t>(i) * params.interval.count());
        for (int p = 0; p < params.producers; ++p) {
            const bool starts = fail_rng.bernoulli(params.outage_prob);
            const auto drawn = fail_rng.uniform_int(params.outage_duration.lo, params.outage_duration.hi);
            auto& until = down_until[static_cast<std::size_t>(p)];
            if (!starts || start < until) continue;
            const std::int64_t ti = params.interval.count();
            const std::int64_t whole = (drawn + ti - 1) / ti * ti;
            until = std::min(start + Duration{whole}, horizon);
            outages.push_back({NodeId{p}, start, until});
        }
    }
    s.network = NetworkSchedule(params.interval, std::move(matrices));
    s.failures = FailureSchedule(k, std::move(outages));
    return s;
}

std::vector<Transaction> Scenario::transactions() const {
    RngStream rng(seed, "workload");
    std::vector<Transaction> out;
    for (std::size_t i = 0; i < tps_trace.size(); ++i) {
        const SimTime start = at_ms(static_cast<std::int64_t>(i) * params.interval.count());
        auto chunk = generate_transactions(tps_trace[i], size_trace[i], params.interval, rng, start,
                                           static_cast<std::uint64_t>(out.size()), params.nodes);
        out.insert(out.end(), chunk.begin(), chunk.end());
    }
    return out;
}

NetworkModel Scenario::network_model(Duration propagation) const { return NetworkModel{network, failures, propagation}; }

std::uint64_t workload_seed(WorkloadLabel label, std::uint64_t master_seed, std::size_t index) {
    return detail::splitmix64(master_seed ^ detail::fnv1a(to_string(label)) ^ detail::splitmix64(index + 1));
}

Workload make_workload(WorkloadLabel label, const ScenarioParams& params, std::uint64_t master_seed,
                       std::size_t count) {
    Workload w;
    w.label = label;
    for (std::size_t i = 0; i < count; ++i) {
        w.scenarios.push_back(generate_scenario(params, workload_seed(label, master_seed, i)));
    }
    return w;
}

ChainConfig chain_config_for(const ScenarioParams& params) {
    ChainConfig c;
    c.nodes = params.nodes;
    c.producers = params.producers;
    c.consensus.n = params.producers;
    return c;
}

// --- serialisation -------------------------------------------------------

using nlohmann::json;

void to_json(json& j, const ScenarioParams& p) {
    j = json{{"tps_range", {p.tps.lo, p.tps.hi}},
             {"tx_size_range", {p.tx_size.lo, p.tx_size.hi}},
             {"outage_prob_per_interval", p.outage_prob},
             {"outage_duration_range_ms", {p.outage_duration.lo, p.outage_duration.hi}},
             {"speed_range_mbps", {p.speed.lo, p.speed.hi}},
             {"horizon_ms", p.horizon.count()},
             {"ti_ms", p.interval.count()},
             {"ts_ms", p.step.count()},
             {"n_nodes", p.nodes},
             {"n_producers", p.producers}};
}

void from_json(const json& j, ScenarioParams& p) {
    ScenarioParams d = p;  // missing keys keep the current values
    auto range = [&](const char* key, auto& r) {
        if (j.contains(key)) {
            r.lo = j.at(key).at(0).get<decltype(r.lo)>();
            r.hi = j.at(key).at(1).get<decltype(r.hi)>();
        }
    };
    range("tps_range", d.tps);
    range("tx_size_range", d.tx_size);
    range("outage_duration_range_ms", d.outage_duration);
    range("speed_range_mbps", d.speed);
    d.outage_prob = j.value("outage_prob_per_interval", d.outage_prob);
    d.horizon = Duration{j.value("horizon_ms", d.horizon.count())};
    d.interval = Duration{j.value("ti_ms", d.interval.count())};
    d.step = Duration{j.value("ts_ms", d.step.count())};
    d.nodes = j.value("n_nodes", d.nodes);
    d.producers = j.value("n_producers", d.producers);
    p = d;
}

void to_json(json& j, const ConsensusConfig& c) {
    j = json{{"control_msg_bytes", c.control_msg_bytes},
             {"fast_path_timeout_ms", c.fast_path_timeout.count()},
             {"verify_ms", c.verify.count()}};
}

void from_json(const json& j, ConsensusConfig& c) {
    c.control_msg_bytes = j.value("control_msg_bytes", c.control_msg_bytes);
    c.fast_path_timeout = Duration{j.value("fast_path_timeout_ms", c.fast_path_timeout.count())};
    c.verify = Duration{j.value("verify_ms", c.verify.count())};
}

void to_json(json& j, const ChainConfig& c) {
    j = json{{"block_interval_ms", c.block_interval.count()},
             {"max_txs", c.max_txs},
             {"header_bytes", c.header_bytes},
             {"consensus", c.consensus}};
}

void from_json(const json& j, ChainConfig& c) {
    c.block_interval = Duration{j.value("block_interval_ms", c.block_interval.count())};
    c.max_txs = j.value("max_txs", c.max_txs);
    c.header_bytes = j.value("header_bytes", c.header_bytes);
    if (j.contains("consensus")) from_json(j.at("consensus"), c.consensus);
}

json scenario_to_json(const Scenario& s) {
    json intervals = json::array();
    const auto& mats = s.network.matrices();
    for (std::size_t i = 0; i < mats.size(); ++i) {
        json speeds = json::array();
        for (Eigen::Index r = 0; r < mats[i].rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < mats[i].cols(); ++c) row.push_back(mats[i](r, c));
            speeds.push_back(std::move(row));
        }
        intervals.push_back(json{{"start_ms", static_cast<std::int64_t>(i) * s.params.interval.count()},
                                 {"tps", s.tps_trace[i]},
                                 {"tx_size", {s.size_trace[i].min_bytes, s.size_trace[i].max_bytes}},
                                 {"speeds_mbps", std::move(speeds)}});
    }
    json outages = json::array();
    for (const auto& o : s.failures.outages()) {
        outages.push_back(json{{"node", o.node.value}, {"from_ms", o.from.ms}, {"until_ms", o.until.ms}});
    }
    return json{{"format", "dtwin-scenario/1"},
                {"seed", s.seed},
                {"params", s.params},
                {"intervals", std::move(intervals)},
                {"outages", std::move(outages)}};
}

Scenario scenario_from_json(const json& j) {
    if (j.value("format", std::string{}) != "dtwin-scenario/1") throw std::invalid_argument("not a scenario file");
    Scenario s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.params = j.at("params").get<ScenarioParams>();
    s.params.validate();
    std::vector<SpeedMatrix> mats;
    for (const auto& iv : j.at("intervals")) {
        s.tps_trace.push_back(iv.at("tps").get<double>());
        s.size_trace.push_back(SizeSpec{iv.at("tx_size").at(0).get<std::int64_t>(),
                                        iv.at("tx_size").at(1).get<std::int64_t>()});
        const auto& rows = iv.at("speeds_mbps");
        const auto n = static_cast<Eigen::Index>(rows.size());
        SpeedMatrix m(n, n);
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index c = 0; c < n; ++c) m(r, c) = rows.at(r).at(c).get<double>();
        }
        mats.push_back(std::move(m));
    }
    if (mats.size() != s.params.interval_count()) throw std::invalid_argument("interval count mismatch");
    std::vector<Outage> outages;
    for (const auto& o : j.at("outages")) {
        outages.push_back({NodeId{o.at("node").get<int>()}, at_ms(o.at("from_ms").get<std::int64_t>()),
                           at_ms(o.at("until_ms").get<std::int64_t>())});
    }
    s.network = NetworkSchedule(s.params.interval, std::move(mats));
    s.failures = FailureSchedule(s.params.nodes, std::move(outages));
    return s;
}

void write_scenario(std::ostream& os, const Scenario& s) { os << scenario_to_json(s).dump(1) << '\n'; }

Scenario read_scenario(std::istream& is) { return scenario_from_json(json::parse(is)); }

void save_scenario(const std::string& path, const Scenario& s) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_scenario(os, s);
    if (!os) throw std::runtime_error("failed writing " + path);
}

Scenario load_scenario(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return read_scenario(is);
}

}  // namespace dtwin
