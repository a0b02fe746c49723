#include <dtwin/consensus.hpp>

#include <doctest.h>

#include <algorithm>

using namespace dtwin;

namespace {

NetworkModel net_of(const SpeedMatrix& m, std::vector<Outage> outages = {}) {
    const int k = static_cast<int>(m.rows());
    return {NetworkSchedule::constant(m, Duration{30000}, 2), FailureSchedule(k, std::move(outages)),
            kDefaultPropagation};
}

NetworkModel uniform_net(int k, double mbps, std::vector<Outage> outages = {}) {
    return net_of(SpeedMatrix::Constant(k, k, mbps), std::move(outages));
}

ConsensusConfig cfg_n(int n) {
    ConsensusConfig c;
    c.n = n;
    return c;
}

Proposal proposal(int leader, std::int64_t bytes, SimTime at = {}) { return {0, NodeId{leader}, at, {}, bytes}; }

Outage down(int node) { return {NodeId{node}, at_ms(0), at_ms(60000)}; }

}  // namespace

TEST_CASE("quorum arithmetic") {
    CHECK(cfg_n(4).f() == 1);
    CHECK(cfg_n(4).quorum() == 3);
    CHECK(cfg_n(5).f() == 1);
    CHECK(cfg_n(7).f() == 2);
    CHECK(cfg_n(7).quorum() == 5);
    CHECK(cfg_n(1).f() == 0);
    CHECK_THROWS_AS(cfg_n(0).validate(), std::invalid_argument);
    ConsensusConfig c = cfg_n(4);
    c.fast_path_timeout = Duration{0};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

// n = 4, 8 Mbps everywhere: block (1000 B) and control (256 B) messages both
// take 1 ms + 5 ms propagation; every verification costs 30 ms.
TEST_CASE("PBFT hand trace under uniform speed") {
    const auto net = uniform_net(4, 8.0);
    const auto out = run_pbft(proposal(0, 1000), at_ms(0), cfg_n(4), net);
    // pre-prepare lands at 6, verified at 36; prepares sent at 36 land at 42.
    // A backup verifies two prepares (72, 102) and is prepared after the
    // first; commits from the other backups land at 78 and are verified at
    // 132 and 162, giving the backup 2f+1 commits at 162. The leader only
    // reaches 2f prepares at 102 and commits at 192.
    REQUIRE(out.committed);
    CHECK_FALSE(out.used_fallback);
    CHECK(out.commit_time == at_ms(162));
    CHECK(out.finished_at == at_ms(162));
    REQUIRE(out.local_commits.size() == 4);
    CHECK(out.local_commits.back() == std::pair{NodeId{0}, at_ms(192)});
    CHECK(out.history.count(Phase::PrePrepare) == 3);
    CHECK(out.history.count(Phase::Prepare) == 9);   // 3 backups x 3 peers
    CHECK(out.history.count(Phase::Commit) == 12);   // all 4 nodes x 3 peers
    CHECK(out.history.count(Phase::Ack) == 0);
}

TEST_CASE("BigFoot fast path hand trace under uniform speed") {
    const auto net = uniform_net(4, 8.0);
    const auto out = run_bigfoot(proposal(0, 1000), at_ms(0), cfg_n(4), net);
    // acks sent at 36 reach the leader at 42; one aggregated check until 72;
    // certificates land at 78 and are verified at 108.
    REQUIRE(out.committed);
    CHECK_FALSE(out.used_fallback);
    CHECK(out.commit_time == at_ms(108));
    CHECK(out.local_commits.front() == std::pair{NodeId{0}, at_ms(72)});
    CHECK(out.history.count(Phase::Ack) == 3);
    CHECK(out.history.count(Phase::CommitCertificate) == 3);
    CHECK(out.history.count(Phase::Prepare) == 0);
}

TEST_CASE("BigFoot falls back to PBFT after the fast-path timeout") {
    const auto net = uniform_net(4, 8.0, {down(3)});
    const auto bf = run_bigfoot(proposal(0, 1000), at_ms(0), cfg_n(4), net);
    const auto pb = run_pbft(proposal(0, 1000), at_ms(0), cfg_n(4), net);
    // prepares start at 500: backups prepared at 536, leader at 566; a
    // backup's third commit (the leader's) is verified at 602, the leader
    // finishes at 626. Plain PBFT with the same node down ends at 162.
    REQUIRE(bf.committed);
    REQUIRE(pb.committed);
    CHECK(bf.used_fallback);
    CHECK(pb.commit_time == at_ms(162));
    CHECK(bf.commit_time == at_ms(626));
    CHECK(bf.commit_time - pb.commit_time > cfg_n(4).fast_path_timeout - Duration{100});
}

TEST_CASE("quorum boundaries with five producers") {
    const auto cfg = cfg_n(5);
    SUBCASE("two offline still commits") {
        const auto net = uniform_net(5, 10.0, {down(3), down(4)});
        for (Protocol p : kProtocols) {
            const auto out = run_consensus(p, proposal(1, 20000), at_ms(0), cfg, net);
            CHECK(out.committed);
            CHECK(out.local_commits.size() == 3);
            CHECK(out.used_fallback == (p == Protocol::BigFoot));
        }
    }
    SUBCASE("three offline cannot commit") {
        const auto net = uniform_net(5, 10.0, {down(2), down(3), down(4)});
        const auto pb = run_pbft(proposal(0, 20000), at_ms(1000), cfg, net);
        CHECK_FALSE(pb.committed);
        CHECK(pb.finished_at == at_ms(1000) + cfg.view_timeout());
        const auto bf = run_bigfoot(proposal(0, 20000), at_ms(1000), cfg, net);
        CHECK_FALSE(bf.committed);
        CHECK(bf.finished_at == at_ms(1000) + cfg.fast_path_timeout + cfg.view_timeout());
    }
    SUBCASE("offline leader cannot propose") {
        const auto net = uniform_net(5, 10.0, {down(0)});
        const auto out = run_pbft(proposal(0, 20000), at_ms(0), cfg, net);
        CHECK_FALSE(out.committed);
        CHECK(out.history.messages.empty());
        CHECK(out.history.participants.empty());
    }
}

TEST_CASE("fast path beats PBFT on every failure-free uniform-speed round") {
    RngStream r(2024, "dominance");
    for (int trial = 0; trial < 100; ++trial) {
        const int n = static_cast<int>(r.uniform_int(4, 10));
        const double speed = r.uniform(1.0, 20.0);
        // keep the block transfer inside the fast-path window; beyond it the
        // fast path cannot succeed even without failures
        const auto fits = static_cast<std::int64_t>(450.0 * speed * 125.0);
        const auto bytes = r.uniform_int(512, std::min<std::int64_t>(150000, fits));
        const int leader = static_cast<int>(r.uniform_int(0, n - 1));
        const auto net = uniform_net(n, speed);
        const SimTime at = at_ms(r.uniform_int(0, 20000));
        const auto pb = run_pbft(proposal(leader, bytes, at), at, cfg_n(n), net);
        const auto bf = run_bigfoot(proposal(leader, bytes, at), at, cfg_n(n), net);
        CAPTURE(n);
        CAPTURE(speed);
        CAPTURE(bytes);
        REQUIRE(pb.committed);
        REQUIRE(bf.committed);
        CHECK_FALSE(bf.used_fallback);
        CHECK(bf.commit_time < pb.commit_time);
    }
}

TEST_CASE("a single offline producer makes the fast path slower than PBFT") {
    RngStream r(31, "penalty");
    for (int trial = 0; trial < 100; ++trial) {
        const double speed = r.uniform(1.0, 20.0);
        const auto bytes = r.uniform_int(512, 60000);
        const int leader = static_cast<int>(r.uniform_int(0, 4));
        int off = static_cast<int>(r.uniform_int(0, 3));
        if (off >= leader) ++off;
        const auto net = uniform_net(5, speed, {down(off)});
        const auto pb = run_pbft(proposal(leader, bytes), at_ms(0), cfg_n(5), net);
        const auto bf = run_bigfoot(proposal(leader, bytes), at_ms(0), cfg_n(5), net);
        REQUIRE(pb.committed);
        REQUIRE(bf.committed);
        CHECK(bf.used_fallback);
        CHECK(bf.commit_time > pb.commit_time);
    }
}

TEST_CASE("band-limited heterogeneous speeds keep the fast path ahead") {
    // Speeds within 8..10 Mbps and 20 kB blocks: block-transfer spread is at
    // most 4 ms, far below one verification.
    RngStream r(77, "band");
    for (int trial = 0; trial < 50; ++trial) {
        SpeedMatrix m(5, 5);
        for (int a = 0; a < 5; ++a)
            for (int b = 0; b < 5; ++b) m(a, b) = r.uniform(8.0, 10.0);
        const auto net = net_of(m);
        const int leader = static_cast<int>(r.uniform_int(0, 4));
        const auto pb = run_pbft(proposal(leader, 20000), at_ms(0), cfg_n(5), net);
        const auto bf = run_bigfoot(proposal(leader, 20000), at_ms(0), cfg_n(5), net);
        CHECK(bf.commit_time < pb.commit_time);
    }
}

TEST_CASE("one slow leader link lets PBFT win") {
    // The fast path must wait for the slowest replica; PBFT's quorum does not.
    SpeedMatrix m = SpeedMatrix::Constant(4, 4, 20.0);
    m(0, 3) = 1.0;  // 50 kB takes 400 ms on this link
    const auto net = net_of(m);
    const auto pb = run_pbft(proposal(0, 50000), at_ms(0), cfg_n(4), net);
    const auto bf = run_bigfoot(proposal(0, 50000), at_ms(0), cfg_n(4), net);
    REQUIRE(bf.committed);
    CHECK_FALSE(bf.used_fallback);
    CHECK(pb.commit_time < bf.commit_time);
}

TEST_CASE("commit time is monotone in link speed") {
    RngStream r(5, "mono");
    for (int trial = 0; trial < 60; ++trial) {
        const double s1 = r.uniform(1.0, 20.0), s2 = r.uniform(1.0, 20.0);
        const double lo = std::min(s1, s2), hi = std::max(s1, s2);
        const auto bytes = r.uniform_int(512, 100000);
        for (Protocol p : kProtocols) {
            const auto slow = run_consensus(p, proposal(1, bytes), at_ms(0), cfg_n(5), uniform_net(5, lo));
            const auto fast = run_consensus(p, proposal(1, bytes), at_ms(0), cfg_n(5), uniform_net(5, hi));
            CHECK(fast.commit_time <= slow.commit_time);
        }
    }
}

TEST_CASE("safety, participation and determinism over random rounds") {
    RngStream r(99, "safety");
    for (int trial = 0; trial < 200; ++trial) {
        const int n = static_cast<int>(r.uniform_int(4, 7));
        const int k = n + static_cast<int>(r.uniform_int(0, 3));
        SpeedMatrix m(k, k);
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < k; ++b) m(a, b) = r.uniform(1.0, 15.0);
        std::vector<Outage> outages;
        for (int node = 0; node < k; ++node) {
            if (r.bernoulli(0.25)) {
                const auto s = r.uniform_int(0, 1500);
                outages.push_back({NodeId{node}, at_ms(s), at_ms(s + r.uniform_int(1, 3000))});
            }
        }
        const auto net = net_of(m, outages);
        const auto cfg = cfg_n(n);
        const Protocol p = r.bernoulli(0.5) ? Protocol::BigFoot : Protocol::Pbft;
        const auto prop = proposal(static_cast<int>(r.uniform_int(0, n - 1)), r.uniform_int(512, 80000));
        const auto a = run_consensus(p, prop, at_ms(0), cfg, net);
        const auto b = run_consensus(p, prop, at_ms(0), cfg, net);

        // deterministic
        CHECK(a.committed == b.committed);
        CHECK(a.commit_time == b.commit_time);
        CHECK(a.local_commits == b.local_commits);
        CHECK(a.history.messages.size() == b.history.messages.size());

        // committed iff a quorum of distinct nodes committed locally
        std::vector<NodeId> who;
        for (const auto& [node, t] : a.local_commits) {
            who.push_back(node);
            CHECK(net.is_online(node, t));
            CHECK(t >= at_ms(0));
        }
        std::ranges::sort(who);
        CHECK(std::ranges::adjacent_find(who) == who.end());
        CHECK(a.committed == (static_cast<int>(who.size()) >= cfg.quorum()));
        CHECK(std::ranges::is_sorted(a.local_commits, {}, &std::pair<NodeId, SimTime>::second));
        if (a.committed) CHECK(a.commit_time == a.local_commits[static_cast<std::size_t>(cfg.quorum() - 1)].second);

        // only producers take part, and only while online
        for (const auto& msg : a.history.messages) {
            CHECK(msg.sender.value < n);
            CHECK(msg.receiver.value < n);
            CHECK(net.is_online(msg.sender, msg.sent_at));
            CHECK(net.is_online(msg.receiver, msg.received_at));
            CHECK(msg.received_at > msg.sent_at);
            CHECK(a.history.participated(msg.sender));
        }
        CHECK(std::ranges::is_sorted(a.history.participants));
        for (NodeId part : a.history.participants) CHECK(part.value < n);
    }
}
