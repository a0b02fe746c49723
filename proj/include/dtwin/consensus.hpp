#pragma once

// Message-level models of PBFT and a BigFoot-style optimistic fast path with
// PBFT fallback, executed over the simulated network.

#include <dtwin/blockchain.hpp>
#include <dtwin/network.hpp>

namespace dtwin {

struct ConsensusConfig {
    int n = 5;                                  // producers taking part
    std::int64_t control_msg_bytes = 256;
    Duration fast_path_timeout{500};            // BigFoot fast-path window
    Duration verify{30};                        // per-message signature check, serial per node

    [[nodiscard]] int f() const { return (n - 1) / 3; }
    [[nodiscard]] int quorum() const { return 2 * f() + 1; }
    [[nodiscard]] Duration view_timeout() const { return 4 * fast_path_timeout; }

    /// Throws std::invalid_argument unless n >= 3f+1 with f >= 0 and all
    /// durations/sizes are sane.
    void validate() const;
};

struct ConsensusOutcome {
    bool committed = false;
    /// Instant the quorum-th distinct node locally committed (when committed).
    SimTime commit_time;
    /// When the round stopped holding the chain: commit_time, or the view
    /// timeout on failure.
    SimTime finished_at;
    bool used_fallback = false;
    ConsensusHistory history;
    /// Nodes that locally committed, with their commit instants (ascending).
    std::vector<std::pair<NodeId, SimTime>> local_commits;
};

/// Three-phase PBFT: pre-prepare (full block), all-to-all prepare, all-to-all
/// commit. A node is prepared on 2f prepares and commits on 2f+1 commits.
ConsensusOutcome run_pbft(const Proposal& proposal, SimTime at, const ConsensusConfig& cfg,
                          const NetworkModel& net);

/// Fast path: block to all replicas, one ack each straight to the leader; with
/// all n-1 acks before the fast-path timeout the leader verifies the
/// aggregated signature once and broadcasts a commit certificate. Otherwise
/// the prepare and commit phases of PBFT run after the timeout.
ConsensusOutcome run_bigfoot(const Proposal& proposal, SimTime at, const ConsensusConfig& cfg,
                             const NetworkModel& net);

ConsensusOutcome run_consensus(Protocol protocol, const Proposal& proposal, SimTime at, const ConsensusConfig& cfg,
                               const NetworkModel& net);

}  // namespace dtwin
