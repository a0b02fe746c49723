#include <dtwin/consensus.hpp>

#include <algorithm>
#include <stdexcept>

namespace dtwin {

void ConsensusConfig::validate() const {
    if (n < 1) throw std::invalid_argument("consensus needs at least one producer");
    if (n < 3 * f() + 1) throw std::invalid_argument("n must be at least 3f+1");
    if (control_msg_bytes < 0) throw std::invalid_argument("negative control message size");
    if (fast_path_timeout.count() <= 0) throw std::invalid_argument("fast-path timeout must be positive");
    if (verify.count() < 0) throw std::invalid_argument("negative verification time");
}

namespace {

enum class Mode : std::uint8_t { Pbft, FastPath, Fallback };

struct RoundEvent {
    enum class Kind : std::uint8_t { Deliver, Processed, CertReady, FastTimeout } kind;
    std::size_t msg = 0;
};

struct NodeState {
    SimTime cpu_free;
    bool preprepared = false;
    bool sent_prepare = false;
    bool prepared = false;
    bool committed = false;
    int prepares = 0;
    int commits = 0;
};

/// One consensus round on its own event queue. Messages are delivered after
/// the link transfer time; each received message (except fast-path acks,
/// which are aggregated) then costs `verify` of serial CPU at the receiver.
class Round {
public:
    Round(const Proposal& proposal, SimTime at, const ConsensusConfig& cfg, const NetworkModel& net, Mode mode)
        : cfg_(cfg), net_(net), leader_(proposal.producer), at_(at), mode_(mode),
          block_bytes_(proposal.size_bytes), nodes_(static_cast<std::size_t>(cfg.n)) {
        cfg_.validate();
        if (leader_.value < 0 || leader_.value >= cfg_.n) throw std::invalid_argument("leader is not a producer");
        for (auto& n : nodes_) n.cpu_free = at;
    }

    ConsensusOutcome run() {
        queue_.run_until(at_, [](const auto&) {});
        const SimTime deadline = mode_ == Mode::Pbft ? at_ + cfg_.view_timeout()
                                                     : at_ + cfg_.fast_path_timeout + cfg_.view_timeout();
        if (net_.is_online(leader_, at_)) {
            state(leader_).preprepared = true;
            for (int r = 0; r < cfg_.n; ++r) {
                if (r != leader_.value) send(leader_, NodeId{r}, Phase::PrePrepare, block_bytes_, at_);
            }
            if (mode_ == Mode::FastPath) queue_.schedule(at_ + cfg_.fast_path_timeout, {RoundEvent::Kind::FastTimeout});
        }
        queue_.run_until(deadline, [this](const Event<RoundEvent>& ev) { handle(ev); });
        return finish(deadline);
    }

private:
    NodeState& state(NodeId n) { return nodes_[static_cast<std::size_t>(n.value)]; }

    void send(NodeId from, NodeId to, Phase phase, std::int64_t bytes, SimTime t) {
        if (!net_.is_online(from, t)) return;
        const SimTime arrival = t + net_.delay(from, to, bytes, t);
        messages_.push_back({from, to, phase, bytes, t, arrival});
        delivered_.push_back(false);
        queue_.schedule(arrival, {RoundEvent::Kind::Deliver, messages_.size() - 1});
    }

    void broadcast(NodeId from, Phase phase, SimTime t) {
        for (int r = 0; r < cfg_.n; ++r) {
            if (r != from.value) send(from, NodeId{r}, phase, cfg_.control_msg_bytes, t);
        }
    }

    void handle(const Event<RoundEvent>& ev) {
        const SimTime t = ev.fire_at;
        switch (ev.payload.kind) {
            case RoundEvent::Kind::Deliver: on_deliver(ev.payload.msg, t); break;
            case RoundEvent::Kind::Processed: on_processed(ev.payload.msg, t); break;
            case RoundEvent::Kind::CertReady: on_cert_ready(t); break;
            case RoundEvent::Kind::FastTimeout: on_fast_timeout(t); break;
        }
    }

    void on_deliver(std::size_t idx, SimTime t) {
        const MessageRecord& m = messages_[idx];
        if (!net_.is_online(m.receiver, t)) return;  // dropped, never queued
        delivered_[idx] = true;
        if (m.phase == Phase::Ack) {
            on_ack(t);
            return;
        }
        NodeState& s = state(m.receiver);
        s.cpu_free = std::max(t, s.cpu_free) + cfg_.verify;
        queue_.schedule(s.cpu_free, {RoundEvent::Kind::Processed, idx});
    }

    void on_processed(std::size_t idx, SimTime t) {
        const MessageRecord m = messages_[idx];
        const NodeId self = m.receiver;
        if (!net_.is_online(self, t)) return;
        NodeState& s = state(self);
        switch (m.phase) {
            case Phase::PrePrepare:
                s.preprepared = true;
                if (mode_ == Mode::FastPath) {
                    send(self, leader_, Phase::Ack, cfg_.control_msg_bytes, t);
                } else {
                    send_prepare(self, t);
                }
                try_prepare(self, t);
                break;
            case Phase::Prepare:
                ++s.prepares;
                try_prepare(self, t);
                break;
            case Phase::Commit:
                ++s.commits;
                try_commit(self, t);
                break;
            case Phase::CommitCertificate:
                if (s.preprepared) local_commit(self, t);
                break;
            case Phase::Ack:
                break;
        }
    }

    void send_prepare(NodeId self, SimTime t) {
        NodeState& s = state(self);
        if (self == leader_ || s.sent_prepare) return;
        s.sent_prepare = true;
        ++s.prepares;  // a backup's own prepare counts towards 2f
        broadcast(self, Phase::Prepare, t);
    }

    void try_prepare(NodeId self, SimTime t) {
        if (mode_ == Mode::FastPath) return;
        NodeState& s = state(self);
        if (s.prepared || !s.preprepared || s.prepares < 2 * cfg_.f()) return;
        s.prepared = true;
        ++s.commits;  // own commit
        broadcast(self, Phase::Commit, t);
        try_commit(self, t);
    }

    void try_commit(NodeId self, SimTime t) {
        NodeState& s = state(self);
        if (s.prepared && s.commits >= cfg_.quorum()) local_commit(self, t);
    }

    void local_commit(NodeId self, SimTime t) {
        NodeState& s = state(self);
        if (s.committed) return;
        s.committed = true;
        commits_.emplace_back(self, t);
    }

    void on_ack(SimTime t) {
        if (mode_ != Mode::FastPath || fast_ok_) return;
        if (++acks_ < cfg_.n - 1 || t >= at_ + cfg_.fast_path_timeout) return;
        fast_ok_ = true;
        NodeState& s = state(leader_);
        s.cpu_free = std::max(t, s.cpu_free) + cfg_.verify;  // one aggregated signature check
        queue_.schedule(s.cpu_free, {RoundEvent::Kind::CertReady});
    }

    void on_cert_ready(SimTime t) {
        if (!net_.is_online(leader_, t)) return;
        local_commit(leader_, t);
        broadcast(leader_, Phase::CommitCertificate, t);
    }

    void on_fast_timeout(SimTime t) {
        if (fast_ok_) return;
        mode_ = Mode::Fallback;
        used_fallback_ = true;
        for (int r = 0; r < cfg_.n; ++r) {
            const NodeId id{r};
            if (state(id).preprepared && net_.is_online(id, t)) send_prepare(id, t);
        }
        for (int r = 0; r < cfg_.n; ++r) try_prepare(NodeId{r}, t);
    }

    ConsensusOutcome finish(SimTime deadline) {
        ConsensusOutcome out;
        out.used_fallback = used_fallback_;
        out.local_commits = commits_;
        const auto q = static_cast<std::size_t>(cfg_.quorum());
        out.committed = commits_.size() >= q;
        if (out.committed) {
            out.commit_time = commits_[q - 1].second;
            out.finished_at = out.commit_time;
        } else {
            out.finished_at = deadline;
        }
        std::vector<NodeId> participants;
        if (net_.is_online(leader_, at_)) participants.push_back(leader_);
        for (std::size_t i = 0; i < messages_.size(); ++i) {
            if (!delivered_[i]) continue;
            out.history.messages.push_back(messages_[i]);
            participants.push_back(messages_[i].sender);
        }
        std::ranges::sort(participants);
        participants.erase(std::unique(participants.begin(), participants.end()), participants.end());
        out.history.participants = std::move(participants);
        return out;
    }

    ConsensusConfig cfg_;
    const NetworkModel& net_;
    NodeId leader_;
    SimTime at_;
    Mode mode_;
    std::int64_t block_bytes_;
    std::vector<NodeState> nodes_;
    EventQueue<RoundEvent> queue_;
    std::vector<MessageRecord> messages_;
    std::vector<char> delivered_;
    std::vector<std::pair<NodeId, SimTime>> commits_;
    int acks_ = 0;
    bool fast_ok_ = false;
    bool used_fallback_ = false;
};

}  // namespace

ConsensusOutcome run_pbft(const Proposal& proposal, SimTime at, const ConsensusConfig& cfg, const NetworkModel& net) {
    return Round(proposal, at, cfg, net, Mode::Pbft).run();
}

ConsensusOutcome run_bigfoot(const Proposal& proposal, SimTime at, const ConsensusConfig& cfg,
                             const NetworkModel& net) {
    return Round(proposal, at, cfg, net, Mode::FastPath).run();
}

ConsensusOutcome run_consensus(Protocol protocol, const Proposal& proposal, SimTime at, const ConsensusConfig& cfg,
                               const NetworkModel& net) {
    return protocol == Protocol::Pbft ? run_pbft(proposal, at, cfg, net) : run_bigfoot(proposal, at, cfg, net);
}

}  // namespace dtwin
