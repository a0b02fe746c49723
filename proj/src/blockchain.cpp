#include <dtwin/blockchain.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dtwin {

std::string_view to_string(Protocol p) { return p == Protocol::Pbft ? "PBFT" : "BIGFOOT"; }

Protocol protocol_from_string(std::string_view s) {
    if (s == "PBFT" || s == "pbft") return Protocol::Pbft;
    if (s == "BIGFOOT" || s == "bigfoot") return Protocol::BigFoot;
    throw std::invalid_argument("unknown protocol: " + std::string(s));
}

std::string_view to_string(Phase p) {
    switch (p) {
        case Phase::PrePrepare: return "pre-prepare";
        case Phase::Prepare: return "prepare";
        case Phase::Commit: return "commit";
        case Phase::Ack: return "ack";
        case Phase::CommitCertificate: return "commit-cert";
    }
    return "?";
}

std::string_view to_string(MissReason r) {
    switch (r) {
        case MissReason::ProducerOffline: return "producer-offline";
        case MissReason::EmptyPool: return "empty-pool";
        case MissReason::ConsensusFailed: return "consensus-failed";
    }
    return "?";
}

bool ConsensusHistory::participated(NodeId n) const { return std::ranges::binary_search(participants, n); }

std::size_t ConsensusHistory::count(Phase p) const {
    return static_cast<std::size_t>(std::ranges::count(messages, p, &MessageRecord::phase));
}

std::int64_t total_latency_ms(const Block& block) {
    std::int64_t sum = 0;
    for (const auto& tx : block.txs) sum += (block.committed_at - tx.created_at).count();
    return sum;
}

double avg_transaction_latency(const Block& block) {
    if (block.txs.empty()) throw std::invalid_argument("average latency of an empty block");
    return static_cast<double>(total_latency_ms(block)) / 1000.0 / static_cast<double>(block.txs.size());
}

std::optional<double> window_latency(std::span<const Block> blocks, SimTime from, SimTime to) {
    std::int64_t sum = 0;
    std::size_t count = 0;
    for (const auto& b : blocks) {
        if (b.committed_at < from || b.committed_at >= to) continue;
        sum += total_latency_ms(b);
        count += b.txs.size();
    }
    if (count == 0) return std::nullopt;
    return static_cast<double>(sum) / 1000.0 / static_cast<double>(count);
}

std::vector<Transaction> generate_transactions(double rate_tps, const SizeSpec& size, Duration horizon,
                                               RngStream& stream, SimTime start, std::uint64_t first_id,
                                               int node_count) {
    if (!(rate_tps > 0)) throw std::invalid_argument("transaction rate must be positive");
    if (size.min_bytes <= 0 || size.max_bytes < size.min_bytes) throw std::invalid_argument("bad size spec");
    std::vector<Transaction> out;
    if (horizon.count() <= 0) return out;
    const SimTime end = start + horizon;
    double clock_ms = static_cast<double>(start.ms);
    std::uint64_t id = first_id;
    while (true) {
        clock_ms += stream.exponential(rate_tps) * 1000.0;
        const auto created = static_cast<std::int64_t>(std::floor(clock_ms));
        if (created >= end.ms) break;
        Transaction tx;
        tx.id = id++;
        tx.created_at = at_ms(created);
        tx.size_bytes = size.draw(stream);
        tx.origin = NodeId{static_cast<int>(stream.uniform_int(0, node_count - 1))};
        out.push_back(tx);
    }
    return out;
}

void TransactionPool::add(Entry e) {
    // Creation order is the generation order, so appends stay sorted; fall
    // back to an ordered insert otherwise.
    if (entries_.empty() || !(e.created_at < entries_.back().created_at)) {
        entries_.push_back(e);
        return;
    }
    auto it = std::upper_bound(entries_.begin() + static_cast<std::ptrdiff_t>(head_), entries_.end(), e,
                               [](const Entry& a, const Entry& b) { return a.created_at < b.created_at; });
    entries_.insert(it, e);
}

std::vector<std::uint64_t> TransactionPool::oldest(SimTime at, std::size_t max_txs,
                                                   const std::vector<char>& committed) const {
    std::vector<std::uint64_t> out;
    for (std::size_t i = head_; i < entries_.size() && out.size() < max_txs; ++i) {
        const Entry& e = entries_[i];
        if (e.created_at > at) break;
        if (e.arrival > at || committed[e.tx]) continue;
        out.push_back(e.tx);
    }
    return out;
}

std::size_t TransactionPool::pending(SimTime at, const std::vector<char>& committed) const {
    std::size_t n = 0;
    for (std::size_t i = head_; i < entries_.size(); ++i) {
        const Entry& e = entries_[i];
        if (e.created_at > at) break;
        if (e.arrival <= at && !committed[e.tx]) ++n;
    }
    return n;
}

bool TransactionPool::contains(std::uint64_t tx, SimTime at, const std::vector<char>& committed) const {
    if (committed[tx]) return false;
    for (std::size_t i = head_; i < entries_.size(); ++i) {
        if (entries_[i].created_at > at) break;
        if (entries_[i].tx == tx) return entries_[i].arrival <= at;
    }
    return false;
}

void TransactionPool::compact(const std::vector<char>& committed) {
    while (head_ < entries_.size() && committed[entries_[head_].tx]) ++head_;
    if (head_ > 4096 && head_ * 2 > entries_.size()) {
        entries_.erase(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(head_));
        head_ = 0;
    }
}

}  // namespace dtwin
