#include <dtwin/system.hpp>

#include <algorithm>
#include <stdexcept>

namespace dtwin {

void ChainConfig::validate() const {
    if (producers < 1 || producers > nodes) throw std::invalid_argument("need 1 <= M <= K");
    if (block_interval.count() <= 0) throw std::invalid_argument("block interval must be positive");
    if (max_txs == 0) throw std::invalid_argument("max_txs must be positive");
    if (header_bytes < 0) throw std::invalid_argument("negative header size");
    if (consensus.n != producers) throw std::invalid_argument("consensus.n must equal the producer count");
    consensus.validate();
}

Blockchain::Blockchain(ChainConfig cfg, NetworkModel net, std::vector<Transaction> txs, Protocol initial)
    : cfg_(cfg), net_(std::move(net)), txs_(std::move(txs)), committed_(txs_.size(), 0),
      pools_(static_cast<std::size_t>(cfg_.producers)), synced_(static_cast<std::size_t>(cfg_.nodes), 0),
      protocol_(initial), stranded_(txs_.size(), 0) {
    cfg_.validate();
    if (net_.schedule.node_count() != cfg_.nodes) throw std::invalid_argument("network size does not match K");

    for (std::size_t i = 0; i < txs_.size(); ++i) {
        Transaction& tx = txs_[i];
        if (tx.id != i) throw std::invalid_argument("transaction ids must be 0..N-1");
        if (i > 0 && tx.created_at < txs_[i - 1].created_at) throw std::invalid_argument("transactions not sorted");
        // An offline origin cannot create; the next online node does.
        for (int step = 0; step < cfg_.nodes && !net_.is_online(tx.origin, tx.created_at); ++step) {
            tx.origin = NodeId{(tx.origin.value + 1) % cfg_.nodes};
        }
        // Transactions created before time zero are a backlog that has
        // already reached every pool.
        const bool backlog = tx.created_at < SimTime{};
        bool delivered = false;
        for (int p = 0; p < cfg_.producers; ++p) {
            const NodeId producer{p};
            const SimTime arrival =
                producer == tx.origin || backlog
                    ? tx.created_at
                    : tx.created_at + net_.delay(tx.origin, producer, tx.size_bytes, tx.created_at);
            if (!net_.is_online(producer, arrival)) continue;
            pools_[static_cast<std::size_t>(p)].add({tx.created_at, arrival, tx.id});
            delivered = true;
        }
        if (!delivered) {
            ++undeliverable_;
            stranded_[i] = 1;
        }
    }

    for (const Outage& o : net_.failures.outages()) queue_.schedule(o.until, Resync{o.node});
    queue_.schedule(SimTime{}, SlotTick{0});
}

void Blockchain::run_until(SimTime t) {
    queue_.run_until(t, [this](const Event<Payload>& ev) {
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, SlotTick>) {
                    on_slot(p.slot, ev.fire_at);
                } else if constexpr (std::is_same_v<T, RoundDone>) {
                    on_round_done();
                } else {
                    if (net_.is_online(p.node, ev.fire_at)) {
                        synced_[static_cast<std::size_t>(p.node.value)] = static_cast<std::int64_t>(ledger_.size());
                    }
                }
            },
            ev.payload);
    });
}

std::variant<Proposal, MissedCycle> Blockchain::attempt_block(NodeId producer, SimTime at, std::size_t max_txs,
                                                              std::int64_t slot) const {
    if (!net_.is_online(producer, at)) return MissedCycle{slot, producer, at, MissReason::ProducerOffline};
    const auto ids = pool(producer).oldest(at, max_txs, committed_);
    if (ids.empty()) return MissedCycle{slot, producer, at, MissReason::EmptyPool};
    Proposal prop;
    prop.slot = slot;
    prop.producer = producer;
    prop.at = at;
    prop.size_bytes = cfg_.header_bytes;
    prop.txs.reserve(ids.size());
    for (auto id : ids) {
        prop.txs.push_back(txs_[id]);
        prop.size_bytes += txs_[id].size_bytes;
    }
    return prop;
}

const Block* Blockchain::commit_block(const Proposal& proposal, const ConsensusOutcome& outcome, Protocol protocol) {
    if (!outcome.committed) return nullptr;
    Block b;
    b.height = static_cast<std::int64_t>(ledger_.size());
    b.slot = proposal.slot;
    b.producer = proposal.producer;
    b.txs = proposal.txs;
    b.size_bytes = proposal.size_bytes;
    b.proposed_at = proposal.at;
    b.committed_at = outcome.commit_time;
    b.history = outcome.history;
    b.protocol = protocol;
    b.used_fallback = outcome.used_fallback;
    for (const auto& tx : b.txs) committed_[tx.id] = 1;
    ledger_.push_back(std::move(b));
    for (int n = 0; n < cfg_.nodes; ++n) {
        if (net_.is_online(NodeId{n}, outcome.commit_time)) {
            synced_[static_cast<std::size_t>(n)] = static_cast<std::int64_t>(ledger_.size());
        }
    }
    for (auto& p : pools_) p.compact(committed_);
    return &ledger_.back();
}

void Blockchain::on_slot(std::int64_t slot, SimTime t) {
    if (!in_flight_) {
        const NodeId producer = next_producer(slot, cfg_.producers);
        auto attempt = attempt_block(producer, t, cfg_.max_txs, slot);
        if (auto* missed = std::get_if<MissedCycle>(&attempt)) {
            missed_.push_back(*missed);
        } else {
            auto& prop = std::get<Proposal>(attempt);
            ConsensusOutcome outcome = run_consensus(protocol_, prop, t, cfg_.consensus, net_);
            const SimTime done = outcome.finished_at;
            in_flight_.emplace(std::move(prop), std::move(outcome));
            in_flight_protocol_ = protocol_;
            queue_.schedule(done, RoundDone{});
        }
    }
    queue_.schedule(t + cfg_.block_interval, SlotTick{slot + 1});
}

void Blockchain::on_round_done() {
    auto [prop, outcome] = std::move(*in_flight_);
    in_flight_.reset();
    if (!commit_block(prop, outcome, in_flight_protocol_)) {
        // Known lost once the round gives up.
        missed_.push_back(MissedCycle{prop.slot, prop.producer, outcome.finished_at, MissReason::ConsensusFailed});
    }
}

std::span<const Block> Blockchain::ledger_of(NodeId n) const {
    return std::span<const Block>(ledger_).first(static_cast<std::size_t>(ledger_height(n)));
}

const TransactionPool& Blockchain::pool(NodeId producer) const {
    if (producer.value < 0 || producer.value >= cfg_.producers) throw std::out_of_range("not a producer");
    return pools_[static_cast<std::size_t>(producer.value)];
}

std::size_t Blockchain::pool_size(NodeId producer) const { return pool(producer).pending(now(), committed_); }

std::span<const Block> Blockchain::blocks_in(SimTime from, SimTime to) const {
    // committed_at is non-decreasing along the ledger (rounds are sequential).
    auto lo = std::ranges::lower_bound(ledger_, from, {}, &Block::committed_at);
    auto hi = std::ranges::lower_bound(ledger_, to, {}, &Block::committed_at);
    return {lo, hi};
}

std::vector<MissedCycle> Blockchain::missed_in(SimTime from, SimTime to) const {
    std::vector<MissedCycle> out;
    for (const auto& m : missed_) {
        if (m.at >= from && m.at < to) out.push_back(m);
    }
    return out;
}

std::vector<Transaction> Blockchain::backlog(SimTime at) {
    while (open_from_ < txs_.size() && (committed_[open_from_] || stranded_[open_from_])) ++open_from_;
    std::vector<Transaction> out;
    for (std::size_t i = open_from_; i < txs_.size() && txs_[i].created_at < at; ++i) {
        if (!committed_[i] && !stranded_[i]) out.push_back(txs_[i]);
    }
    return out;
}

}  // namespace dtwin
