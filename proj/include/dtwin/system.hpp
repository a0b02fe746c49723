#pragma once

#include <dtwin/blockchain.hpp>
#include <dtwin/consensus.hpp>
#include <dtwin/network.hpp>

#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace dtwin {

struct ChainConfig {
    int nodes = 8;       // K
    int producers = 5;   // M
    Duration block_interval{1000};
    std::size_t max_txs = 256;
    std::int64_t header_bytes = 512;
    ConsensusConfig consensus;

    void validate() const;
};

/// The physical blockchain: producers take round-robin slots every block
/// interval, pack the oldest pooled transactions and run the selected
/// consensus protocol. Rounds are sequential; a slot that comes up while a
/// round is still running is skipped.
class Blockchain {
public:
    /// `txs` must be sorted by creation time with ids 0..N-1.
    Blockchain(ChainConfig cfg, NetworkModel net, std::vector<Transaction> txs, Protocol initial = Protocol::Pbft);

    void set_protocol(Protocol p) { protocol_ = p; }
    [[nodiscard]] Protocol protocol() const { return protocol_; }

    void run_until(SimTime t);
    [[nodiscard]] SimTime now() const { return queue_.now(); }

    /// Round-robin slot handling without consensus: a proposal with the
    /// oldest transactions, or a missed cycle (offline producer, empty pool).
    [[nodiscard]] std::variant<Proposal, MissedCycle> attempt_block(NodeId producer, SimTime at, std::size_t max_txs,
                                                                    std::int64_t slot = 0) const;

    /// Appends the block to every online node's ledger and removes its
    /// transactions from all pools. Returns nullptr (no change) when the
    /// outcome did not commit.
    const Block* commit_block(const Proposal& proposal, const ConsensusOutcome& outcome, Protocol protocol);

    [[nodiscard]] const ChainConfig& config() const { return cfg_; }
    [[nodiscard]] const NetworkModel& network() const { return net_; }
    [[nodiscard]] const std::vector<Block>& ledger() const { return ledger_; }
    [[nodiscard]] const std::vector<MissedCycle>& missed_cycles() const { return missed_; }
    [[nodiscard]] const std::vector<Transaction>& transactions() const { return txs_; }
    [[nodiscard]] bool is_committed(std::uint64_t tx) const { return committed_[tx] != 0; }

    /// Height of a node's local ledger; offline nodes lag until they return.
    [[nodiscard]] std::int64_t ledger_height(NodeId n) const { return synced_[static_cast<std::size_t>(n.value)]; }
    [[nodiscard]] std::span<const Block> ledger_of(NodeId n) const;

    [[nodiscard]] const TransactionPool& pool(NodeId producer) const;
    [[nodiscard]] std::size_t pool_size(NodeId producer) const;

    /// Blocks committed in [from, to) and missed cycles whose slot lies in it.
    [[nodiscard]] std::span<const Block> blocks_in(SimTime from, SimTime to) const;
    [[nodiscard]] std::vector<MissedCycle> missed_in(SimTime from, SimTime to) const;

    /// Transactions whose broadcast reached no producer pool.
    [[nodiscard]] std::size_t undeliverable() const { return undeliverable_; }

    /// Transactions created before `at` that are not yet committed and can
    /// still be, oldest first. Amortised by a cursor past the committed prefix.
    std::vector<Transaction> backlog(SimTime at);

private:
    struct SlotTick { std::int64_t slot; };
    struct RoundDone {};
    struct Resync { NodeId node; };
    using Payload = std::variant<SlotTick, RoundDone, Resync>;

    void on_slot(std::int64_t slot, SimTime t);
    void on_round_done();

    ChainConfig cfg_;
    NetworkModel net_;
    std::vector<Transaction> txs_;
    std::vector<char> committed_;
    std::vector<TransactionPool> pools_;
    std::vector<Block> ledger_;
    std::vector<MissedCycle> missed_;
    std::vector<std::int64_t> synced_;
    EventQueue<Payload> queue_;
    Protocol protocol_;
    std::optional<std::pair<Proposal, ConsensusOutcome>> in_flight_;
    Protocol in_flight_protocol_ = Protocol::Pbft;
    std::size_t undeliverable_ = 0;
    std::size_t open_from_ = 0;
    std::vector<char> stranded_;  // reached no pool
};

}  // namespace dtwin
