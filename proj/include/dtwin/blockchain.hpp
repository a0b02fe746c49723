#pragma once

// Ledger objects of the simulated permissioned chain and the latency metric.

#include <dtwin/network.hpp>
#include <dtwin/sim_engine.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace dtwin {

enum class Protocol : std::uint8_t { Pbft = 0, BigFoot = 1 };

inline constexpr std::array<Protocol, 2> kProtocols{Protocol::Pbft, Protocol::BigFoot};

std::string_view to_string(Protocol p);
Protocol protocol_from_string(std::string_view s);

struct Transaction {
    std::uint64_t id = 0;
    std::int64_t size_bytes = 0;
    SimTime created_at;
    NodeId origin;
};

enum class Phase : std::uint8_t { PrePrepare, Prepare, Commit, Ack, CommitCertificate };

std::string_view to_string(Phase p);

struct MessageRecord {
    NodeId sender;
    NodeId receiver;
    Phase phase = Phase::PrePrepare;
    std::int64_t size_bytes = 0;
    SimTime sent_at;
    SimTime received_at;
};

/// Timestamped record of one consensus round, carried in the block's extra
/// data. `participants` is sorted and holds every node that sent a delivered
/// message.
struct ConsensusHistory {
    std::vector<MessageRecord> messages;
    std::vector<NodeId> participants;

    [[nodiscard]] bool participated(NodeId n) const;
    [[nodiscard]] std::size_t count(Phase p) const;
};

struct Block {
    std::int64_t height = 0;
    std::int64_t slot = 0;
    NodeId producer;
    std::vector<Transaction> txs;
    std::int64_t size_bytes = 0;
    SimTime proposed_at;
    SimTime committed_at;
    ConsensusHistory history;
    Protocol protocol = Protocol::Pbft;
    bool used_fallback = false;
};

/// Transactions selected by a producer at its slot, before consensus.
struct Proposal {
    std::int64_t slot = 0;
    NodeId producer;
    SimTime at;
    std::vector<Transaction> txs;
    std::int64_t size_bytes = 0;
};

enum class MissReason : std::uint8_t { ProducerOffline, EmptyPool, ConsensusFailed };

std::string_view to_string(MissReason r);

struct MissedCycle {
    std::int64_t slot = 0;
    NodeId producer;
    SimTime at;
    MissReason reason = MissReason::ProducerOffline;
};

/// Round-robin rotation: the producer owning a slot.
constexpr NodeId next_producer(std::int64_t slot, int producers) {
    return NodeId{static_cast<int>(slot % producers)};
}

/// Mean of (committed_at - created_at) over the block, in seconds. Throws on
/// an empty block.
double avg_transaction_latency(const Block& block);

/// Latency sum in ms over a block's transactions (exact).
std::int64_t total_latency_ms(const Block& block);

/// Transaction-weighted mean latency (seconds) of the blocks committed in
/// [from, to). nullopt means the window had no blocks.
std::optional<double> window_latency(std::span<const Block> blocks, SimTime from, SimTime to);

/// Uniform integer transaction size in [min_bytes, max_bytes].
struct SizeSpec {
    std::int64_t min_bytes = 512;
    std::int64_t max_bytes = 512;

    static SizeSpec fixed(std::int64_t bytes) { return {bytes, bytes}; }
    std::int64_t draw(RngStream& rng) const { return rng.uniform_int(min_bytes, max_bytes); }
};

/// Poisson arrivals with `rate_tps` per second over [start, start + horizon).
/// Ids are assigned from `first_id`; origins are uniform over [0, node_count).
std::vector<Transaction> generate_transactions(double rate_tps, const SizeSpec& size, Duration horizon,
                                               RngStream& stream, SimTime start = {}, std::uint64_t first_id = 0,
                                               int node_count = 1);

/// One producer's pool. Entries are kept in creation order (FIFO); an entry
/// becomes visible once its broadcast reaches the producer.
class TransactionPool {
public:
    struct Entry {
        SimTime created_at;
        SimTime arrival;
        std::uint64_t tx;
    };

    void add(Entry e);

    /// Oldest up to `max_txs` uncommitted entries that had arrived by `at`.
    /// `committed` is indexed by transaction id.
    [[nodiscard]] std::vector<std::uint64_t> oldest(SimTime at, std::size_t max_txs,
                                                    const std::vector<char>& committed) const;

    /// Number of uncommitted entries that had arrived by `at`.
    [[nodiscard]] std::size_t pending(SimTime at, const std::vector<char>& committed) const;

    /// Drops committed entries from the front.
    void compact(const std::vector<char>& committed);

    [[nodiscard]] bool contains(std::uint64_t tx, SimTime at, const std::vector<char>& committed) const;

private:
    std::vector<Entry> entries_;
    std::size_t head_ = 0;
};

}  // namespace dtwin
