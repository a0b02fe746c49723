#pragma once

#include <dtwin/sim_engine.hpp>

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace dtwin {

/// Index of a node in [0, K). Producers occupy [0, M).
struct NodeId {
    int value = 0;
    constexpr auto operator<=>(const NodeId&) const = default;
};

/// Link speeds in Mbps; row = sender, column = receiver. Diagonal unused.
using SpeedMatrix = Eigen::MatrixXd;

/// Piecewise-constant link speeds over half-open intervals [k*TI, (k+1)*TI).
class NetworkSchedule {
public:
    NetworkSchedule() = default;
    NetworkSchedule(Duration interval, std::vector<SpeedMatrix> speeds);

    /// Every interval uses the same matrix.
    static NetworkSchedule constant(const SpeedMatrix& speeds, Duration interval, std::size_t intervals);

    [[nodiscard]] Duration interval() const { return interval_; }
    [[nodiscard]] std::size_t interval_count() const { return speeds_.size(); }
    [[nodiscard]] SimTime horizon() const { return at_ms(interval_.count() * static_cast<std::int64_t>(speeds_.size())); }
    [[nodiscard]] int node_count() const { return speeds_.empty() ? 0 : static_cast<int>(speeds_.front().rows()); }
    [[nodiscard]] const std::vector<SpeedMatrix>& matrices() const { return speeds_; }

    [[nodiscard]] std::size_t interval_index(SimTime t) const;
    [[nodiscard]] const SpeedMatrix& matrix_at(SimTime t) const { return speeds_[interval_index(t)]; }
    [[nodiscard]] double speed_at(NodeId from, NodeId to, SimTime t) const;

private:
    Duration interval_{0};
    std::vector<SpeedMatrix> speeds_;
};

struct Outage {
    NodeId node;
    SimTime from;
    SimTime until;  // exclusive
};

/// Node outages; a node is offline on [from, until).
class FailureSchedule {
public:
    FailureSchedule() = default;
    FailureSchedule(int node_count, std::vector<Outage> outages);

    [[nodiscard]] bool is_online(NodeId node, SimTime t) const;
    [[nodiscard]] const std::vector<Outage>& outages() const { return outages_; }
    [[nodiscard]] std::span<const Outage> outages_of(NodeId node) const;

private:
    std::vector<Outage> outages_;        // sorted by (node, from)
    std::vector<std::size_t> offsets_;   // per-node ranges into outages_
};

class DegenerateBoundsError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct SpeedBounds {
    int low = 0;   // Mbps
    int high = 0;  // Mbps
    constexpr auto operator<=>(const SpeedBounds&) const = default;
};

inline constexpr Duration kDefaultPropagation{5};

/// ceil(8 * size / speed) in ms plus a fixed propagation delay.
Duration transfer_time(std::int64_t size_bytes, double speed_mbps, Duration propagation = kDefaultPropagation);

/// Rounds half away from zero to the nearest integer Mbps.
int round_mbps(double mbps);

/// Ground truth (N_L, N_H): rounded min/max speed over ordered pairs of
/// distinct producers that are online at t.
SpeedBounds true_bounds(const NetworkSchedule& network, const FailureSchedule& failures, SimTime t,
                        std::span<const NodeId> producers);

/// The physical network as seen by message senders.
struct NetworkModel {
    NetworkSchedule schedule;
    FailureSchedule failures;
    Duration propagation = kDefaultPropagation;

    [[nodiscard]] bool is_online(NodeId node, SimTime t) const { return failures.is_online(node, t); }
    [[nodiscard]] double speed_at(NodeId from, NodeId to, SimTime t) const { return schedule.speed_at(from, to, t); }
    /// Delivery delay of a message sent at t. Sends after the schedule
    /// horizon use the last interval's speeds.
    [[nodiscard]] Duration delay(NodeId from, NodeId to, std::int64_t size_bytes, SimTime t) const {
        const SimTime last = schedule.horizon() - Duration{1};
        return transfer_time(size_bytes, speed_at(from, to, t < last ? t : last), propagation);
    }
};

std::vector<NodeId> producer_ids(int count);

}  // namespace dtwin
