#include <dtwin/network.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dtwin {

NetworkSchedule::NetworkSchedule(Duration interval, std::vector<SpeedMatrix> speeds)
    : interval_(interval), speeds_(std::move(speeds)) {
    if (interval_.count() <= 0) throw std::invalid_argument("network interval must be positive");
    if (speeds_.empty()) throw std::invalid_argument("network schedule needs at least one interval");
    const auto n = speeds_.front().rows();
    for (const auto& m : speeds_) {
        if (m.rows() != n || m.cols() != n) throw std::invalid_argument("speed matrices must be K x K");
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i != j && !(m(i, j) > 0)) throw std::invalid_argument("link speeds must be positive");
            }
        }
    }
}

NetworkSchedule NetworkSchedule::constant(const SpeedMatrix& speeds, Duration interval, std::size_t intervals) {
    return NetworkSchedule(interval, std::vector<SpeedMatrix>(intervals, speeds));
}

std::size_t NetworkSchedule::interval_index(SimTime t) const {
    if (t.ms < 0 || t >= horizon()) {
        throw std::out_of_range("time " + std::to_string(t.ms) + " ms outside network horizon");
    }
    return static_cast<std::size_t>(t.ms / interval_.count());
}

double NetworkSchedule::speed_at(NodeId from, NodeId to, SimTime t) const {
    return speeds_[interval_index(t)](from.value, to.value);
}

FailureSchedule::FailureSchedule(int node_count, std::vector<Outage> outages) : outages_(std::move(outages)) {
    for (const auto& o : outages_) {
        if (o.node.value < 0 || o.node.value >= node_count) throw std::invalid_argument("outage node out of range");
        if (o.until < o.from) throw std::invalid_argument("outage ends before it starts");
    }
    std::ranges::sort(outages_, [](const Outage& a, const Outage& b) {
        return std::tie(a.node, a.from) < std::tie(b.node, b.from);
    });
    offsets_.assign(static_cast<std::size_t>(node_count) + 1, 0);
    for (const auto& o : outages_) ++offsets_[static_cast<std::size_t>(o.node.value) + 1];
    for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    for (int n = 0; n < node_count; ++n) {
        auto span = outages_of(NodeId{n});
        for (std::size_t i = 1; i < span.size(); ++i) {
            if (span[i].from < span[i - 1].until) throw std::invalid_argument("overlapping outages for one node");
        }
    }
}

std::span<const Outage> FailureSchedule::outages_of(NodeId node) const {
    const auto idx = static_cast<std::size_t>(node.value);
    if (idx + 1 >= offsets_.size()) return {};
    return std::span<const Outage>(outages_).subspan(offsets_[idx], offsets_[idx + 1] - offsets_[idx]);
}

bool FailureSchedule::is_online(NodeId node, SimTime t) const {
    auto span = outages_of(node);
    // First outage starting after t; the candidate is the one before it.
    auto it = std::upper_bound(span.begin(), span.end(), t,
                               [](SimTime value, const Outage& o) { return value < o.from; });
    if (it == span.begin()) return true;
    --it;
    return !(it->from <= t && t < it->until);
}

Duration transfer_time(std::int64_t size_bytes, double speed_mbps, Duration propagation) {
    if (size_bytes < 0) throw std::invalid_argument("negative message size");
    if (!(speed_mbps > 0)) throw std::invalid_argument("link speed must be positive");
    // bits / (Mbit/s * 1000) = milliseconds
    const double ms = 8.0 * static_cast<double>(size_bytes) / (speed_mbps * 1000.0);
    const auto whole = static_cast<std::int64_t>(std::ceil(ms - 1e-9));
    return Duration{std::max<std::int64_t>(whole, 0)} + propagation;
}

int round_mbps(double mbps) { return static_cast<int>(std::round(mbps)); }

SpeedBounds true_bounds(const NetworkSchedule& network, const FailureSchedule& failures, SimTime t,
                        std::span<const NodeId> producers) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    const SpeedMatrix& m = network.matrix_at(t);
    std::size_t pairs = 0;
    for (NodeId a : producers) {
        if (!failures.is_online(a, t)) continue;
        for (NodeId b : producers) {
            if (a == b || !failures.is_online(b, t)) continue;
            lo = std::min(lo, m(a.value, b.value));
            hi = std::max(hi, m(a.value, b.value));
            ++pairs;
        }
    }
    if (pairs == 0) throw DegenerateBoundsError("fewer than two online producers");
    return {round_mbps(lo), round_mbps(hi)};
}

std::vector<NodeId> producer_ids(int count) {
    std::vector<NodeId> ids;
    ids.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) ids.push_back(NodeId{i});
    return ids;
}

}  // namespace dtwin
