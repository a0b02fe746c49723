#pragma once

// Deterministic discrete-event core: integer millisecond clock, an ordered
// event queue and named pseudo-random streams derived from one master seed.

#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dtwin {

using Duration = std::chrono::milliseconds;

/// Milliseconds since simulation start. Exact integer arithmetic only.
struct SimTime {
    std::int64_t ms = 0;

    constexpr auto operator<=>(const SimTime&) const = default;

    constexpr SimTime& operator+=(Duration d) {
        ms += d.count();
        return *this;
    }
    [[nodiscard]] constexpr double seconds() const { return static_cast<double>(ms) / 1000.0; }
};

constexpr SimTime operator+(SimTime t, Duration d) { return SimTime{t.ms + d.count()}; }
constexpr SimTime operator-(SimTime t, Duration d) { return SimTime{t.ms - d.count()}; }
constexpr Duration operator-(SimTime a, SimTime b) { return Duration{a.ms - b.ms}; }

constexpr SimTime at_ms(std::int64_t ms) { return SimTime{ms}; }
constexpr SimTime at_seconds(std::int64_t s) { return SimTime{s * 1000}; }

class CausalityError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

template <typename Payload>
struct Event {
    SimTime fire_at;
    std::uint64_t seq = 0;
    Payload payload;
};

/// Event queue ordered by (fire_at, seq). Events at the same instant fire in
/// insertion order; scheduling into the past throws CausalityError.
template <typename Payload>
class EventQueue {
public:
    using event_type = Event<Payload>;

    [[nodiscard]] SimTime now() const { return now_; }
    [[nodiscard]] bool empty() const { return heap_.empty(); }
    [[nodiscard]] std::size_t size() const { return heap_.size(); }

    [[nodiscard]] std::optional<SimTime> next_time() const {
        if (heap_.empty()) return std::nullopt;
        return heap_.top().fire_at;
    }

    void schedule(SimTime at, Payload payload) {
        if (at < now_) {
            throw CausalityError("event scheduled at " + std::to_string(at.ms) +
                                 " ms, before now=" + std::to_string(now_.ms) + " ms");
        }
        heap_.push(event_type{at, next_seq_++, std::move(payload)});
    }

    /// Fires every event with fire_at <= t, then sets now() to t. The handler
    /// receives `const event_type&` and may schedule further events.
    template <typename Handler>
    std::size_t run_until(SimTime t, Handler&& handler) {
        if (t < now_) {
            throw CausalityError("run_until(" + std::to_string(t.ms) +
                                 ") is before now=" + std::to_string(now_.ms));
        }
        std::size_t fired = 0;
        while (!heap_.empty() && heap_.top().fire_at <= t) {
            event_type ev = heap_.top();
            heap_.pop();
            now_ = ev.fire_at;
            handler(std::as_const(ev));
            ++fired;
        }
        now_ = t;
        return fired;
    }

private:
    struct Later {
        bool operator()(const event_type& a, const event_type& b) const {
            if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
            return a.seq > b.seq;
        }
    };

    std::priority_queue<event_type, std::vector<event_type>, Later> heap_;
    SimTime now_{};
    std::uint64_t next_seq_ = 0;
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// A labelled pseudo-random stream. The draw sequence depends only on
/// (seed, stream_id); std::mt19937_64 output is fixed by the standard and all
/// conversions to reals and integers are done here, so sequences are identical
/// across platforms and standard libraries.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string stream_id)
        : seed_(seed), id_(std::move(stream_id)),
          engine_(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a(id_)))) {}

    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] const std::string& id() const { return id_; }

    /// Independent child stream, e.g. derive("interval/3").
    [[nodiscard]] RngStream derive(std::string_view label) const {
        return RngStream(seed_, id_ + "/" + std::string(label));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) {
        if (lo > hi) throw std::invalid_argument("uniform: lo > hi");
        if (lo == hi) return lo;
        const double v = lo + (hi - lo) * unit();
        return v > hi ? hi : v;
    }

    /// Uniform integer in [lo, hi], unbiased (rejection sampling).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<std::int64_t>(engine_());
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % span;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return lo + static_cast<std::int64_t>(x % span);
    }

    bool bernoulli(double p) { return unit() < p; }

    /// Exponential variate with the given rate (events per unit).
    double exponential(double rate) {
        if (!(rate > 0)) throw std::invalid_argument("exponential: rate must be positive");
        return -std::log1p(-unit()) / rate;
    }

private:
    std::uint64_t seed_;
    std::string id_;
    std::mt19937_64 engine_;
};

inline double draw_uniform(RngStream& stream, double lo, double hi) { return stream.uniform(lo, hi); }

}  // namespace dtwin
