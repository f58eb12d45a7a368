#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "vrsim/time.hpp"

namespace vrsim {

// Handle for a pending event; stays valid until the event fires or is
// cancelled. Ordering key doubles as the identity.
struct EventHandle {
    SimTime fire_at = 0;
    std::uint64_t seq = 0;

    friend auto operator<=>(const EventHandle&, const EventHandle&) = default;
};

struct RunSummary {
    std::uint64_t scheduled = 0;
    std::uint64_t processed = 0;
    std::uint64_t cancelled = 0;
    std::uint64_t pending = 0;
    SimTime final_clock = 0;
};

// Deterministic discrete-event kernel. Events fire in (fire_at, seq) order, so
// simultaneous events always run in scheduling order and two runs with the
// same inputs replay the exact same event sequence.
class Kernel {
  public:
    using EventFn = std::function<void()>;

    SimTime now() const { return m_clock; }

    // Pre: fire_at >= now(). Scheduling in the past is a logic error.
    EventHandle schedule(SimTime fire_at, EventFn fn) {
        if (fire_at < m_clock) {
            throw std::runtime_error("kernel: schedule at t=" + std::to_string(fire_at) +
                                     "ns is in the past (clock=" + std::to_string(m_clock) + "ns)");
        }
        EventHandle h{fire_at, m_next_seq++};
        m_queue.emplace(h, std::move(fn));
        ++m_scheduled;
        return h;
    }

    // True if the event was still pending; its handler will never run.
    bool cancel(const EventHandle& h) {
        auto it = m_queue.find(h);
        if (it == m_queue.end()) return false;
        m_queue.erase(it);
        ++m_cancelled;
        return true;
    }

    std::size_t pending() const { return m_queue.size(); }

    // Processes every event with fire_at <= horizon; the clock advances
    // monotonically through the processed events. Returns a cumulative
    // summary; scheduled == processed + cancelled + pending always holds.
    RunSummary run_until(SimTime horizon) {
        while (!m_queue.empty()) {
            auto it = m_queue.begin();
            if (it->first.fire_at > horizon) break;
            m_clock = it->first.fire_at;
            EventFn fn = std::move(it->second);
            m_queue.erase(it);
            ++m_processed;
            fn();
        }
        return summary();
    }

    RunSummary summary() const {
        return RunSummary{m_scheduled, m_processed, m_cancelled, m_queue.size(), m_clock};
    }

  private:
    std::map<EventHandle, EventFn> m_queue;
    SimTime m_clock = 0;
    std::uint64_t m_next_seq = 0;
    std::uint64_t m_scheduled = 0;
    std::uint64_t m_processed = 0;
    std::uint64_t m_cancelled = 0;
};

}  // namespace vrsim
