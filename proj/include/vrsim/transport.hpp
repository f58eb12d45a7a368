#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "vrsim/event_queue.hpp"
#include "vrsim/time.hpp"

namespace vrsim {

enum class StreamId : std::uint8_t { video, audio, tracking, statistics, loss_report };

inline const char* stream_name(StreamId s) {
    switch (s) {
        case StreamId::video: return "video";
        case StreamId::audio: return "audio";
        case StreamId::tracking: return "tracking";
        case StreamId::statistics: return "statistics";
        case StreamId::loss_report: return "loss_report";
    }
    return "?";
}

struct TransportConfig {
    int max_fragment_payload_bytes = 1400;
    int header_bytes = 24;          // per-packet application header
    int udp_ip_overhead_bytes = 28;
    int loss_report_bytes = 64;     // application payload sizes
    int stats_bytes = 200;
    int tracking_bytes = 512;
    int audio_pair_bytes = 2000;    // combined app-layer size of one audio pair
    double audio_period_ms = 10.0;
    double reassembly_timeout_ms = 100.0;

    SimTime reassembly_timeout_ns() const { return from_ms_f(reassembly_timeout_ms); }
    SimTime audio_period_ns() const { return from_ms_f(audio_period_ms); }
};

// One transport packet (a fragment of a frame, or a whole small message).
// mac_payload_bytes is what the MAC layer carries on air for this packet:
// payload + application header + UDP/IP overhead.
struct StreamPacket {
    int user = 0;
    StreamId stream = StreamId::video;
    std::int64_t frame_index = 0;
    int frag_index = 0;
    int frag_count = 1;
    int payload_bytes = 0;
    int mac_payload_bytes = 0;
    SimTime sent_at = 0;
};

inline StreamPacket make_packet(const TransportConfig& cfg, int user, StreamId stream,
                                std::int64_t frame_index, int payload_bytes, SimTime now) {
    StreamPacket p;
    p.user = user;
    p.stream = stream;
    p.frame_index = frame_index;
    p.payload_bytes = payload_bytes;
    p.mac_payload_bytes = payload_bytes + cfg.header_bytes + cfg.udp_ip_overhead_bytes;
    p.sent_at = now;
    return p;
}

// Splits frame payload into ceil(size / max_fragment) fragments; a zero-size
// frame still produces one empty fragment. Payload bytes are conserved.
inline std::vector<StreamPacket> fragment(const TransportConfig& cfg, int user,
                                          std::int64_t frame_index, std::int64_t size_bytes,
                                          SimTime now) {
    if (size_bytes < 0) throw std::runtime_error("transport: negative frame size");
    const std::int64_t maxp = cfg.max_fragment_payload_bytes;
    int n = size_bytes == 0 ? 1 : static_cast<int>(ceil_div(size_bytes, maxp));
    std::vector<StreamPacket> frags;
    frags.reserve(n);
    for (int i = 0; i < n; ++i) {
        std::int64_t payload = i + 1 < n ? maxp : size_bytes - maxp * (n - 1);
        StreamPacket p = make_packet(cfg, user, StreamId::video, frame_index,
                                     static_cast<int>(payload), now);
        p.frag_index = i;
        p.frag_count = n;
        frags.push_back(p);
    }
    return frags;
}

// Client-side reassembly for one video stream. A frame either completes or is
// discarded when the deadline (counted from its first received fragment)
// fires; each frame settles exactly once.
class ReassemblyBuffer {
  public:
    struct Counters {
        std::int64_t completed = 0;
        std::int64_t discarded = 0;
        std::int64_t duplicates = 0;
        std::int64_t late_fragments = 0;
    };

    using FrameFn = std::function<void(std::int64_t frame_index, SimTime first_fragment_at)>;

    ReassemblyBuffer(Kernel& kernel, const TransportConfig& cfg) : m_kernel(kernel), m_cfg(cfg) {}

    void set_on_complete(FrameFn fn) { m_on_complete = std::move(fn); }
    void set_on_discard(FrameFn fn) { m_on_discard = std::move(fn); }

    void on_fragment(const StreamPacket& p) {
        if (m_settled.count(p.frame_index)) {
            ++m_counters.late_fragments;
            return;
        }
        auto [it, inserted] = m_entries.try_emplace(p.frame_index);
        Entry& e = it->second;
        if (inserted) {
            e.have.assign(p.frag_count, false);
            e.first_at = m_kernel.now();
            e.deadline = m_kernel.schedule(
                m_kernel.now() + m_cfg.reassembly_timeout_ns(),
                [this, idx = p.frame_index] { on_deadline(idx); });
        }
        if (p.frag_index < 0 || p.frag_index >= static_cast<int>(e.have.size()))
            throw std::runtime_error("transport: fragment index out of range");
        if (e.have[p.frag_index]) {
            ++m_counters.duplicates;
            return;
        }
        e.have[p.frag_index] = true;
        if (++e.have_n == static_cast<int>(e.have.size())) {
            m_kernel.cancel(e.deadline);
            SimTime first_at = e.first_at;
            settle(p.frame_index);
            ++m_counters.completed;
            if (m_on_complete) m_on_complete(p.frame_index, first_at);
        }
    }

    const Counters& counters() const { return m_counters; }
    std::size_t in_flight() const { return m_entries.size(); }

  private:
    struct Entry {
        std::vector<bool> have;
        int have_n = 0;
        SimTime first_at = 0;
        EventHandle deadline;
    };

    void on_deadline(std::int64_t frame_index) {
        auto it = m_entries.find(frame_index);
        if (it == m_entries.end()) return;
        SimTime first_at = it->second.first_at;
        settle(frame_index);
        ++m_counters.discarded;
        if (m_on_discard) m_on_discard(frame_index, first_at);
    }

    void settle(std::int64_t frame_index) {
        m_entries.erase(frame_index);
        m_settled.insert(frame_index);
    }

    Kernel& m_kernel;
    TransportConfig m_cfg;
    std::map<std::int64_t, Entry> m_entries;
    std::set<std::int64_t> m_settled;
    Counters m_counters;
    FrameFn m_on_complete;
    FrameFn m_on_discard;
};

}  // namespace vrsim
