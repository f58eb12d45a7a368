#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vrsim/time.hpp"

namespace vrsim {

// Terminal states of a video frame. in_flight marks frames still unresolved
// when accounting stops; they never enter the loss ratio.
enum class Terminal : std::uint8_t { in_flight, received, discarded, mac_dropped };

inline const char* terminal_name(Terminal t) {
    switch (t) {
        case Terminal::in_flight: return "in_flight";
        case Terminal::received: return "received";
        case Terminal::discarded: return "discarded";
        case Terminal::mac_dropped: return "mac_dropped";
    }
    return "?";
}

struct FrameRecord {
    int user = 0;
    std::int64_t frame_index = 0;
    Terminal terminal = Terminal::in_flight;
    std::int64_t size_bytes = 0;
    int frag_count = 0;
    int frags_dropped = 0;
    SimTime t_enqueue = -1;
    SimTime t_reconstructed = -1;
    SimTime t_stats_rx = -1;
    std::int64_t vf_rtt_ns = -1;  // -1 = no sample

    bool has_vf_rtt() const { return vf_rtt_ns >= 0; }
};

// Frame loss ratio over settled frames; undefined without any settled frame.
inline std::optional<double> flr(std::int64_t received, std::int64_t discarded,
                                 std::int64_t mac_dropped) {
    std::int64_t total = received + discarded + mac_dropped;
    if (total <= 0) return std::nullopt;
    return static_cast<double>(discarded + mac_dropped) / static_cast<double>(total);
}

// Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample.
inline double percentile_nearest_rank(std::vector<double> samples, double p) {
    if (samples.empty()) throw std::runtime_error("metrics: percentile of empty sample set");
    std::sort(samples.begin(), samples.end());
    auto n = static_cast<std::int64_t>(samples.size());
    auto rank = static_cast<std::int64_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    return samples[static_cast<std::size_t>(rank - 1)];
}

struct UserSummary {
    int user = 0;
    std::int64_t emitted = 0;
    std::int64_t received = 0;
    std::int64_t discarded = 0;
    std::int64_t mac_dropped = 0;
    std::int64_t in_flight = 0;
    std::optional<double> flr;
    std::optional<double> p50_ms;
    std::optional<double> p95_ms;
    std::optional<double> p99_ms;
    double cu = 0.0;
    std::int64_t stalls = 0;
    std::int64_t displayed = 0;
    std::int64_t evictions = 0;
    std::int64_t stats_warnings = 0;
    std::vector<double> vf_rtt_ms;  // samples backing the percentiles
};

// Per-user frame lifecycle ledger fed by the endpoints and the MAC drop path.
class UserMetrics {
  public:
    explicit UserMetrics(int user = 0) : m_user(user) {}

    void on_frame_emitted(std::int64_t idx, std::int64_t size_bytes, int frag_count,
                          SimTime now) {
        FrameRecord& r = m_frames[idx];
        r.user = m_user;
        r.frame_index = idx;
        r.size_bytes = size_bytes;
        r.frag_count = frag_count;
        r.t_enqueue = now;
    }

    // A fragment of this frame died in the MAC. A frame none of whose
    // fragments ever reach the client settles as mac_dropped.
    void on_fragment_dropped(std::int64_t idx) {
        auto it = m_frames.find(idx);
        if (it == m_frames.end()) return;
        FrameRecord& r = it->second;
        ++r.frags_dropped;
        if (r.terminal == Terminal::in_flight && r.frags_dropped >= r.frag_count)
            r.terminal = Terminal::mac_dropped;
    }

    void on_frame_received(std::int64_t idx, SimTime now) {
        auto it = m_frames.find(idx);
        if (it == m_frames.end()) return;
        it->second.terminal = Terminal::received;
        it->second.t_reconstructed = now;
    }

    void on_frame_discarded(std::int64_t idx) {
        auto it = m_frames.find(idx);
        if (it == m_frames.end()) return;
        it->second.terminal = Terminal::discarded;
    }

    // Round-trip closes when the frame's statistics packet reaches the
    // server. Unknown frame references are counted, not sampled.
    void on_stats_received(std::int64_t idx, SimTime now) {
        auto it = m_frames.find(idx);
        if (it == m_frames.end() || it->second.t_enqueue < 0) {
            ++m_stats_warnings;
            return;
        }
        FrameRecord& r = it->second;
        r.t_stats_rx = now;
        r.vf_rtt_ns = now - r.t_enqueue;
    }

    void on_display() { ++m_displayed; }
    void on_stall() { ++m_stalls; }
    void on_eviction() { ++m_evictions; }

    const std::map<std::int64_t, FrameRecord>& frames() const { return m_frames; }
    std::int64_t stalls() const { return m_stalls; }
    std::int64_t displayed() const { return m_displayed; }
    std::int64_t evictions() const { return m_evictions; }
    std::int64_t stats_warnings() const { return m_stats_warnings; }

    UserSummary summarize(double cu) const {
        UserSummary s;
        s.user = m_user;
        s.emitted = static_cast<std::int64_t>(m_frames.size());
        for (const auto& [idx, r] : m_frames) {
            switch (r.terminal) {
                case Terminal::received: ++s.received; break;
                case Terminal::discarded: ++s.discarded; break;
                case Terminal::mac_dropped: ++s.mac_dropped; break;
                case Terminal::in_flight: ++s.in_flight; break;
            }
            if (r.has_vf_rtt())
                s.vf_rtt_ms.push_back(static_cast<double>(r.vf_rtt_ns) / 1e6);
        }
        s.flr = flr(s.received, s.discarded, s.mac_dropped);
        if (!s.vf_rtt_ms.empty()) {
            s.p50_ms = percentile_nearest_rank(s.vf_rtt_ms, 50.0);
            s.p95_ms = percentile_nearest_rank(s.vf_rtt_ms, 95.0);
            s.p99_ms = percentile_nearest_rank(s.vf_rtt_ms, 99.0);
        }
        s.cu = cu;
        s.stalls = m_stalls;
        s.displayed = m_displayed;
        s.evictions = m_evictions;
        s.stats_warnings = m_stats_warnings;
        return s;
    }

  private:
    int m_user = 0;
    std::map<std::int64_t, FrameRecord> m_frames;
    std::int64_t m_stalls = 0;
    std::int64_t m_displayed = 0;
    std::int64_t m_evictions = 0;
    std::int64_t m_stats_warnings = 0;
};

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline std::string format_optional(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

// Raw per-frame rows; column order is part of the output contract.
inline void write_records_csv(std::ostream& out,
                              const std::map<std::int64_t, FrameRecord>& frames) {
    out << "user_id,frame_index,terminal,vf_rtt_ns,size_bytes,t_enqueue_ns,"
           "t_reconstructed_ns,t_stats_rx_ns\n";
    for (const auto& [idx, r] : frames) {
        out << r.user << ',' << r.frame_index << ',' << terminal_name(r.terminal) << ',';
        if (r.has_vf_rtt()) out << r.vf_rtt_ns;
        out << ',' << r.size_bytes << ',' << r.t_enqueue;
        out << ',';
        if (r.t_reconstructed >= 0) out << r.t_reconstructed;
        out << ',';
        if (r.t_stats_rx >= 0) out << r.t_stats_rx;
        out << '\n';
    }
}

inline void write_summary_csv(std::ostream& out, const std::vector<UserSummary>& rows) {
    out << "user_id,flr,p50_ms,p95_ms,p99_ms,cu,stalls,mac_drops\n";
    for (const UserSummary& s : rows) {
        out << s.user << ',' << format_optional(s.flr) << ',' << format_optional(s.p50_ms)
            << ',' << format_optional(s.p95_ms) << ',' << format_optional(s.p99_ms) << ','
            << format_double(s.cu) << ',' << s.stalls << ',' << s.mac_dropped << '\n';
    }
}

}  // namespace vrsim
