#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "vrsim/event_queue.hpp"
#include "vrsim/mac.hpp"
#include "vrsim/metrics.hpp"
#include "vrsim/traffic.hpp"
#include "vrsim/transport.hpp"

namespace vrsim {

// Streams one user's downlink: video frames on the frame grid plus an audio
// packet pair every audio period. Frame bursts enqueue all fragments at one
// instant; the uplink statistics return closes the round-trip sample.
class ServerEndpoint {
  public:
    struct Counters {
        std::int64_t frames_emitted = 0;
        std::int64_t video_bytes = 0;
        std::int64_t audio_ticks = 0;
        std::int64_t stats_received = 0;
        std::int64_t loss_reports = 0;
        std::int64_t tracking_received = 0;
    };

    // Clock phases stagger unsynchronized clients; a phase below its period
    // preserves the exact emission counts over the horizon.
    ServerEndpoint(Kernel& kernel, Channel& channel, const TransportConfig& transport,
                   const CodecConfig& codec, int user, int sta_node, SimTime horizon,
                   SimTime wire_delay, SimTime frame_phase, SimTime audio_phase,
                   UserMetrics& metrics, std::unique_ptr<VideoSource> source)
        : m_kernel(kernel), m_channel(channel), m_transport(transport), m_codec(codec),
          m_user(user), m_sta(sta_node), m_horizon(horizon), m_wire_delay(wire_delay),
          m_frame_phase(frame_phase), m_audio_phase(audio_phase), m_metrics(metrics),
          m_source(std::move(source)) {}

    void start() {
        m_kernel.schedule(m_frame_phase, [this] { frame_due(0); });
        m_kernel.schedule(m_audio_phase, [this] { audio_due(0); });
    }

    void on_uplink(const StreamPacket& pkt) {
        switch (pkt.stream) {
            case StreamId::statistics:
                ++m_counters.stats_received;
                m_metrics.on_stats_received(pkt.frame_index, m_kernel.now());
                break;
            case StreamId::loss_report:
                ++m_counters.loss_reports;
                break;
            case StreamId::tracking:
                ++m_counters.tracking_received;
                break;
            default:
                break;
        }
    }

    const Counters& counters() const { return m_counters; }
    const VideoSource& source() const { return *m_source; }

  private:
    // Whole-frame burst: every fragment joins the AP queue at the same
    // instant; t_enqueue in the ledger is that instant.
    void frame_due(std::int64_t k) {
        if (m_kernel.now() >= m_horizon) return;
        VideoFrame f = m_source->next_frame();
        SimTime enq_at = m_kernel.now() + m_wire_delay;
        auto frags = fragment(m_transport, m_user, f.index, f.size_bytes, m_kernel.now());
        m_metrics.on_frame_emitted(f.index, f.size_bytes, static_cast<int>(frags.size()),
                                   enq_at);
        ++m_counters.frames_emitted;
        m_counters.video_bytes += f.size_bytes;
        if (m_wire_delay > 0) {
            m_kernel.schedule(enq_at, [this, frags = std::move(frags)] {
                for (const auto& p : frags) m_channel.enqueue(0, m_sta, p);
            });
        } else {
            for (const auto& p : frags) m_channel.enqueue(0, m_sta, p);
        }
        m_kernel.schedule(tick_time(k + 1, m_codec.fps) + m_frame_phase,
                          [this, k] { frame_due(k + 1); });
    }

    void audio_due(std::int64_t k) {
        if (m_kernel.now() >= m_horizon) return;
        ++m_counters.audio_ticks;
        int payload = m_transport.audio_pair_bytes / 2 - m_transport.header_bytes;
        if (payload < 0) payload = 0;
        for (int i = 0; i < 2; ++i) {
            StreamPacket p = make_packet(m_transport, m_user, StreamId::audio, k, payload,
                                         m_kernel.now());
            p.frag_index = i;
            m_channel.enqueue(0, m_sta, p);
        }
        m_kernel.schedule(m_kernel.now() + m_transport.audio_period_ns(),
                          [this, k] { audio_due(k + 1); });
    }

    Kernel& m_kernel;
    Channel& m_channel;
    TransportConfig m_transport;
    CodecConfig m_codec;
    int m_user;
    int m_sta;
    SimTime m_horizon;
    SimTime m_wire_delay;
    SimTime m_frame_phase;
    SimTime m_audio_phase;
    UserMetrics& m_metrics;
    std::unique_ptr<VideoSource> m_source;
    Counters m_counters;
};

// The headset side: reassembles video, answers every reconstructed frame with
// a statistics packet, reports discarded frames, paces the display against a
// small jitter buffer, and sends tracking upstream at 3x the frame rate.
class ClientEndpoint {
  public:
    struct Counters {
        std::int64_t audio_packets = 0;
        std::int64_t tracking_sent = 0;
        std::int64_t stats_sent = 0;
        std::int64_t loss_reports_sent = 0;
        std::int64_t vsync_ticks = 0;
    };

    ClientEndpoint(Kernel& kernel, Channel& channel, const TransportConfig& transport,
                   int user, int sta_node, int fps, SimTime horizon, int jitter_capacity,
                   SimTime decode_delay, SimTime tracking_phase, UserMetrics& metrics)
        : m_kernel(kernel), m_channel(channel), m_transport(transport), m_user(user),
          m_sta(sta_node), m_fps(fps), m_horizon(horizon),
          m_jitter_capacity(jitter_capacity), m_decode_delay(decode_delay),
          m_tracking_phase(tracking_phase), m_metrics(metrics),
          m_reassembly(kernel, transport) {
        m_reassembly.set_on_complete(
            [this](std::int64_t idx, SimTime) { frame_complete(idx); });
        m_reassembly.set_on_discard(
            [this](std::int64_t idx, SimTime) { frame_discarded(idx); });
    }

    void start() {
        m_kernel.schedule(0, [this] { vsync(0); });
        m_kernel.schedule(m_tracking_phase, [this] { tracking_due(0); });
    }

    void on_downlink(const StreamPacket& pkt) {
        if (pkt.stream == StreamId::video)
            m_reassembly.on_fragment(pkt);
        else if (pkt.stream == StreamId::audio)
            ++m_counters.audio_packets;
    }

    const Counters& counters() const { return m_counters; }
    const ReassemblyBuffer& reassembly() const { return m_reassembly; }
    std::size_t jitter_occupancy() const { return m_jitter.size(); }

  private:
    void frame_complete(std::int64_t idx) {
        m_metrics.on_frame_received(idx, m_kernel.now());
        StreamPacket stats = make_packet(m_transport, m_user, StreamId::statistics, idx,
                                         m_transport.stats_bytes, m_kernel.now());
        m_channel.enqueue(m_sta, 0, stats);
        ++m_counters.stats_sent;
        if (m_decode_delay > 0) {
            m_kernel.schedule(m_kernel.now() + m_decode_delay,
                              [this, idx] { jitter_push(idx); });
        } else {
            jitter_push(idx);
        }
    }

    void frame_discarded(std::int64_t idx) {
        m_metrics.on_frame_discarded(idx);
        StreamPacket report = make_packet(m_transport, m_user, StreamId::loss_report, idx,
                                          m_transport.loss_report_bytes, m_kernel.now());
        m_channel.enqueue(m_sta, 0, report);
        ++m_counters.loss_reports_sent;
    }

    // Bounded decode queue: a full buffer evicts the oldest frame. Evictions
    // are a display-level metric and never count as frame loss.
    void jitter_push(std::int64_t idx) {
        if (static_cast<int>(m_jitter.size()) >= m_jitter_capacity) {
            m_jitter.pop_front();
            m_metrics.on_eviction();
        }
        m_jitter.push_back(idx);
    }

    void vsync(std::int64_t k) {
        if (m_kernel.now() >= m_horizon) return;
        ++m_counters.vsync_ticks;
        if (!m_jitter.empty()) {
            m_jitter.pop_front();
            m_metrics.on_display();
        } else {
            m_metrics.on_stall();
        }
        m_kernel.schedule(tick_time(k + 1, m_fps), [this, k] { vsync(k + 1); });
    }

    void tracking_due(std::int64_t k) {
        if (m_kernel.now() >= m_horizon) return;
        StreamPacket p = make_packet(m_transport, m_user, StreamId::tracking, k,
                                     m_transport.tracking_bytes, m_kernel.now());
        m_channel.enqueue(m_sta, 0, p);
        ++m_counters.tracking_sent;
        m_kernel.schedule(tick_time(k + 1, 3LL * m_fps) + m_tracking_phase,
                          [this, k] { tracking_due(k + 1); });
    }

    Kernel& m_kernel;
    Channel& m_channel;
    TransportConfig m_transport;
    int m_user;
    int m_sta;
    int m_fps;
    SimTime m_horizon;
    int m_jitter_capacity;
    SimTime m_decode_delay;
    SimTime m_tracking_phase;
    UserMetrics& m_metrics;
    ReassemblyBuffer m_reassembly;
    std::deque<std::int64_t> m_jitter;
    Counters m_counters;
};

}  // namespace vrsim
