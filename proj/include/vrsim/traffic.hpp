#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrsim/rng.hpp"
#include "vrsim/time.hpp"

namespace vrsim {

enum class FrameKind : std::uint8_t { I, P, IR };

inline const char* frame_kind_name(FrameKind k) {
    switch (k) {
        case FrameKind::I: return "I";
        case FrameKind::P: return "P";
        case FrameKind::IR: return "IR";
    }
    return "?";
}

inline FrameKind parse_frame_kind(const std::string& s) {
    if (s == "I") return FrameKind::I;
    if (s == "P") return FrameKind::P;
    if (s == "IR") return FrameKind::IR;
    throw std::runtime_error("trace: unknown frame kind '" + s + "'");
}

struct VideoFrame {
    std::int64_t index = 0;
    std::int64_t size_bytes = 0;
    FrameKind kind = FrameKind::P;
};

enum class CodecMode : std::uint8_t { gop, intra_refresh };

struct CodecConfig {
    std::int64_t bitrate_bps = 100'000'000;
    int fps = 90;
    CodecMode mode = CodecMode::gop;
    int gop_size = 90;
    double i_p_ratio = 6.0;   // I-frame size relative to P in GoP mode
    double gop_sigma = 0.2;   // log-normal size jitter, GoP mode
    double ir_sigma = 0.05;   // log-normal size jitter, intra-refresh mode
    double t_chunk_s = 1.5;   // encoder buffer depth refilled at zero latency
    std::string trace_file;   // non-empty selects trace playback

    int frames_per_chunk() const {
        return static_cast<int>(std::llround(t_chunk_s * fps));
    }
    double mean_frame_bytes() const {
        return static_cast<double>(bitrate_bps) / (8.0 * fps);
    }
};

// Event grid helper: tick k of a per-second rate, on the integer-ns clock.
inline SimTime tick_time(std::int64_t k, std::int64_t ticks_per_sec) {
    return k * kNsPerSec / ticks_per_sec;
}

// One synthetic chunk of t_chunk*fps frames. GoP mode marks every gop_size-th
// frame (offset by gop_phase) as an I-frame i_p_ratio times a P-frame;
// intra-refresh emits uniform frames with tighter jitter. Sizes are scaled so
// the chunk mean lands exactly on bitrate/(8*fps) up to per-frame rounding.
inline std::vector<VideoFrame> synth_chunk(const CodecConfig& cfg, Rng& rng,
                                           std::int64_t start_index, int gop_phase = 0) {
    const int n = cfg.frames_per_chunk();
    if (n <= 0) throw std::runtime_error("traffic: t_chunk*fps yields no frames");
    const bool gop = cfg.mode == CodecMode::gop;
    const double sigma = gop ? cfg.gop_sigma : cfg.ir_sigma;
    std::vector<VideoFrame> frames(n);
    std::vector<double> raw(n);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        std::int64_t index = start_index + j;
        bool is_i = gop && ((index + gop_phase) % cfg.gop_size == 0);
        double r = std::exp(sigma * rng.normal());
        if (is_i) r *= cfg.i_p_ratio;
        raw[j] = r;
        sum += r;
        frames[j].index = index;
        frames[j].kind = is_i ? FrameKind::I : (gop ? FrameKind::P : FrameKind::IR);
    }
    const double scale = cfg.mean_frame_bytes() * n / sum;
    for (int j = 0; j < n; ++j) {
        std::int64_t b = std::llround(raw[j] * scale);
        frames[j].size_bytes = b < 1 ? 1 : b;
    }
    return frames;
}

// A recorded frame-size trace with its native timing.
struct FrameTrace {
    std::vector<std::int64_t> sizes;
    std::vector<FrameKind> kinds;
    int native_fps = 0;
    double native_bitrate_bps = 0.0;

    std::size_t length() const { return sizes.size(); }
};

inline FrameTrace make_trace(std::vector<std::int64_t> sizes, std::vector<FrameKind> kinds,
                             int native_fps) {
    if (sizes.empty()) throw std::runtime_error("trace: empty trace");
    if (sizes.size() != kinds.size()) throw std::runtime_error("trace: size/kind mismatch");
    if (native_fps <= 0) throw std::runtime_error("trace: native fps must be positive");
    FrameTrace t;
    t.sizes = std::move(sizes);
    t.kinds = std::move(kinds);
    t.native_fps = native_fps;
    double total = 0.0;
    for (auto s : t.sizes) total += static_cast<double>(s);
    t.native_bitrate_bps = 8.0 * total * native_fps / static_cast<double>(t.sizes.size());
    return t;
}

// Loads "index,size_bytes,kind" rows; a leading "# fps=N ..." comment carries
// the native frame rate (fps_hint is the fallback).
inline FrameTrace load_trace_csv(const std::string& path, int fps_hint = 0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("trace: cannot open " + path);
    std::vector<std::int64_t> sizes;
    std::vector<FrameKind> kinds;
    int fps = fps_hint;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto pos = line.find("fps=");
            if (pos != std::string::npos) fps = std::stoi(line.substr(pos + 4));
            continue;
        }
        if (line.rfind("index,", 0) == 0) continue;  // header row
        std::istringstream row(line);
        std::string index_s, size_s, kind_s;
        if (!std::getline(row, index_s, ',') || !std::getline(row, size_s, ',') ||
            !std::getline(row, kind_s))
            throw std::runtime_error("trace: malformed row '" + line + "' in " + path);
        sizes.push_back(std::stoll(size_s));
        kinds.push_back(parse_frame_kind(kind_s));
    }
    if (sizes.empty()) throw std::runtime_error("trace: no frames in " + path);
    if (fps <= 0)
        throw std::runtime_error("trace: native fps missing (no # fps= comment) in " + path);
    return make_trace(std::move(sizes), std::move(kinds), fps);
}

// Bitrate scale factor for playing a trace at cfg.fps with cfg.bitrate_bps.
// Consuming trace frames at fps instead of native_fps multiplies the trace's
// effective bitrate by fps/native_fps, so that factor divides the size scale;
// offered load then matches the target bitrate at any playback rate.
inline double trace_scale(const CodecConfig& cfg, const FrameTrace& trace) {
    double fps_scale = static_cast<double>(cfg.fps) / trace.native_fps;
    return static_cast<double>(cfg.bitrate_bps) / (fps_scale * trace.native_bitrate_bps);
}

// Next chunk of trace playback starting at *cursor, wrapping cyclically.
inline std::vector<VideoFrame> trace_chunk(const CodecConfig& cfg, const FrameTrace& trace,
                                           std::size_t* cursor, std::int64_t start_index) {
    const int n = cfg.frames_per_chunk();
    const double scale = trace_scale(cfg, trace);
    std::vector<VideoFrame> frames(n);
    for (int j = 0; j < n; ++j) {
        std::size_t pos = (*cursor + j) % trace.length();
        std::int64_t b = std::llround(static_cast<double>(trace.sizes[pos]) * scale);
        frames[j].index = start_index + j;
        frames[j].size_bytes = b < 1 ? 1 : b;
        frames[j].kind = trace.kinds[pos];
    }
    *cursor = (*cursor + n) % trace.length();
    return frames;
}

// Chunked video source: a buffer of t_chunk*fps frames refilled with zero
// simulated latency whenever next_frame() finds it empty.
class VideoSource {
  public:
    VideoSource(const CodecConfig& cfg, Rng rng, int gop_phase = 0,
                const FrameTrace* trace = nullptr, std::size_t trace_offset = 0)
        : m_cfg(cfg), m_rng(rng), m_gop_phase(gop_phase), m_trace(trace),
          m_cursor(trace_offset) {
        if (trace && trace->length() > 0) m_cursor = trace_offset % trace->length();
    }

    VideoFrame next_frame() {
        if (m_buffer.empty()) refill();
        VideoFrame f = m_buffer.front();
        m_buffer.pop_front();
        return f;
    }

    std::int64_t refills() const { return m_refills; }
    std::size_t buffered() const { return m_buffer.size(); }

  private:
    void refill() {
        std::vector<VideoFrame> chunk =
            m_trace ? trace_chunk(m_cfg, *m_trace, &m_cursor, m_next_index)
                    : synth_chunk(m_cfg, m_rng, m_next_index, m_gop_phase);
        m_next_index += static_cast<std::int64_t>(chunk.size());
        m_buffer.insert(m_buffer.end(), chunk.begin(), chunk.end());
        ++m_refills;
    }

    CodecConfig m_cfg;
    Rng m_rng;
    int m_gop_phase = 0;
    const FrameTrace* m_trace = nullptr;
    std::size_t m_cursor = 0;
    std::deque<VideoFrame> m_buffer;
    std::int64_t m_next_index = 0;
    std::int64_t m_refills = 0;
};

}  // namespace vrsim
