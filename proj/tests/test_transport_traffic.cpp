#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "vrsim/event_queue.hpp"
#include "vrsim/rng.hpp"
#include "vrsim/traffic.hpp"
#include "vrsim/transport.hpp"

using namespace vrsim;

TEST_CASE("fragmentation conserves bytes and fills all but the tail") {
    TransportConfig cfg;
    Rng rng(17, 17);
    for (int trial = 0; trial < 200; ++trial) {
        std::int64_t size = rng.uniform(300'000);
        auto frags = fragment(cfg, 3, trial, size, 1234);
        std::int64_t expect_n = size == 0 ? 1 : ceil_div(size, 1400);
        REQUIRE(static_cast<std::int64_t>(frags.size()) == expect_n);
        std::int64_t sum = 0;
        for (std::size_t i = 0; i < frags.size(); ++i) {
            const StreamPacket& p = frags[i];
            REQUIRE(p.user == 3);
            REQUIRE(p.stream == StreamId::video);
            REQUIRE(p.frame_index == trial);
            REQUIRE(p.frag_index == static_cast<int>(i));
            REQUIRE(p.frag_count == static_cast<int>(frags.size()));
            REQUIRE(p.sent_at == 1234);
            REQUIRE(p.mac_payload_bytes == p.payload_bytes + 24 + 28);
            if (i + 1 < frags.size()) REQUIRE(p.payload_bytes == 1400);
            sum += p.payload_bytes;
        }
        REQUIRE(sum == size);
    }
}

TEST_CASE("fragmentation edge cases") {
    TransportConfig cfg;
    auto zero = fragment(cfg, 0, 0, 0, 0);
    REQUIRE(zero.size() == 1);
    REQUIRE(zero[0].payload_bytes == 0);
    REQUIRE(zero[0].mac_payload_bytes == 52);

    auto exact = fragment(cfg, 0, 0, 1400, 0);
    REQUIRE(exact.size() == 1);
    auto plus1 = fragment(cfg, 0, 0, 1401, 0);
    REQUIRE(plus1.size() == 2);
    REQUIRE(plus1[1].payload_bytes == 1);

    REQUIRE_THROWS_AS(fragment(cfg, 0, 0, -1, 0), std::runtime_error);
}

namespace {

struct ReasmHarness {
    Kernel kernel;
    TransportConfig cfg;
    ReassemblyBuffer buf{kernel, cfg};
    std::vector<std::pair<std::int64_t, SimTime>> completed;
    std::vector<std::pair<std::int64_t, SimTime>> discarded;

    ReasmHarness() {
        buf.set_on_complete([this](std::int64_t idx, SimTime first) {
            completed.emplace_back(idx, first);
        });
        buf.set_on_discard([this](std::int64_t idx, SimTime first) {
            discarded.emplace_back(idx, first);
        });
    }

    void feed(SimTime at, std::int64_t frame, int frag, int count) {
        kernel.schedule(at, [this, frame, frag, count] {
            StreamPacket p;
            p.frame_index = frame;
            p.frag_index = frag;
            p.frag_count = count;
            buf.on_fragment(p);
        });
    }
};

}  // namespace

TEST_CASE("reassembly completes when the last fragment lands") {
    ReasmHarness h;
    h.feed(10, 0, 0, 3);
    h.feed(20, 0, 1, 3);
    h.feed(30, 0, 2, 3);
    h.kernel.run_until(from_sec(1));
    REQUIRE(h.completed == std::vector<std::pair<std::int64_t, SimTime>>{{0, 10}});
    REQUIRE(h.discarded.empty());
    REQUIRE(h.buf.counters().completed == 1);
    REQUIRE(h.buf.in_flight() == 0);
}

TEST_CASE("reassembly tolerates out of order fragments") {
    ReasmHarness h;
    h.feed(10, 7, 2, 3);
    h.feed(20, 7, 0, 3);
    h.feed(30, 7, 1, 3);
    h.kernel.run_until(from_sec(1));
    REQUIRE(h.completed == std::vector<std::pair<std::int64_t, SimTime>>{{7, 10}});
}

TEST_CASE("reassembly discards an incomplete frame at the deadline") {
    ReasmHarness h;
    SimTime discarded_at = -1;
    h.buf.set_on_discard([&](std::int64_t idx, SimTime first) {
        h.discarded.emplace_back(idx, first);
        discarded_at = h.kernel.now();
    });
    h.feed(from_ms(5), 1, 0, 3);
    h.feed(from_ms(9), 1, 1, 3);  // fragment 2 never arrives
    h.kernel.run_until(from_sec(1));
    REQUIRE(h.completed.empty());
    REQUIRE(h.discarded == std::vector<std::pair<std::int64_t, SimTime>>{{1, from_ms(5)}});
    REQUIRE(discarded_at == from_ms(5) + from_ms(100));  // deadline from first fragment
    REQUIRE(h.buf.counters().discarded == 1);
    REQUIRE(h.buf.in_flight() == 0);
}

TEST_CASE("reassembly counts duplicates without double settling") {
    ReasmHarness h;
    h.feed(10, 0, 0, 2);
    h.feed(20, 0, 0, 2);  // duplicate
    h.feed(30, 0, 1, 2);
    h.kernel.run_until(from_sec(1));
    REQUIRE(h.buf.counters().duplicates == 1);
    REQUIRE(h.buf.counters().completed == 1);
    REQUIRE(h.completed.size() == 1);
}

TEST_CASE("fragments of a settled frame are counted as late") {
    ReasmHarness h;
    h.feed(10, 0, 0, 1);           // completes immediately
    h.feed(20, 0, 0, 1);           // late duplicate of a settled frame
    h.feed(from_ms(1), 1, 0, 2);   // times out at 101 ms
    h.feed(from_ms(150), 1, 1, 2); // late for the discarded frame
    h.kernel.run_until(from_sec(1));
    REQUIRE(h.buf.counters().completed == 1);
    REQUIRE(h.buf.counters().discarded == 1);
    REQUIRE(h.buf.counters().late_fragments == 2);
}

TEST_CASE("reassembly rejects fragment indices outside the frame") {
    ReasmHarness h;
    StreamPacket first;
    first.frame_index = 0;
    first.frag_index = 0;
    first.frag_count = 2;
    StreamPacket bad = first;
    bad.frag_index = 5;
    h.kernel.schedule(0, [&] {
        h.buf.on_fragment(first);
        REQUIRE_THROWS_AS(h.buf.on_fragment(bad), std::runtime_error);
    });
    h.kernel.run_until(from_sec(1));
}

TEST_CASE("synthetic chunks hit the target mean size exactly up to rounding") {
    CodecConfig cfg;  // 100 Mb/s at 90 fps: 138889 bytes per frame
    Rng rng(5, 1);
    const int n = cfg.frames_per_chunk();
    REQUIRE(n == 135);
    auto frames = synth_chunk(cfg, rng, 0);
    REQUIRE(static_cast<int>(frames.size()) == n);
    std::int64_t sum = 0;
    for (int j = 0; j < n; ++j) {
        REQUIRE(frames[static_cast<std::size_t>(j)].index == j);
        REQUIRE(frames[static_cast<std::size_t>(j)].size_bytes >= 1);
        sum += frames[static_cast<std::size_t>(j)].size_bytes;
    }
    double target = cfg.mean_frame_bytes() * n;
    REQUIRE(std::abs(static_cast<double>(sum) - target) <= n);  // per frame rounding
}

TEST_CASE("intra refresh spreads sizes far tighter than gop bursts") {
    CodecConfig ir;
    ir.mode = CodecMode::intra_refresh;
    CodecConfig gop;
    gop.mode = CodecMode::gop;
    auto spread = [](const CodecConfig& cfg) {
        Rng rng(11, 2);
        double sum = 0.0, sumsq = 0.0;
        int count = 0;
        for (int c = 0; c < 10; ++c) {
            auto frames = synth_chunk(cfg, rng, c * 135LL);
            for (const auto& f : frames) {
                auto v = static_cast<double>(f.size_bytes);
                sum += v;
                sumsq += v * v;
                ++count;
            }
        }
        double mean = sum / count;
        return std::sqrt(sumsq / count - mean * mean);
    };
    double sd_ir = spread(ir);
    double sd_gop = spread(gop);
    REQUIRE(sd_ir < sd_gop);
    REQUIRE(sd_gop > 2.0 * sd_ir);  // the I frame spikes dominate the spread

    Rng rng(3, 3);
    for (const auto& f : synth_chunk(ir, rng, 0))
        REQUIRE(f.kind == FrameKind::IR);
}

TEST_CASE("gop mode marks one i frame per group on the index grid") {
    CodecConfig cfg;
    cfg.fps = 60;
    cfg.gop_size = 60;
    cfg.t_chunk_s = 1.0;
    Rng rng(7, 1);
    auto frames = synth_chunk(cfg, rng, 0);
    REQUIRE(frames.size() == 60);
    int i_count = 0;
    for (const auto& f : frames)
        if (f.kind == FrameKind::I) ++i_count;
    REQUIRE(i_count == 1);
    REQUIRE(frames[0].kind == FrameKind::I);

    // a phase offset moves the i frame without changing the cadence
    Rng rng2(7, 1);
    auto shifted = synth_chunk(cfg, rng2, 0, 15);
    int shifted_i = 0;
    for (const auto& f : shifted) {
        if (f.kind == FrameKind::I) {
            ++shifted_i;
            REQUIRE((f.index + 15) % 60 == 0);
        }
    }
    REQUIRE(shifted_i == 1);
}

TEST_CASE("gop i frames average the configured ratio over p frames") {
    CodecConfig cfg;  // i_p_ratio = 6
    Rng rng(23, 4);
    double i_sum = 0.0, p_sum = 0.0;
    std::int64_t i_n = 0, p_n = 0;
    for (int c = 0; c < 30; ++c) {
        for (const auto& f : synth_chunk(cfg, rng, c * 135LL)) {
            if (f.kind == FrameKind::I) {
                i_sum += static_cast<double>(f.size_bytes);
                ++i_n;
            } else {
                p_sum += static_cast<double>(f.size_bytes);
                ++p_n;
            }
        }
    }
    REQUIRE(i_n > 0);
    double ratio = (i_sum / static_cast<double>(i_n)) / (p_sum / static_cast<double>(p_n));
    REQUIRE(ratio == Catch::Approx(cfg.i_p_ratio).margin(1.0));
}

TEST_CASE("identical rng streams reproduce identical chunks") {
    CodecConfig cfg;
    Rng a(99, 1), b(99, 1);
    auto fa = synth_chunk(cfg, a, 0);
    auto fb = synth_chunk(cfg, b, 0);
    REQUIRE(fa.size() == fb.size());
    for (std::size_t j = 0; j < fa.size(); ++j) {
        REQUIRE(fa[j].size_bytes == fb[j].size_bytes);
        REQUIRE(fa[j].kind == fb[j].kind);
    }
}

TEST_CASE("trace construction validates and measures its native bitrate") {
    FrameTrace t = make_trace({1000, 2000}, {FrameKind::I, FrameKind::P}, 30);
    REQUIRE(t.length() == 2);
    REQUIRE(t.native_bitrate_bps == Catch::Approx(8.0 * 1500 * 30));

    REQUIRE_THROWS_AS(make_trace({}, {}, 30), std::runtime_error);
    REQUIRE_THROWS_AS(make_trace({100}, {}, 30), std::runtime_error);
    REQUIRE_THROWS_AS(make_trace({100}, {FrameKind::P}, 0), std::runtime_error);
}

TEST_CASE("trace playback rescales to hold the offered bitrate constant") {
    FrameTrace t = make_trace({1000, 1000, 1000, 1000}, std::vector<FrameKind>(4, FrameKind::P),
                              90);
    CodecConfig cfg;
    cfg.fps = 90;
    cfg.bitrate_bps = static_cast<std::int64_t>(t.native_bitrate_bps);
    REQUIRE(trace_scale(cfg, t) == Catch::Approx(1.0));

    cfg.fps = 180;  // double playback rate halves each frame
    REQUIRE(trace_scale(cfg, t) == Catch::Approx(0.5));

    cfg.fps = 90;
    cfg.bitrate_bps *= 2;  // double target doubles each frame
    REQUIRE(trace_scale(cfg, t) == Catch::Approx(2.0));
}

TEST_CASE("trace chunks wrap cyclically and respect the cursor") {
    FrameTrace t = make_trace({100, 200, 300, 400, 500},
                              {FrameKind::I, FrameKind::P, FrameKind::P, FrameKind::P,
                               FrameKind::P},
                              90);
    CodecConfig cfg;  // fps 90, bitrate matched to native: scale exactly 1
    cfg.bitrate_bps = static_cast<std::int64_t>(t.native_bitrate_bps);
    std::size_t cursor = 2;
    auto frames = trace_chunk(cfg, t, &cursor, 1000);
    REQUIRE(frames.size() == 135);
    for (std::size_t j = 0; j < frames.size(); ++j) {
        REQUIRE(frames[j].index == 1000 + static_cast<std::int64_t>(j));
        REQUIRE(frames[j].size_bytes == t.sizes[(2 + j) % 5]);
        REQUIRE(frames[j].kind == t.kinds[(2 + j) % 5]);
    }
    REQUIRE(cursor == (2 + 135) % 5);
}

TEST_CASE("video source refills on demand and numbers frames contiguously") {
    CodecConfig cfg;
    VideoSource src(cfg, Rng(1, 1));
    REQUIRE(src.refills() == 0);
    for (std::int64_t i = 0; i < 300; ++i) {
        VideoFrame f = src.next_frame();
        REQUIRE(f.index == i);
    }
    REQUIRE(src.refills() == 3);  // 135 frames per chunk
    REQUIRE(src.buffered() == 3 * 135 - 300);
}

TEST_CASE("distinct trace offsets start playback at distinct frames") {
    FrameTrace t = make_trace({100, 200, 300, 400, 500},
                              std::vector<FrameKind>(5, FrameKind::P), 90);
    CodecConfig cfg;
    cfg.bitrate_bps = static_cast<std::int64_t>(t.native_bitrate_bps);
    VideoSource a(cfg, Rng(1, 1), 0, &t, 0);
    VideoSource b(cfg, Rng(1, 1), 0, &t, 3);
    REQUIRE(a.next_frame().size_bytes == 100);
    REQUIRE(b.next_frame().size_bytes == 400);
}

TEST_CASE("trace csv round trips through the loader") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "vrsim_trace_test";
    fs::create_directories(dir);
    fs::path file = dir / "t.csv";
    {
        std::ofstream out(file);
        out << "# fps=90 mean_bitrate_bps=360000\n";
        out << "index,size_bytes,kind\n";
        out << "0,1000,I\n1,500,P\n2,600,IR\n";
    }
    FrameTrace t = load_trace_csv(file.string());
    REQUIRE(t.native_fps == 90);
    REQUIRE(t.sizes == std::vector<std::int64_t>{1000, 500, 600});
    REQUIRE(t.kinds[0] == FrameKind::I);
    REQUIRE(t.kinds[2] == FrameKind::IR);

    fs::path no_fps = dir / "nofps.csv";
    {
        std::ofstream out(no_fps);
        out << "0,1000,I\n";
    }
    REQUIRE_THROWS_WITH(load_trace_csv(no_fps.string()),
                        Catch::Matchers::ContainsSubstring("fps"));
    REQUIRE(load_trace_csv(no_fps.string(), 60).native_fps == 60);

    fs::path bad = dir / "bad.csv";
    {
        std::ofstream out(bad);
        out << "# fps=90\n0,1000\n";
    }
    REQUIRE_THROWS_WITH(load_trace_csv(bad.string()),
                        Catch::Matchers::ContainsSubstring("malformed"));
    REQUIRE_THROWS_AS(load_trace_csv((dir / "missing.csv").string()), std::runtime_error);
    REQUIRE_THROWS_AS(parse_frame_kind("X"), std::runtime_error);
}
