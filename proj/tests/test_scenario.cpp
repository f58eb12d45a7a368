#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vrsim/scenario.hpp"

using namespace vrsim;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& leaf) {
    fs::path dir = fs::temp_directory_path() / "vrsim_scenario_test" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ScenarioConfig quick_ir(double sim_time_s, int n_users, std::uint64_t seed) {
    ScenarioConfig cfg = load_scenario_json("{}");
    cfg.sim_time_s = sim_time_s;
    cfg.seed = seed;
    cfg.n_users = n_users;
    cfg.users.assign(static_cast<std::size_t>(n_users), cfg.users.front());
    for (auto& u : cfg.users) u.codec.mode = CodecMode::intra_refresh;
    return cfg;
}

}  // namespace

TEST_CASE("empty documents parse to the built in defaults") {
    for (const std::string text : {std::string(""), std::string("  \n\t ")}) {
        ScenarioConfig cfg = load_scenario_json(text);
        REQUIRE(cfg.seed == 1);
        REQUIRE(cfg.sim_time_s == 20.0);
        REQUIRE(cfg.n_users == 1);
        REQUIRE(cfg.users.size() == 1);
        REQUIRE(cfg.users[0].distance_m == 1.5);
        REQUIRE(cfg.users[0].codec.bitrate_bps == 100'000'000);
        REQUIRE(cfg.users[0].codec.fps == 90);
        REQUIRE(cfg.users[0].codec.mode == CodecMode::gop);
        REQUIRE(cfg.users[0].codec.gop_size == 90);
        REQUIRE(cfg.jitter_buffer_frames == 2);
        REQUIRE(cfg.mac.queue_cap_pkts == 800);
    }
}

TEST_CASE("unknown keys and range violations are reported together") {
    REQUIRE_THROWS_WITH(load_scenario_json(R"({"bogus": 1})"),
                        Catch::Matchers::ContainsSubstring("unknown key 'bogus'"));
    try {
        load_scenario_json(R"({"bogus": 1, "sim_time_s": -2, "jitter_buffer_frames": 0})");
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        REQUIRE(msg.find("unknown key 'bogus'") != std::string::npos);
        REQUIRE(msg.find("sim_time_s") != std::string::npos);
        REQUIRE(msg.find("jitter_buffer_frames") != std::string::npos);
    }
}

TEST_CASE("type mismatches and malformed documents are rejected") {
    REQUIRE_THROWS_WITH(load_scenario_json(R"({"fps": "fast"})"),
                        Catch::Matchers::ContainsSubstring("wrong type"));
    REQUIRE_THROWS_WITH(load_scenario_json("{"),
                        Catch::Matchers::ContainsSubstring("parse error"));
    REQUIRE_THROWS_WITH(load_scenario_json("[1,2]"),
                        Catch::Matchers::ContainsSubstring("top level"));
    REQUIRE_THROWS_WITH(load_scenario_json(R"({"phy": 5})"),
                        Catch::Matchers::ContainsSubstring("'phy' must be an object"));
}

TEST_CASE("per user fields broadcast scalars and check array lengths") {
    ScenarioConfig cfg = load_scenario_json(
        R"({"n_users": 3, "distance_m": [1.5, 9.5, 11.0], "bitrate_bps": 50000000,
            "mode": ["ir", "gop45", "gop"]})");
    REQUIRE(cfg.users.size() == 3);
    REQUIRE(cfg.users[0].distance_m == 1.5);
    REQUIRE(cfg.users[1].distance_m == 9.5);
    REQUIRE(cfg.users[2].distance_m == 11.0);
    for (const auto& u : cfg.users) REQUIRE(u.codec.bitrate_bps == 50'000'000);
    REQUIRE(cfg.users[0].codec.mode == CodecMode::intra_refresh);
    REQUIRE(cfg.users[1].codec.mode == CodecMode::gop);
    REQUIRE(cfg.users[1].codec.gop_size == 45);
    REQUIRE(cfg.users[2].codec.gop_size == 90);  // bare "gop" keeps the default

    REQUIRE_THROWS_WITH(load_scenario_json(R"({"n_users": 2, "fps": [90, 90, 90]})"),
                        Catch::Matchers::ContainsSubstring("3 entries for n_users=2"));
    REQUIRE_THROWS_WITH(load_scenario_json(R"({"mode": "slideshow"})"),
                        Catch::Matchers::ContainsSubstring("unknown mode"));
}

TEST_CASE("section overrides reach the nested configs") {
    ScenarioConfig cfg = load_scenario_json(
        R"({"phy": {"tx_power_dbm": 10, "n_ss": 1},
            "mac": {"queue_cap_pkts": 123, "mpdu_error_prob": 0.05},
            "transport": {"stats_bytes": 333}})");
    REQUIRE(cfg.phy.tx_power_dbm == 10.0);
    REQUIRE(cfg.phy.n_ss == 1);
    REQUIRE(cfg.mac.queue_cap_pkts == 123);
    REQUIRE(cfg.mac.mpdu_error_prob == 0.05);
    REQUIRE(cfg.transport.stats_bytes == 333);

    REQUIRE_THROWS_WITH(load_scenario_json(R"({"mac": {"frobnicate": 1}})"),
                        Catch::Matchers::ContainsSubstring("mac: unknown key"));
    REQUIRE_THROWS_WITH(load_scenario_json(R"({"phy": {"mcs_min_rssi_dbm": [-82, -79]}})"),
                        Catch::Matchers::ContainsSubstring("needs 14 entries"));
}

TEST_CASE("an infeasible link is a configuration error") {
    REQUIRE_THROWS_WITH(load_scenario_json(R"({"distance_m": 1000})"),
                        Catch::Matchers::ContainsSubstring("below the weakest usable MCS"));
}

TEST_CASE("configs round trip through their canonical serialization") {
    ScenarioConfig cfg = load_scenario_json(
        R"({"seed": 77, "sim_time_s": 3.5, "n_users": 2, "distance_m": [1.5, 9.5],
            "bitrate_bps": [100000000, 40000000], "fps": [90, 60],
            "mode": ["ir", "gop60"], "jitter_buffer_frames": 4,
            "mac": {"queue_cap_pkts": 555}, "phy": {"tx_power_dbm": 17},
            "transport": {"tracking_bytes": 256}})");
    ScenarioConfig back = load_scenario_json(scenario_to_json(cfg).dump());
    REQUIRE(back.seed == 77);
    REQUIRE(back.sim_time_s == 3.5);
    REQUIRE(back.n_users == 2);
    REQUIRE(back.users[0].distance_m == 1.5);
    REQUIRE(back.users[1].distance_m == 9.5);
    REQUIRE(back.users[0].codec.bitrate_bps == 100'000'000);
    REQUIRE(back.users[1].codec.bitrate_bps == 40'000'000);
    REQUIRE(back.users[1].codec.fps == 60);
    REQUIRE(back.users[0].codec.mode == CodecMode::intra_refresh);
    REQUIRE(back.users[1].codec.gop_size == 60);
    REQUIRE(back.jitter_buffer_frames == 4);
    REQUIRE(back.mac.queue_cap_pkts == 555);
    REQUIRE(back.phy.tx_power_dbm == 17.0);
    REQUIRE(back.transport.tracking_bytes == 256);
    REQUIRE(scenario_to_json(back).dump() == scenario_to_json(cfg).dump());
}

TEST_CASE("a one second run emits the exact tick counts") {
    ScenarioConfig cfg = quick_ir(1.0, 1, 11);
    RunResult r = run_scenario(cfg);
    REQUIRE(r.server_counters[0].frames_emitted == 90);
    REQUIRE(r.server_counters[0].audio_ticks == 100);
    REQUIRE(r.client_counters[0].tracking_sent == 270);
    REQUIRE(r.client_counters[0].vsync_ticks == 90);
    REQUIRE(r.summaries[0].displayed + r.summaries[0].stalls == 90);
    REQUIRE(r.summaries[0].emitted == 90);
}

TEST_CASE("a clean single user run loses nothing and balances its books") {
    ScenarioConfig cfg = quick_ir(2.0, 1, 3);
    RunResult r = run_scenario(cfg);

    const RunSummary& k = r.kernel_summary;
    REQUIRE(k.scheduled == k.processed + k.cancelled + k.pending);

    const UserSummary& s = r.summaries[0];
    REQUIRE(s.emitted == s.received + s.discarded + s.mac_dropped + s.in_flight);
    REQUIRE(*s.flr == 0.0);
    REQUIRE(s.received > 0);
    REQUIRE(r.cu > 0.0);
    REQUIRE(r.cu < 1.0);
    REQUIRE(r.uplink_drops == 0);

    for (std::size_t n = 0; n < r.node_counters.size(); ++n) {
        const MacNodeCounters& c = r.node_counters[n];
        REQUIRE(c.offered == c.accepted + c.dropped_overflow);
        REQUIRE(c.accepted == c.delivered + c.dropped_retry +
                                  static_cast<std::int64_t>(r.node_residual[n]));
    }
    REQUIRE(r.reassembly_counters[0].completed == s.received);
    REQUIRE(r.ledger.overlap_violations == 0);
    REQUIRE(r.ledger.cap_violations == 0);

    // offered video load tracks the configured bitrate
    double offered = static_cast<double>(r.server_counters[0].video_bytes) * 8.0 / 2.0;
    REQUIRE(offered == Catch::Approx(100e6).epsilon(0.02));
}

TEST_CASE("single user utilization sits in the documented band") {
    ScenarioConfig cfg = quick_ir(20.0, 1, 1);
    RunResult r = run_scenario(cfg);
    REQUIRE(r.cu >= 0.08);
    REQUIRE(r.cu <= 0.25);
}

TEST_CASE("identical configs replay byte identical results") {
    ScenarioConfig cfg = quick_ir(1.5, 2, 21);
    RunResult a = run_scenario(cfg);
    RunResult b = run_scenario(cfg);
    REQUIRE(result_digest(a) == result_digest(b));
    REQUIRE(a.records_csv(0) == b.records_csv(0));
    REQUIRE(a.records_csv(1) == b.records_csv(1));
    REQUIRE(a.summary_csv(0) == b.summary_csv(0));

    ScenarioConfig other = cfg;
    other.seed = 22;
    RunResult c = run_scenario(other);
    REQUIRE(result_digest(a) != result_digest(c));
}

TEST_CASE("runs write their outputs into the requested directory") {
    fs::path dir = fresh_dir("out");
    ScenarioConfig cfg = quick_ir(0.5, 2, 5);
    cfg.out_dir = dir.string();
    RunResult r = run_scenario(cfg);
    REQUIRE(fs::exists(dir / "config.json"));
    REQUIRE(fs::exists(dir / "u0_records.csv"));
    REQUIRE(fs::exists(dir / "u1_summary.csv"));

    ScenarioConfig back = load_scenario_file((dir / "config.json").string());
    REQUIRE(back.seed == 5);
    REQUIRE(back.n_users == 2);

    std::ifstream rec(dir / "u0_records.csv");
    std::stringstream ss;
    ss << rec.rdbuf();
    REQUIRE(ss.str() == r.records_csv(0));
}

TEST_CASE("sweep expansion is the ordered cross product of its axes") {
    SweepSpec spec;
    spec.base = load_scenario_json("{}");
    spec.base.out_dir = "should_be_cleared";
    spec.n_users = {1, 2};
    spec.seeds = {1, 2};
    auto points = expand_sweep(spec);
    REQUIRE(points.size() == 4);
    REQUIRE(points[0].n_users == 1);
    REQUIRE(points[0].seed == 1);
    REQUIRE(points[1].n_users == 1);
    REQUIRE(points[1].seed == 2);
    REQUIRE(points[2].n_users == 2);
    REQUIRE(points[2].seed == 1);
    REQUIRE(points[3].n_users == 2);
    REQUIRE(points[3].seed == 2);
    for (const auto& p : points) {
        REQUIRE(p.cfg.out_dir.empty());
        REQUIRE(static_cast<int>(p.cfg.users.size()) == p.n_users);
        REQUIRE(p.cfg.seed == p.seed);
    }
}

TEST_CASE("the second distance axis moves only the second user") {
    SweepSpec spec;
    spec.base = load_scenario_json("{}");
    spec.seeds = {1};
    spec.n_users = {1, 2};
    spec.distance2_m = {9.5};
    auto points = expand_sweep(spec);
    REQUIRE(points.size() == 2);
    REQUIRE(points[0].cfg.users.size() == 1);
    REQUIRE(points[0].cfg.users[0].distance_m == 1.5);
    REQUIRE(points[1].cfg.users[0].distance_m == 1.5);
    REQUIRE(points[1].cfg.users[1].distance_m == 9.5);
}

TEST_CASE("sweep specs load from inline bases and from base files") {
    SweepSpec inline_spec = load_sweep_json(
        R"({"base": {"seed": 9, "sim_time_s": 0.5}, "axes": {"n_users": [1, 2]}})");
    REQUIRE(inline_spec.base.seed == 9);
    REQUIRE(inline_spec.seeds == std::vector<std::uint64_t>{9});
    REQUIRE(inline_spec.n_users == std::vector<int>{1, 2});

    fs::path dir = fresh_dir("sweepspec");
    {
        std::ofstream base(dir / "base.json");
        base << R"({"seed": 4, "sim_time_s": 0.5, "mode": "ir"})";
        std::ofstream sweep(dir / "sweep.json");
        sweep << R"({"base_file": "base.json", "seeds": [4, 5]})";
    }
    SweepSpec file_spec = load_sweep_file((dir / "sweep.json").string());
    REQUIRE(file_spec.base.seed == 4);
    REQUIRE(file_spec.base.users[0].codec.mode == CodecMode::intra_refresh);
    REQUIRE(file_spec.seeds == std::vector<std::uint64_t>{4, 5});

    REQUIRE_THROWS_WITH(load_sweep_json(R"({"axes": {"warp": [1]}})"),
                        Catch::Matchers::ContainsSubstring("unknown key 'warp'"));
    REQUIRE_THROWS_WITH(load_sweep_json("nonsense"),
                        Catch::Matchers::ContainsSubstring("parse error"));
}

TEST_CASE("a failing sweep point is recorded without sinking the sweep") {
    SweepSpec spec;
    spec.base = quick_ir(0.3, 1, 1);
    spec.seeds = {1};
    spec.distance_m = {1.5, 2000.0};  // the far point has no usable MCS
    SweepResult res = run_sweep(spec);
    REQUIRE(res.runs.size() == 2);
    REQUIRE(res.runs[0].result.has_value());
    REQUIRE_FALSE(res.runs[1].result.has_value());
    REQUIRE(res.failures.size() == 1);
    REQUIRE(res.failures[0].find("point 1") != std::string::npos);
    REQUIRE(res.aggregate_csv.find("1.5") != std::string::npos);
    REQUIRE(res.aggregate_csv.find("2000") == std::string::npos);
}

TEST_CASE("the aggregate does not depend on the worker count") {
    SweepSpec spec;
    spec.base = quick_ir(0.3, 1, 1);
    spec.n_users = {1, 2};
    spec.seeds = {1, 2};
    SweepResult serial = run_sweep(spec, 1);
    SweepResult parallel = run_sweep(spec, 3);
    REQUIRE(serial.failures.empty());
    REQUIRE(parallel.failures.empty());
    REQUIRE(serial.aggregate_csv == parallel.aggregate_csv);
    REQUIRE(serial.aggregate_csv.find("n_users,bitrate_bps") == 0);
}

TEST_CASE("sweep outputs land in per point directories") {
    fs::path dir = fresh_dir("sweepout");
    SweepSpec spec;
    spec.base = quick_ir(0.3, 1, 1);
    spec.seeds = {1, 2};
    spec.out_dir = dir.string();
    SweepResult res = run_sweep(spec);
    REQUIRE(res.failures.empty());
    REQUIRE(fs::exists(dir / "aggregate.csv"));
    REQUIRE(fs::exists(dir / "p0000_s1" / "u0_records.csv"));
    REQUIRE(fs::exists(dir / "p0001_s2" / "config.json"));
}
