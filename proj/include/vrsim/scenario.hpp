#pragma once

#include <atomic>
#include <cctype>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vrsim/endpoints.hpp"
#include "vrsim/event_queue.hpp"
#include "vrsim/mac.hpp"
#include "vrsim/metrics.hpp"
#include "vrsim/phy.hpp"
#include "vrsim/traffic.hpp"
#include "vrsim/transport.hpp"

namespace vrsim {

using json = nlohmann::ordered_json;

struct UserConfig {
    double distance_m = 1.5;
    CodecConfig codec;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    double sim_time_s = 20.0;
    double grace_s = 0.2;
    std::string out_dir;
    int n_users = 1;
    std::vector<UserConfig> users;
    int jitter_buffer_frames = 2;
    double decode_delay_us = 0.0;
    int trace_native_fps = 0;  // fallback when a trace csv lacks its fps comment
    PhyConfig phy;
    MacConfig mac;
    TransportConfig transport;

    SimTime horizon_ns() const { return from_sec_f(sim_time_s); }
    SimTime grace_ns() const { return from_sec_f(grace_s); }
};

inline std::string codec_mode_string(const CodecConfig& c) {
    if (c.mode == CodecMode::intra_refresh) return "ir";
    return "gop" + std::to_string(c.gop_size);
}

// Accepts "ir", "gop" (size from gop_size) or "gop<N>".
inline bool parse_codec_mode(const std::string& s, CodecMode* mode, int* gop_size) {
    if (s == "ir") {
        *mode = CodecMode::intra_refresh;
        return true;
    }
    if (s.rfind("gop", 0) != 0) return false;
    *mode = CodecMode::gop;
    std::string rest = s.substr(3);
    if (rest.empty()) return true;
    for (char c : rest)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    *gop_size = std::stoi(rest);
    return true;
}

namespace detail {

inline void check_keys(const json& j, const std::string& where,
                       const std::vector<std::string>& allowed,
                       std::vector<std::string>& errors) {
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const auto& a : allowed)
            if (key == a) known = true;
        if (!known) errors.push_back(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
void get_to(const json& j, const std::string& where, const std::string& key, T& out,
            std::vector<std::string>& errors) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const std::exception&) {
        errors.push_back(where + ": key '" + key + "' has the wrong type");
    }
}

// Scalar-or-array per-user field; an array must have exactly n_users entries.
template <typename T>
std::vector<T> per_user(const json& j, const std::string& key, int n, T current,
                        std::vector<std::string>& errors) {
    std::vector<T> out(static_cast<std::size_t>(n < 0 ? 0 : n), current);
    if (!j.contains(key)) return out;
    const json& v = j.at(key);
    try {
        if (v.is_array()) {
            if (static_cast<int>(v.size()) != n) {
                errors.push_back("config: '" + key + "' has " + std::to_string(v.size()) +
                                 " entries for n_users=" + std::to_string(n));
                return out;
            }
            for (int i = 0; i < n; ++i) v.at(i).get_to(out[static_cast<std::size_t>(i)]);
        } else {
            T scalar;
            v.get_to(scalar);
            out.assign(static_cast<std::size_t>(n), scalar);
        }
    } catch (const std::exception&) {
        errors.push_back("config: key '" + key + "' has the wrong type");
    }
    return out;
}

inline void parse_phy(const json& j, PhyConfig& phy, std::vector<std::string>& errors) {
    check_keys(j, "phy",
               {"band_ghz", "channel_width_mhz", "tx_power_dbm", "n_ss", "guard_interval_us",
                "preamble_us", "legacy_preamble_us", "legacy_rate_mbps", "pl_l0_db",
                "pl_gamma", "pl_k_db_per_m", "mcs_min_rssi_dbm"},
               errors);
    get_to(j, "phy", "band_ghz", phy.band_ghz, errors);
    get_to(j, "phy", "channel_width_mhz", phy.channel_width_mhz, errors);
    get_to(j, "phy", "tx_power_dbm", phy.tx_power_dbm, errors);
    get_to(j, "phy", "n_ss", phy.n_ss, errors);
    get_to(j, "phy", "guard_interval_us", phy.guard_interval_us, errors);
    get_to(j, "phy", "preamble_us", phy.preamble_us, errors);
    get_to(j, "phy", "legacy_preamble_us", phy.legacy_preamble_us, errors);
    get_to(j, "phy", "legacy_rate_mbps", phy.legacy_rate_mbps, errors);
    get_to(j, "phy", "pl_l0_db", phy.pl_l0_db, errors);
    get_to(j, "phy", "pl_gamma", phy.pl_gamma, errors);
    get_to(j, "phy", "pl_k_db_per_m", phy.pl_k_db_per_m, errors);
    if (j.contains("mcs_min_rssi_dbm")) {
        std::vector<double> thresholds;
        get_to(j, "phy", "mcs_min_rssi_dbm", thresholds, errors);
        if (thresholds.size() != phy.mcs_table.size()) {
            errors.push_back("phy: mcs_min_rssi_dbm needs " +
                             std::to_string(phy.mcs_table.size()) + " entries");
        } else {
            for (std::size_t i = 0; i < thresholds.size(); ++i)
                phy.mcs_table[i].min_rssi_dbm = thresholds[i];
        }
    }
}

inline void parse_mac(const json& j, MacConfig& mac, std::vector<std::string>& errors) {
    check_keys(j, "mac",
               {"cw", "slot_us", "sifs_us", "difs_us", "mpdu_error_prob", "retry_limit",
                "rts_bytes", "cts_bytes", "back_bytes", "mac_overhead_bytes",
                "ampdu_max_mpdus", "ampdu_max_airtime_ms", "queue_cap_pkts", "wire_delay_us"},
               errors);
    get_to(j, "mac", "cw", mac.cw, errors);
    get_to(j, "mac", "slot_us", mac.slot_us, errors);
    get_to(j, "mac", "sifs_us", mac.sifs_us, errors);
    get_to(j, "mac", "difs_us", mac.difs_us, errors);
    get_to(j, "mac", "mpdu_error_prob", mac.mpdu_error_prob, errors);
    get_to(j, "mac", "retry_limit", mac.retry_limit, errors);
    get_to(j, "mac", "rts_bytes", mac.rts_bytes, errors);
    get_to(j, "mac", "cts_bytes", mac.cts_bytes, errors);
    get_to(j, "mac", "back_bytes", mac.back_bytes, errors);
    get_to(j, "mac", "mac_overhead_bytes", mac.mac_overhead_bytes, errors);
    get_to(j, "mac", "ampdu_max_mpdus", mac.ampdu_max_mpdus, errors);
    get_to(j, "mac", "ampdu_max_airtime_ms", mac.ampdu_max_airtime_ms, errors);
    get_to(j, "mac", "queue_cap_pkts", mac.queue_cap_pkts, errors);
    get_to(j, "mac", "wire_delay_us", mac.wire_delay_us, errors);
}

inline void parse_transport(const json& j, TransportConfig& t,
                            std::vector<std::string>& errors) {
    check_keys(j, "transport",
               {"max_fragment_payload_bytes", "header_bytes", "udp_ip_overhead_bytes",
                "loss_report_bytes", "stats_bytes", "tracking_bytes", "audio_pair_bytes",
                "audio_period_ms", "reassembly_timeout_ms"},
               errors);
    get_to(j, "transport", "max_fragment_payload_bytes", t.max_fragment_payload_bytes, errors);
    get_to(j, "transport", "header_bytes", t.header_bytes, errors);
    get_to(j, "transport", "udp_ip_overhead_bytes", t.udp_ip_overhead_bytes, errors);
    get_to(j, "transport", "loss_report_bytes", t.loss_report_bytes, errors);
    get_to(j, "transport", "stats_bytes", t.stats_bytes, errors);
    get_to(j, "transport", "tracking_bytes", t.tracking_bytes, errors);
    get_to(j, "transport", "audio_pair_bytes", t.audio_pair_bytes, errors);
    get_to(j, "transport", "audio_period_ms", t.audio_period_ms, errors);
    get_to(j, "transport", "reassembly_timeout_ms", t.reassembly_timeout_ms, errors);
}

}  // namespace detail

// Validation collects every violation before failing.
inline std::vector<std::string> validate_scenario(const ScenarioConfig& cfg) {
    std::vector<std::string> errors;
    if (cfg.n_users < 1) errors.push_back("config: n_users must be >= 1");
    if (static_cast<int>(cfg.users.size()) != cfg.n_users)
        errors.push_back("config: resolved user list does not match n_users");
    if (cfg.sim_time_s <= 0) errors.push_back("config: sim_time_s must be positive");
    if (cfg.grace_s < 0) errors.push_back("config: grace_s must be >= 0");
    if (cfg.jitter_buffer_frames < 1)
        errors.push_back("config: jitter_buffer_frames must be >= 1");
    if (cfg.decode_delay_us < 0) errors.push_back("config: decode_delay_us must be >= 0");
    try {
        validate_phy(cfg.phy);
    } catch (const std::exception& e) {
        errors.push_back(e.what());
    }
    if (cfg.mac.cw < 1) errors.push_back("mac: cw must be >= 1");
    if (cfg.mac.slot_us <= 0) errors.push_back("mac: slot_us must be positive");
    if (cfg.mac.sifs_us < 0) errors.push_back("mac: sifs_us must be >= 0");
    if (cfg.mac.difs_us < 0) errors.push_back("mac: difs_us must be >= 0");
    if (cfg.mac.mpdu_error_prob < 0 || cfg.mac.mpdu_error_prob > 1)
        errors.push_back("mac: mpdu_error_prob must be in [0,1]");
    if (cfg.mac.retry_limit < 0) errors.push_back("mac: retry_limit must be >= 0");
    if (cfg.mac.ampdu_max_mpdus < 1) errors.push_back("mac: ampdu_max_mpdus must be >= 1");
    if (cfg.mac.ampdu_max_airtime_ms <= 0)
        errors.push_back("mac: ampdu_max_airtime_ms must be positive");
    if (cfg.mac.queue_cap_pkts < 1) errors.push_back("mac: queue_cap_pkts must be >= 1");
    if (cfg.mac.wire_delay_us < 0) errors.push_back("mac: wire_delay_us must be >= 0");
    if (cfg.transport.max_fragment_payload_bytes < 1)
        errors.push_back("transport: max_fragment_payload_bytes must be >= 1");
    if (cfg.transport.reassembly_timeout_ms <= 0)
        errors.push_back("transport: reassembly_timeout_ms must be positive");
    if (cfg.transport.audio_period_ms <= 0)
        errors.push_back("transport: audio_period_ms must be positive");
    for (int u = 0; u < static_cast<int>(cfg.users.size()); ++u) {
        const UserConfig& uc = cfg.users[static_cast<std::size_t>(u)];
        const std::string who = "user " + std::to_string(u);
        if (uc.distance_m <= 0) errors.push_back(who + ": distance_m must be positive");
        if (uc.codec.bitrate_bps <= 0) errors.push_back(who + ": bitrate_bps must be positive");
        if (uc.codec.fps < 1) errors.push_back(who + ": fps must be >= 1");
        if (uc.codec.mode == CodecMode::gop && uc.codec.gop_size < 1)
            errors.push_back(who + ": gop_size must be >= 1");
        if (uc.codec.i_p_ratio <= 0) errors.push_back(who + ": gop_i_p_ratio must be positive");
        if (uc.codec.gop_sigma < 0 || uc.codec.ir_sigma < 0)
            errors.push_back(who + ": size jitter sigma must be >= 0");
        if (uc.codec.t_chunk_s <= 0) errors.push_back(who + ": t_chunk_s must be positive");
        // Link feasibility is a setup error: report it before any run starts.
        try {
            validate_phy(cfg.phy);
            double rssi = rssi_dbm(cfg.phy, uc.distance_m);
            if (!try_select_mcs(cfg.phy, rssi)) {
                errors.push_back(who + ": rssi " + format_double(rssi) + " dBm at " +
                                 format_double(uc.distance_m) +
                                 " m is below the weakest usable MCS");
            }
        } catch (const std::exception&) {
            // phy errors already reported above
        }
    }
    return errors;
}

inline void throw_if_invalid(const std::vector<std::string>& errors) {
    if (errors.empty()) return;
    std::string msg = "scenario config invalid:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw std::runtime_error(msg);
}

// Parses a scenario config from JSON. An empty or whitespace-only document
// yields the built-in defaults. Unknown keys, type mismatches, range
// violations and infeasible links are all reported together.
inline ScenarioConfig load_scenario_json(const std::string& text) {
    ScenarioConfig cfg;
    std::vector<std::string> errors;
    std::string trimmed;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) trimmed.push_back(c);
    json j = json::object();
    if (!trimmed.empty()) {
        try {
            j = json::parse(text);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("config: JSON parse error: ") + e.what());
        }
        if (!j.is_object()) throw std::runtime_error("config: top level must be an object");
    }

    detail::check_keys(j, "config",
                       {"seed", "sim_time_s", "grace_s", "out_dir", "n_users", "distance_m",
                        "bitrate_bps", "fps", "mode", "gop_size", "gop_i_p_ratio",
                        "gop_sigma", "ir_sigma", "t_chunk_s", "trace_file",
                        "trace_native_fps", "jitter_buffer_frames", "decode_delay_us",
                        "phy", "mac", "transport"},
                       errors);
    detail::get_to(j, "config", "seed", cfg.seed, errors);
    detail::get_to(j, "config", "sim_time_s", cfg.sim_time_s, errors);
    detail::get_to(j, "config", "grace_s", cfg.grace_s, errors);
    detail::get_to(j, "config", "out_dir", cfg.out_dir, errors);
    detail::get_to(j, "config", "n_users", cfg.n_users, errors);
    detail::get_to(j, "config", "jitter_buffer_frames", cfg.jitter_buffer_frames, errors);
    detail::get_to(j, "config", "decode_delay_us", cfg.decode_delay_us, errors);
    detail::get_to(j, "config", "trace_native_fps", cfg.trace_native_fps, errors);
    if (j.contains("phy") && j.at("phy").is_object())
        detail::parse_phy(j.at("phy"), cfg.phy, errors);
    else if (j.contains("phy"))
        errors.push_back("config: 'phy' must be an object");
    if (j.contains("mac") && j.at("mac").is_object())
        detail::parse_mac(j.at("mac"), cfg.mac, errors);
    else if (j.contains("mac"))
        errors.push_back("config: 'mac' must be an object");
    if (j.contains("transport") && j.at("transport").is_object())
        detail::parse_transport(j.at("transport"), cfg.transport, errors);
    else if (j.contains("transport"))
        errors.push_back("config: 'transport' must be an object");

    const int n = cfg.n_users;
    CodecConfig base;
    auto distances = detail::per_user<double>(j, "distance_m", n, 1.5, errors);
    auto bitrates = detail::per_user<std::int64_t>(j, "bitrate_bps", n, base.bitrate_bps, errors);
    auto fpss = detail::per_user<int>(j, "fps", n, base.fps, errors);
    auto modes = detail::per_user<std::string>(j, "mode", n, "gop90", errors);
    auto gop_sizes = detail::per_user<int>(j, "gop_size", n, base.gop_size, errors);
    auto ratios = detail::per_user<double>(j, "gop_i_p_ratio", n, base.i_p_ratio, errors);
    auto gop_sigmas = detail::per_user<double>(j, "gop_sigma", n, base.gop_sigma, errors);
    auto ir_sigmas = detail::per_user<double>(j, "ir_sigma", n, base.ir_sigma, errors);
    auto chunks = detail::per_user<double>(j, "t_chunk_s", n, base.t_chunk_s, errors);
    auto traces = detail::per_user<std::string>(j, "trace_file", n, std::string(), errors);
    cfg.users.clear();
    for (int u = 0; u < n; ++u) {
        UserConfig uc;
        auto i = static_cast<std::size_t>(u);
        uc.distance_m = distances[i];
        uc.codec.bitrate_bps = bitrates[i];
        uc.codec.fps = fpss[i];
        uc.codec.gop_size = gop_sizes[i];
        if (!parse_codec_mode(modes[i], &uc.codec.mode, &uc.codec.gop_size))
            errors.push_back("user " + std::to_string(u) + ": unknown mode '" + modes[i] +
                             "' (expected 'ir', 'gop' or 'gop<N>')");
        uc.codec.i_p_ratio = ratios[i];
        uc.codec.gop_sigma = gop_sigmas[i];
        uc.codec.ir_sigma = ir_sigmas[i];
        uc.codec.t_chunk_s = chunks[i];
        uc.codec.trace_file = traces[i];
        cfg.users.push_back(uc);
    }

    auto more = validate_scenario(cfg);
    errors.insert(errors.end(), more.begin(), more.end());
    throw_if_invalid(errors);
    return cfg;
}

inline ScenarioConfig load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_scenario_json(ss.str());
}

// Canonical serialization; load(dump(cfg)) == cfg up to representation.
inline json scenario_to_json(const ScenarioConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["sim_time_s"] = cfg.sim_time_s;
    j["grace_s"] = cfg.grace_s;
    j["out_dir"] = cfg.out_dir;
    j["n_users"] = cfg.n_users;
    json distance = json::array(), bitrate = json::array(), fps = json::array(),
         mode = json::array(), ratio = json::array(), gop_sigma = json::array(),
         ir_sigma = json::array(), t_chunk = json::array(), trace = json::array();
    for (const auto& u : cfg.users) {
        distance.push_back(u.distance_m);
        bitrate.push_back(u.codec.bitrate_bps);
        fps.push_back(u.codec.fps);
        mode.push_back(codec_mode_string(u.codec));
        ratio.push_back(u.codec.i_p_ratio);
        gop_sigma.push_back(u.codec.gop_sigma);
        ir_sigma.push_back(u.codec.ir_sigma);
        t_chunk.push_back(u.codec.t_chunk_s);
        trace.push_back(u.codec.trace_file);
    }
    j["distance_m"] = distance;
    j["bitrate_bps"] = bitrate;
    j["fps"] = fps;
    j["mode"] = mode;
    j["gop_i_p_ratio"] = ratio;
    j["gop_sigma"] = gop_sigma;
    j["ir_sigma"] = ir_sigma;
    j["t_chunk_s"] = t_chunk;
    j["trace_file"] = trace;
    j["trace_native_fps"] = cfg.trace_native_fps;
    j["jitter_buffer_frames"] = cfg.jitter_buffer_frames;
    j["decode_delay_us"] = cfg.decode_delay_us;
    json phy;
    phy["band_ghz"] = cfg.phy.band_ghz;
    phy["channel_width_mhz"] = cfg.phy.channel_width_mhz;
    phy["tx_power_dbm"] = cfg.phy.tx_power_dbm;
    phy["n_ss"] = cfg.phy.n_ss;
    phy["guard_interval_us"] = cfg.phy.guard_interval_us;
    phy["preamble_us"] = cfg.phy.preamble_us;
    phy["legacy_preamble_us"] = cfg.phy.legacy_preamble_us;
    phy["legacy_rate_mbps"] = cfg.phy.legacy_rate_mbps;
    phy["pl_l0_db"] = cfg.phy.pl_l0_db;
    phy["pl_gamma"] = cfg.phy.pl_gamma;
    phy["pl_k_db_per_m"] = cfg.phy.pl_k_db_per_m;
    json thresholds = json::array();
    for (const auto& e : cfg.phy.mcs_table) thresholds.push_back(e.min_rssi_dbm);
    phy["mcs_min_rssi_dbm"] = thresholds;
    j["phy"] = phy;
    json mac;
    mac["cw"] = cfg.mac.cw;
    mac["slot_us"] = cfg.mac.slot_us;
    mac["sifs_us"] = cfg.mac.sifs_us;
    mac["difs_us"] = cfg.mac.difs_us;
    mac["mpdu_error_prob"] = cfg.mac.mpdu_error_prob;
    mac["retry_limit"] = cfg.mac.retry_limit;
    mac["rts_bytes"] = cfg.mac.rts_bytes;
    mac["cts_bytes"] = cfg.mac.cts_bytes;
    mac["back_bytes"] = cfg.mac.back_bytes;
    mac["mac_overhead_bytes"] = cfg.mac.mac_overhead_bytes;
    mac["ampdu_max_mpdus"] = cfg.mac.ampdu_max_mpdus;
    mac["ampdu_max_airtime_ms"] = cfg.mac.ampdu_max_airtime_ms;
    mac["queue_cap_pkts"] = cfg.mac.queue_cap_pkts;
    mac["wire_delay_us"] = cfg.mac.wire_delay_us;
    j["mac"] = mac;
    json tr;
    tr["max_fragment_payload_bytes"] = cfg.transport.max_fragment_payload_bytes;
    tr["header_bytes"] = cfg.transport.header_bytes;
    tr["udp_ip_overhead_bytes"] = cfg.transport.udp_ip_overhead_bytes;
    tr["loss_report_bytes"] = cfg.transport.loss_report_bytes;
    tr["stats_bytes"] = cfg.transport.stats_bytes;
    tr["tracking_bytes"] = cfg.transport.tracking_bytes;
    tr["audio_pair_bytes"] = cfg.transport.audio_pair_bytes;
    tr["audio_period_ms"] = cfg.transport.audio_period_ms;
    tr["reassembly_timeout_ms"] = cfg.transport.reassembly_timeout_ms;
    j["transport"] = tr;
    return j;
}

struct RunResult {
    std::vector<UserSummary> summaries;
    std::deque<UserMetrics> metrics;
    ChannelLedger ledger;
    RunSummary kernel_summary;
    double cu = 0.0;
    std::vector<MacNodeCounters> node_counters;
    std::vector<std::size_t> node_residual;
    std::vector<ServerEndpoint::Counters> server_counters;
    std::vector<ClientEndpoint::Counters> client_counters;
    std::vector<ReassemblyBuffer::Counters> reassembly_counters;
    std::vector<std::size_t> reassembly_in_flight;
    std::int64_t uplink_drops = 0;

    std::string records_csv(int user) const {
        std::ostringstream out;
        write_records_csv(out, metrics.at(static_cast<std::size_t>(user)).frames());
        return out.str();
    }
    std::string summary_csv(int user) const {
        std::ostringstream out;
        write_summary_csv(out, {summaries.at(static_cast<std::size_t>(user))});
        return out.str();
    }
};

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t result_digest(const RunResult& r) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t u = 0; u < r.metrics.size(); ++u) {
        h = fnv1a(r.records_csv(static_cast<int>(u)), h);
        h = fnv1a(r.summary_csv(static_cast<int>(u)), h);
    }
    return h;
}

// Builds and runs one scenario to horizon + grace. Traffic sources stop at
// the horizon; the grace window lets queued frames settle. Channel airtime is
// only accounted up to the horizon.
inline RunResult run_scenario(const ScenarioConfig& cfg) {
    throw_if_invalid(validate_scenario(cfg));
    const SimTime horizon = cfg.horizon_ns();

    Kernel kernel;
    Channel channel(kernel, cfg.phy, cfg.mac, horizon);
    channel.add_ap(cfg.seed);

    std::deque<UserMetrics> metrics;
    std::vector<std::unique_ptr<ServerEndpoint>> servers;
    std::vector<std::unique_ptr<ClientEndpoint>> clients;
    std::map<std::string, std::unique_ptr<FrameTrace>> traces;
    RunResult result;

    for (int u = 0; u < cfg.n_users; ++u) {
        const UserConfig& uc = cfg.users[static_cast<std::size_t>(u)];
        int sta = channel.add_station(cfg.seed, make_link(cfg.phy, uc.distance_m));
        metrics.emplace_back(u);
        Rng setup(cfg.seed, 0x53455455ULL + static_cast<std::uint64_t>(u));
        Rng source_rng(cfg.seed, 0x54524146ULL + static_cast<std::uint64_t>(u));
        // Clients start at arbitrary wall times; random sub-period phases keep
        // the per-user clocks unsynchronized while the counts stay exact.
        SimTime frame_period = tick_time(1, uc.codec.fps);
        SimTime frame_phase = setup.uniform(static_cast<std::uint32_t>(frame_period));
        SimTime audio_phase =
            setup.uniform(static_cast<std::uint32_t>(cfg.transport.audio_period_ns()));
        SimTime tracking_phase =
            setup.uniform(static_cast<std::uint32_t>(tick_time(1, 3LL * uc.codec.fps)));
        std::unique_ptr<VideoSource> source;
        if (!uc.codec.trace_file.empty()) {
            auto it = traces.find(uc.codec.trace_file);
            if (it == traces.end()) {
                auto trace = std::make_unique<FrameTrace>(
                    load_trace_csv(uc.codec.trace_file, cfg.trace_native_fps));
                it = traces.emplace(uc.codec.trace_file, std::move(trace)).first;
            }
            std::size_t offset = setup.uniform(static_cast<std::uint32_t>(
                it->second->length()));
            source = std::make_unique<VideoSource>(uc.codec, source_rng, 0, it->second.get(),
                                                   offset);
        } else {
            int phase = 0;
            if (uc.codec.mode == CodecMode::gop)
                phase = static_cast<int>(setup.uniform(
                    static_cast<std::uint32_t>(uc.codec.gop_size)));
            source = std::make_unique<VideoSource>(uc.codec, source_rng, phase);
        }
        servers.push_back(std::make_unique<ServerEndpoint>(
            kernel, channel, cfg.transport, uc.codec, u, sta, horizon,
            from_us_f(cfg.mac.wire_delay_us), frame_phase, audio_phase,
            metrics[static_cast<std::size_t>(u)], std::move(source)));
        clients.push_back(std::make_unique<ClientEndpoint>(
            kernel, channel, cfg.transport, u, sta, uc.codec.fps, horizon,
            cfg.jitter_buffer_frames, from_us_f(cfg.decode_delay_us), tracking_phase,
            metrics[static_cast<std::size_t>(u)]));
    }

    channel.set_on_deliver([&](int dst, const StreamPacket& pkt) {
        if (dst == 0)
            servers[static_cast<std::size_t>(pkt.user)]->on_uplink(pkt);
        else
            clients[static_cast<std::size_t>(dst - 1)]->on_downlink(pkt);
    });
    channel.set_on_drop([&](int src, const StreamPacket& pkt) {
        if (src == 0 && pkt.stream == StreamId::video)
            metrics[static_cast<std::size_t>(pkt.user)].on_fragment_dropped(pkt.frame_index);
        else if (src != 0)
            ++result.uplink_drops;
    });

    for (auto& s : servers) s->start();
    for (auto& c : clients) c->start();

    kernel.run_until(horizon);
    result.kernel_summary = kernel.run_until(horizon + cfg.grace_ns());

    result.ledger = channel.ledger();
    result.cu = channel.utilization();
    for (int u = 0; u < cfg.n_users; ++u) {
        auto i = static_cast<std::size_t>(u);
        result.summaries.push_back(metrics[i].summarize(result.cu));
        result.server_counters.push_back(servers[i]->counters());
        result.client_counters.push_back(clients[i]->counters());
        result.reassembly_counters.push_back(clients[i]->reassembly().counters());
        result.reassembly_in_flight.push_back(clients[i]->reassembly().in_flight());
    }
    for (int nid = 0; nid < channel.node_count(); ++nid) {
        result.node_counters.push_back(channel.node(nid).counters);
        result.node_residual.push_back(channel.node(nid).queue.size());
    }
    result.metrics = std::move(metrics);

    if (!cfg.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(cfg.out_dir);
        std::ofstream cfg_out(fs::path(cfg.out_dir) / "config.json");
        cfg_out << scenario_to_json(cfg).dump(2) << '\n';
        for (int u = 0; u < cfg.n_users; ++u) {
            std::ofstream rec(fs::path(cfg.out_dir) /
                              ("u" + std::to_string(u) + "_records.csv"));
            rec << result.records_csv(u);
            std::ofstream sum(fs::path(cfg.out_dir) /
                              ("u" + std::to_string(u) + "_summary.csv"));
            sum << result.summary_csv(u);
        }
    }
    return result;
}

// One sweep axis assignment applied over a base scenario.
struct SweepPoint {
    int index = 0;
    std::uint64_t seed = 0;
    ScenarioConfig cfg;
    int n_users = 0;
    std::int64_t bitrate_bps = 0;
    int fps = 0;
    std::string mode;
    double distance_m = 0.0;
    std::optional<double> distance2_m;
};

struct SweepSpec {
    ScenarioConfig base;
    std::vector<int> n_users;
    std::vector<std::int64_t> bitrate_bps;
    std::vector<int> fps;
    std::vector<std::string> mode;
    std::vector<double> distance_m;
    std::vector<double> distance2_m;  // distance of user 1, anomaly sweeps
    std::vector<std::uint64_t> seeds;
    std::string out_dir;
};

inline SweepSpec load_sweep_json(const std::string& text, const std::string& base_dir = "") {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("sweep: JSON parse error: ") + e.what());
    }
    std::vector<std::string> errors;
    detail::check_keys(j, "sweep", {"base", "base_file", "axes", "seeds", "out_dir"}, errors);
    SweepSpec spec;
    if (j.contains("base_file")) {
        std::string path = j.at("base_file").get<std::string>();
        if (!base_dir.empty() && !std::filesystem::path(path).is_absolute())
            path = (std::filesystem::path(base_dir) / path).string();
        spec.base = load_scenario_file(path);
    } else if (j.contains("base")) {
        spec.base = load_scenario_json(j.at("base").dump());
    } else {
        spec.base = load_scenario_json("{}");
    }
    if (j.contains("axes")) {
        const json& axes = j.at("axes");
        detail::check_keys(axes, "sweep axes",
                           {"n_users", "bitrate_bps", "fps", "mode", "distance_m",
                            "distance2_m"},
                           errors);
        detail::get_to(axes, "sweep axes", "n_users", spec.n_users, errors);
        detail::get_to(axes, "sweep axes", "bitrate_bps", spec.bitrate_bps, errors);
        detail::get_to(axes, "sweep axes", "fps", spec.fps, errors);
        detail::get_to(axes, "sweep axes", "mode", spec.mode, errors);
        detail::get_to(axes, "sweep axes", "distance_m", spec.distance_m, errors);
        detail::get_to(axes, "sweep axes", "distance2_m", spec.distance2_m, errors);
    }
    detail::get_to(j, "sweep", "seeds", spec.seeds, errors);
    detail::get_to(j, "sweep", "out_dir", spec.out_dir, errors);
    if (spec.seeds.empty()) spec.seeds.push_back(spec.base.seed);
    throw_if_invalid(errors);
    return spec;
}

inline SweepSpec load_sweep_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("sweep: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_sweep_json(ss.str(), std::filesystem::path(path).parent_path().string());
}

// Cross product of the populated axes times the seed list, in declaration
// order: n_users, bitrate, fps, mode, distance, distance2, seed.
inline std::vector<SweepPoint> expand_sweep(const SweepSpec& spec) {
    auto one = [](auto v) { return std::vector<decltype(v)>{v}; };
    auto n_users = spec.n_users.empty() ? one(spec.base.n_users) : spec.n_users;
    auto bitrates = spec.bitrate_bps.empty()
                        ? one(spec.base.users.at(0).codec.bitrate_bps)
                        : spec.bitrate_bps;
    auto fpss = spec.fps.empty() ? one(spec.base.users.at(0).codec.fps) : spec.fps;
    auto modes = spec.mode.empty() ? one(codec_mode_string(spec.base.users.at(0).codec))
                                   : spec.mode;
    auto distances = spec.distance_m.empty() ? one(spec.base.users.at(0).distance_m)
                                             : spec.distance_m;
    std::vector<std::optional<double>> distances2;
    if (spec.distance2_m.empty())
        distances2.push_back(std::nullopt);
    else
        for (double d : spec.distance2_m) distances2.push_back(d);

    std::vector<SweepPoint> points;
    int index = 0;
    for (int n : n_users)
        for (std::int64_t b : bitrates)
            for (int f : fpss)
                for (const std::string& m : modes)
                    for (double d : distances)
                        for (const auto& d2 : distances2)
                            for (std::uint64_t seed : spec.seeds) {
                                SweepPoint p;
                                p.index = index++;
                                p.seed = seed;
                                p.n_users = n;
                                p.bitrate_bps = b;
                                p.fps = f;
                                p.mode = m;
                                p.distance_m = d;
                                p.distance2_m = d2;
                                ScenarioConfig c = spec.base;
                                c.seed = seed;
                                c.out_dir.clear();
                                c.n_users = n;
                                UserConfig proto =
                                    c.users.empty() ? UserConfig{} : c.users.front();
                                c.users.assign(static_cast<std::size_t>(n), proto);
                                for (auto& uc : c.users) {
                                    uc.distance_m = d;
                                    uc.codec.bitrate_bps = b;
                                    uc.codec.fps = f;
                                    parse_codec_mode(m, &uc.codec.mode, &uc.codec.gop_size);
                                }
                                if (d2 && n >= 2) c.users[1].distance_m = *d2;
                                p.cfg = c;
                                points.push_back(std::move(p));
                            }
    return points;
}

struct SweepRunOutcome {
    SweepPoint point;
    std::optional<RunResult> result;
    std::string error;
};

struct SweepResult {
    std::vector<SweepRunOutcome> runs;
    std::string aggregate_csv;
    std::vector<std::string> failures;
};

inline std::string sweep_aggregate_csv(const std::vector<SweepRunOutcome>& runs) {
    std::ostringstream out;
    out << "n_users,bitrate_bps,fps,mode,distance_m,distance2_m,seed,user_id,flr,"
           "p50_ms,p95_ms,p99_ms,cu,stalls,mac_drops\n";
    for (const auto& run : runs) {
        if (!run.result) continue;
        for (const UserSummary& s : run.result->summaries) {
            out << run.point.n_users << ',' << run.point.bitrate_bps << ',' << run.point.fps
                << ',' << run.point.mode << ',' << format_double(run.point.distance_m) << ',';
            if (run.point.distance2_m) out << format_double(*run.point.distance2_m);
            out << ',' << run.point.seed << ',' << s.user << ',' << format_optional(s.flr)
                << ',' << format_optional(s.p50_ms) << ',' << format_optional(s.p95_ms)
                << ',' << format_optional(s.p99_ms) << ',' << format_double(s.cu) << ','
                << s.stalls << ',' << s.mac_dropped << '\n';
        }
    }
    return out.str();
}

// Runs every point on isolated kernels; a failing point is recorded and the
// sweep continues. The aggregate is assembled in point order, so its bytes do
// not depend on the job count.
inline SweepResult run_sweep(const SweepSpec& spec, int jobs = 1) {
    std::vector<SweepPoint> points = expand_sweep(spec);
    SweepResult result;
    result.runs.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        SweepPoint p = points[i];
        if (!spec.out_dir.empty()) {
            char dir[64];
            std::snprintf(dir, sizeof(dir), "p%04d_s%llu", p.index,
                          static_cast<unsigned long long>(p.seed));
            p.cfg.out_dir = (std::filesystem::path(spec.out_dir) / dir).string();
        }
        result.runs[i].point = std::move(p);
    }

    auto run_one = [&](std::size_t i) {
        SweepRunOutcome& out = result.runs[i];
        try {
            out.result = run_scenario(out.point.cfg);
        } catch (const std::exception& e) {
            out.error = e.what();
        }
    };

    if (jobs <= 1) {
        for (std::size_t i = 0; i < result.runs.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next.fetch_add(1); i < result.runs.size();
                 i = next.fetch_add(1))
                run_one(i);
        };
        std::vector<std::thread> pool;
        int n_threads = std::min<int>(jobs, static_cast<int>(result.runs.size()));
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (const auto& run : result.runs) {
        if (!run.error.empty())
            result.failures.push_back("point " + std::to_string(run.point.index) + " seed " +
                                      std::to_string(run.point.seed) + ": " + run.error);
    }
    result.aggregate_csv = sweep_aggregate_csv(result.runs);

    if (!spec.out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(spec.out_dir);
        std::ofstream agg(fs::path(spec.out_dir) / "aggregate.csv");
        agg << result.aggregate_csv;
        if (!result.failures.empty()) {
            std::ofstream fail(fs::path(spec.out_dir) / "failures.txt");
            for (const auto& f : result.failures) fail << f << '\n';
        }
    }
    return result;
}

}  // namespace vrsim
