#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrsim/time.hpp"

namespace vrsim {

// One modulation/coding scheme row. min_rssi_dbm is the weakest signal at
// which the rate is usable; rows are ordered by index with strictly
// increasing min_rssi and strictly increasing data rate.
struct McsEntry {
    int index = 0;
    int bits_per_subcarrier = 0;  // modulation order, bits per subcarrier per symbol
    int code_num = 1;             // code rate numerator
    int code_den = 2;             // code rate denominator
    double min_rssi_dbm = 0.0;
};

inline const std::vector<McsEntry>& default_mcs_table() {
    static const std::vector<McsEntry> table = {
        {0, 1, 1, 2, -82.0},  {1, 2, 1, 2, -79.0},  {2, 2, 3, 4, -77.0},
        {3, 4, 1, 2, -74.0},  {4, 4, 3, 4, -70.0},  {5, 6, 2, 3, -66.0},
        {6, 6, 3, 4, -65.0},  {7, 6, 5, 6, -64.0},  {8, 8, 3, 4, -59.0},
        {9, 8, 5, 6, -57.0},  {10, 10, 3, 4, -54.0}, {11, 10, 5, 6, -52.0},
        {12, 12, 3, 4, -49.0}, {13, 12, 5, 6, -46.0},
    };
    return table;
}

// Data subcarrier count per channel width (OFDMA numerology).
inline int data_subcarriers(int width_mhz) {
    switch (width_mhz) {
        case 20: return 234;
        case 40: return 468;
        case 80: return 980;
        case 160: return 1960;
        default:
            throw std::runtime_error("phy: unsupported channel width " +
                                     std::to_string(width_mhz) + " MHz");
    }
}

struct PhyConfig {
    double band_ghz = 5.0;
    int channel_width_mhz = 80;
    double tx_power_dbm = 20.0;
    int n_ss = 2;
    double guard_interval_us = 0.8;
    double preamble_us = 48.0;         // data (HE/EHT style) preamble
    double legacy_preamble_us = 20.0;  // control frame preamble
    double legacy_rate_mbps = 24.0;    // control frame rate

    // Indoor log-distance propagation with a linear obstruction term:
    // PL(d) = l0 + 10*gamma*log10(d) + k*d, d in metres clamped to >= 0.1.
    double pl_l0_db = 56.43;
    double pl_gamma = 3.2;
    double pl_k_db_per_m = 0.75;

    std::vector<McsEntry> mcs_table = default_mcs_table();

    SimTime symbol_ns() const { return 12'800 + from_us_f(guard_interval_us); }
    SimTime preamble_ns() const { return from_us_f(preamble_us); }
    SimTime legacy_preamble_ns() const { return from_us_f(legacy_preamble_us); }
};

inline void validate_phy(const PhyConfig& cfg) {
    std::vector<std::string> errors;
    if (!(cfg.tx_power_dbm == cfg.tx_power_dbm)) errors.push_back("tx_power_dbm is NaN");
    if (!(cfg.pl_l0_db == cfg.pl_l0_db) || !(cfg.pl_gamma == cfg.pl_gamma) ||
        !(cfg.pl_k_db_per_m == cfg.pl_k_db_per_m))
        errors.push_back("path loss parameter is NaN");
    if (cfg.n_ss < 1 || cfg.n_ss > 8) errors.push_back("n_ss out of range [1,8]");
    if (cfg.guard_interval_us <= 0) errors.push_back("guard_interval_us must be positive");
    if (cfg.legacy_rate_mbps <= 0) errors.push_back("legacy_rate_mbps must be positive");
    if (cfg.mcs_table.empty()) errors.push_back("mcs_table is empty");
    for (std::size_t i = 1; i < cfg.mcs_table.size(); ++i) {
        if (!(cfg.mcs_table[i].min_rssi_dbm > cfg.mcs_table[i - 1].min_rssi_dbm))
            errors.push_back("mcs_table min_rssi not strictly increasing at index " +
                             std::to_string(i));
    }
    data_subcarriers(cfg.channel_width_mhz);  // throws on unsupported width
    if (!errors.empty()) {
        std::string msg = "phy config invalid:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw std::runtime_error(msg);
    }
}

// Path loss in dB at distance d metres; distances below 0.1 m clamp to 0.1.
inline double path_loss_db(const PhyConfig& cfg, double distance_m) {
    double d = distance_m < 0.1 ? 0.1 : distance_m;
    return cfg.pl_l0_db + 10.0 * cfg.pl_gamma * std::log10(d) + cfg.pl_k_db_per_m * d;
}

inline double rssi_dbm(const PhyConfig& cfg, double distance_m) {
    return cfg.tx_power_dbm - path_loss_db(cfg, distance_m);
}

// Highest-index MCS whose sensitivity floor is at or below the given rssi;
// nullopt when even MCS0 is unusable.
inline std::optional<int> try_select_mcs(const PhyConfig& cfg, double rssi) {
    std::optional<int> best;
    for (const auto& e : cfg.mcs_table) {
        if (e.min_rssi_dbm <= rssi) best = e.index;
    }
    return best;
}

inline int select_mcs(const PhyConfig& cfg, double rssi) {
    auto mcs = try_select_mcs(cfg, rssi);
    if (!mcs) {
        throw std::runtime_error("phy: rssi " + std::to_string(rssi) +
                                 " dBm is below the weakest usable MCS");
    }
    return *mcs;
}

inline const McsEntry& mcs_entry(const PhyConfig& cfg, int mcs) {
    for (const auto& e : cfg.mcs_table) {
        if (e.index == mcs) return e;
    }
    throw std::runtime_error("phy: unknown MCS index " + std::to_string(mcs));
}

// Exact bits per OFDM symbol as a rational num/den, including spatial streams.
struct BitsPerSymbol {
    std::int64_t num = 1;
    std::int64_t den = 1;
};

inline BitsPerSymbol bits_per_symbol(const PhyConfig& cfg, int mcs) {
    const McsEntry& e = mcs_entry(cfg, mcs);
    BitsPerSymbol b;
    b.num = static_cast<std::int64_t>(cfg.n_ss) * data_subcarriers(cfg.channel_width_mhz) *
            e.bits_per_subcarrier * e.code_num;
    b.den = e.code_den;
    return b;
}

// PHY data rate in bits/second for the configured spatial streams and width.
inline double data_rate_bps(const PhyConfig& cfg, int mcs) {
    BitsPerSymbol b = bits_per_symbol(cfg, mcs);
    return (static_cast<double>(b.num) / static_cast<double>(b.den)) /
           (static_cast<double>(cfg.symbol_ns()) * 1e-9);
}

// Airtime of a data PPDU: preamble plus whole OFDM symbols. Zero payload
// costs exactly the preamble.
inline SimTime airtime_data_ns(const PhyConfig& cfg, int mcs, std::int64_t payload_bits) {
    BitsPerSymbol b = bits_per_symbol(cfg, mcs);
    std::int64_t symbols = ceil_div(payload_bits * b.den, b.num);
    return cfg.preamble_ns() + symbols * cfg.symbol_ns();
}

// Airtime of a control frame sent at the legacy rate, rounded up to whole ns.
inline SimTime airtime_legacy_ns(const PhyConfig& cfg, std::int64_t payload_bytes) {
    std::int64_t bits = payload_bytes * 8;
    auto rate_bps = static_cast<std::int64_t>(cfg.legacy_rate_mbps * 1e6);
    return cfg.legacy_preamble_ns() + ceil_div(bits * kNsPerSec, rate_bps);
}

// Resolved AP<->station link parameters for one user.
struct LinkState {
    double distance_m = 0.0;
    double rssi = 0.0;
    int mcs = 0;
};

inline LinkState make_link(const PhyConfig& cfg, double distance_m) {
    LinkState link;
    link.distance_m = distance_m;
    link.rssi = rssi_dbm(cfg, distance_m);
    link.mcs = select_mcs(cfg, link.rssi);
    return link;
}

}  // namespace vrsim
