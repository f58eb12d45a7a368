#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace vrsim {

// One HEVC NAL unit located in an Annex-B byte stream. size counts the start
// code, so NAL sizes partition the stream exactly.
struct NalUnit {
    std::size_t offset = 0;
    std::size_t size = 0;
    int start_code_len = 0;
    int type = 0;
    bool vcl = false;
    bool first_slice = false;
};

// An access unit (one coded picture) with its attached non-VCL NALs.
struct AccessUnit {
    std::vector<NalUnit> nals;
    std::size_t size = 0;
    bool is_i = false;
};

inline bool is_vcl_type(int type) { return type < 32; }
inline bool is_irap_type(int type) { return type >= 16 && type <= 21; }

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("hevc: cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

// Splits an Annex-B stream at its 3- or 4-byte start codes. Each NAL runs
// from its start code to the next one (or end of stream); trailing bytes
// belong to the last NAL. The stream must begin with a start code.
inline std::vector<NalUnit> scan_nals(const std::vector<std::uint8_t>& data) {
    struct StartCode {
        std::size_t offset;
        int len;
    };
    std::vector<StartCode> codes;
    const std::size_t n = data.size();
    std::size_t i = 0;
    while (i + 2 < n) {
        if (data[i] == 0 && data[i + 1] == 0) {
            if (data[i + 2] == 1) {
                codes.push_back({i, 3});
                i += 3;
                continue;
            }
            if (i + 3 < n && data[i + 2] == 0 && data[i + 3] == 1) {
                codes.push_back({i, 4});
                i += 4;
                continue;
            }
        }
        ++i;
    }
    if (codes.empty()) throw std::runtime_error("hevc: no start code found, empty trace");
    if (codes.front().offset != 0)
        throw std::runtime_error("hevc: stream does not begin with a start code");

    std::vector<NalUnit> nals;
    nals.reserve(codes.size());
    for (std::size_t c = 0; c < codes.size(); ++c) {
        NalUnit nal;
        nal.offset = codes[c].offset;
        nal.start_code_len = codes[c].len;
        std::size_t end = c + 1 < codes.size() ? codes[c + 1].offset : n;
        nal.size = end - nal.offset;
        std::size_t hdr = nal.offset + static_cast<std::size_t>(nal.start_code_len);
        if (hdr >= n) throw std::runtime_error("hevc: truncated NAL header");
        nal.type = (data[hdr] >> 1) & 0x3f;
        nal.vcl = is_vcl_type(nal.type);
        // first_slice_segment_in_pic_flag is the first bit after the two-byte
        // NAL header; the byte cannot be an emulation-prevention byte here.
        if (nal.vcl) {
            if (hdr + 2 >= n) throw std::runtime_error("hevc: truncated slice header");
            nal.first_slice = (data[hdr + 2] & 0x80) != 0;
        }
        nals.push_back(nal);
    }
    return nals;
}

// Groups NALs into access units: a VCL NAL with first_slice set opens a new
// unit, later slices of the same picture extend it, and non-VCL NALs attach
// to the unit that follows them (trailing ones to the last unit). A unit is
// an I frame when it contains any IRAP NAL (types 16..21).
inline std::vector<AccessUnit> group_access_units(const std::vector<NalUnit>& nals) {
    std::vector<AccessUnit> aus;
    std::vector<NalUnit> pending;  // non-VCL prefix for the next unit
    for (const NalUnit& nal : nals) {
        if (!nal.vcl) {
            pending.push_back(nal);
            continue;
        }
        if (nal.first_slice) {
            aus.emplace_back();
            for (const NalUnit& p : pending) aus.back().nals.push_back(p);
            pending.clear();
        } else if (aus.empty()) {
            throw std::runtime_error("hevc: slice continuation before any first slice");
        } else if (!pending.empty()) {
            for (const NalUnit& p : pending) aus.back().nals.push_back(p);
            pending.clear();
        }
        aus.back().nals.push_back(nal);
    }
    if (aus.empty()) throw std::runtime_error("hevc: no VCL NAL units, nothing to trace");
    for (const NalUnit& p : pending) aus.back().nals.push_back(p);
    for (AccessUnit& au : aus) {
        au.size = 0;
        au.is_i = false;
        for (const NalUnit& nal : au.nals) {
            au.size += nal.size;
            if (is_irap_type(nal.type)) au.is_i = true;
        }
    }
    return aus;
}

// Frame-size trace rows; the header comment carries the native frame rate and
// the measured mean bitrate so downstream playback can rescale the sizes.
inline void emit_trace(std::ostream& out, const std::vector<AccessUnit>& aus, int fps) {
    if (fps <= 0) throw std::runtime_error("hevc: fps must be positive");
    double total = 0.0;
    for (const AccessUnit& au : aus) total += static_cast<double>(au.size);
    double mean_bitrate = 8.0 * total * fps / static_cast<double>(aus.size());
    char head[128];
    std::snprintf(head, sizeof(head), "# fps=%d mean_bitrate_bps=%.0f\n", fps, mean_bitrate);
    out << head << "index,size_bytes,kind\n";
    for (std::size_t i = 0; i < aus.size(); ++i) {
        out << i << ',' << aus[i].size << ',' << (aus[i].is_i ? 'I' : 'P') << '\n';
    }
}

}  // namespace vrsim
