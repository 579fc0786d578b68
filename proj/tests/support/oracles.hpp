#pragma once

// Test-side reference implementations, kept independent of the code paths
// they check.

#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace oracle {

// Ones-complement checksum computed the pedestrian way: byte pairs added
// into a 64-bit accumulator, folded at the end.  Deliberately written
// differently from the production 32-bit streaming version.
inline uint16_t ref_inet_checksum(std::span<const std::byte> data) {
    uint64_t sum = 0;
    size_t n = data.size();
    for (size_t i = 0; i + 1 < n; i += 2) {
        uint16_t word = static_cast<uint16_t>(
            (std::to_integer<uint16_t>(data[i]) << 8) | std::to_integer<uint16_t>(data[i + 1]));
        sum += word;
    }
    if (n % 2) {
        sum += static_cast<uint16_t>(std::to_integer<uint16_t>(data[n - 1]) << 8);
    }
    while (sum >> 16) {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    return static_cast<uint16_t>(~sum & 0xFFFF);
}

// Full-frame verifier: checks the IPv4 header checksum and the TCP
// checksum (with pseudo header) of an Ethernet II frame.
inline bool ref_verify_frame(std::span<const std::byte> frame) {
    if (frame.size() < 54) {
        return false;
    }
    auto u16 = [&](size_t off) {
        return static_cast<uint16_t>((std::to_integer<uint16_t>(frame[off]) << 8) |
                                     std::to_integer<uint16_t>(frame[off + 1]));
    };
    if (u16(12) != 0x0800) {
        return false;
    }
    size_t ip_off = 14;
    size_t ihl = (std::to_integer<uint8_t>(frame[ip_off]) & 0x0F) * 4;
    if (ihl < 20 || frame.size() < ip_off + ihl) {
        return false;
    }
    if (ref_inet_checksum(frame.subspan(ip_off, ihl)) != 0) {
        return false;
    }
    uint16_t total = u16(ip_off + 2);
    if (total < ihl || frame.size() < ip_off + total) {
        return false;
    }
    size_t seg_len = total - ihl;
    // Pseudo header: src ip, dst ip, proto, tcp length.
    uint64_t sum = 0;
    for (size_t i = 0; i < 4; i += 2) {
        sum += u16(ip_off + 12 + i);
        sum += u16(ip_off + 16 + i);
    }
    sum += 6;
    sum += seg_len;
    size_t tcp_off = ip_off + ihl;
    for (size_t i = 0; i + 1 < seg_len; i += 2) {
        sum += u16(tcp_off + i);
    }
    if (seg_len % 2) {
        sum += static_cast<uint16_t>(std::to_integer<uint16_t>(frame[tcp_off + seg_len - 1]) << 8);
    }
    while (sum >> 16) {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    return (~sum & 0xFFFF) == 0;
}

// Brute-force reassembly oracle: first writer wins per byte, coverage is
// the union.  Positions are relative to a fixed base sequence.
class ByteMapReassembler {
public:
    explicit ByteMapReassembler(size_t span) : bytes_(span), covered_(span, false) {}

    void insert(size_t pos, std::span<const std::byte> data) {
        for (size_t i = 0; i < data.size(); i++) {
            size_t at = pos + i;
            if (at >= covered_.size() || covered_[at]) {
                continue;
            }
            covered_[at] = true;
            bytes_[at] = data[i];
        }
    }

    // Contiguous prefix length from offset 0.
    size_t prefix_len() const {
        size_t n = 0;
        while (n < covered_.size() && covered_[n]) {
            n++;
        }
        return n;
    }

    bool covered(size_t at) const { return at < covered_.size() && covered_[at]; }
    std::byte at(size_t i) const { return bytes_[i]; }
    std::span<const std::byte> prefix() const { return {bytes_.data(), prefix_len()}; }

private:
    std::vector<std::byte> bytes_;
    std::vector<bool> covered_;
};

// Minimal classic-pcap reader, independent of the writer.
struct PcapFile {
    uint32_t magic = 0;
    uint16_t version_major = 0, version_minor = 0;
    uint32_t snaplen = 0, network = 0;
    struct Record {
        uint32_t ts_sec, ts_usec;
        std::vector<std::byte> bytes;
    };
    std::vector<Record> records;
};

inline std::optional<PcapFile> parse_pcap(std::span<const std::byte> data) {
    if (data.size() < 24) {
        return std::nullopt;
    }
    auto u32 = [&](size_t off) {
        uint32_t v;
        std::memcpy(&v, data.data() + off, 4);
        return v;
    };
    auto u16 = [&](size_t off) {
        uint16_t v;
        std::memcpy(&v, data.data() + off, 2);
        return v;
    };
    PcapFile f;
    f.magic = u32(0);
    if (f.magic != 0xa1b2c3d4) {
        return std::nullopt; // big-endian / nanosecond variants unsupported
    }
    f.version_major = u16(4);
    f.version_minor = u16(6);
    f.snaplen = u32(16);
    f.network = u32(20);
    size_t off = 24;
    while (off + 16 <= data.size()) {
        PcapFile::Record r;
        r.ts_sec = u32(off);
        r.ts_usec = u32(off + 4);
        uint32_t incl = u32(off + 8);
        uint32_t orig = u32(off + 12);
        if (incl != orig || off + 16 + incl > data.size()) {
            return std::nullopt;
        }
        r.bytes.assign(data.begin() + static_cast<ptrdiff_t>(off + 16),
                       data.begin() + static_cast<ptrdiff_t>(off + 16 + incl));
        f.records.push_back(std::move(r));
        off += 16 + incl;
    }
    if (off != data.size()) {
        return std::nullopt;
    }
    return f;
}

inline std::vector<std::byte> random_bytes(std::mt19937_64& rng, size_t n) {
    std::vector<std::byte> out(n);
    for (auto& b : out) {
        b = static_cast<std::byte>(rng() & 0xFF);
    }
    return out;
}

// FNV-1a, used by the prefix-commit seal ledger.
inline uint64_t fnv1a(std::span<const std::byte> data) {
    uint64_t h = 1469598103934665603ull;
    for (auto b : data) {
        h ^= std::to_integer<uint8_t>(b);
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace oracle
