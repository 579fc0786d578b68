/*
 * This file is open source software, licensed to you under the terms
 * of the Apache License, Version 2.0 (the "License").  See the NOTICE file
 * distributed with this work for additional information regarding copyright
 * ownership.  You may not use this file except in compliance with the License.
 *
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing,
 * software distributed under the License is distributed on an
 * "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
 * KIND, either express or implied.  See the License for the
 * specific language governing permissions and limitations
 * under the License.
 */

#include "pno/tcp/headers.hpp"

#include <cassert>
#include <cstring>

#include "pno/tcp/checksum.hpp"

namespace pno::tcp {

namespace {

void put_u16(std::byte* p, uint16_t v) {
    p[0] = static_cast<std::byte>(v >> 8);
    p[1] = static_cast<std::byte>(v & 0xFF);
}

void put_u32(std::byte* p, uint32_t v) {
    p[0] = static_cast<std::byte>(v >> 24);
    p[1] = static_cast<std::byte>((v >> 16) & 0xFF);
    p[2] = static_cast<std::byte>((v >> 8) & 0xFF);
    p[3] = static_cast<std::byte>(v & 0xFF);
}

uint16_t get_u16(const std::byte* p) {
    return static_cast<uint16_t>(std::to_integer<uint8_t>(p[0]) << 8 |
                                 std::to_integer<uint8_t>(p[1]));
}

uint32_t get_u32(const std::byte* p) {
    return static_cast<uint32_t>(std::to_integer<uint8_t>(p[0])) << 24 |
           static_cast<uint32_t>(std::to_integer<uint8_t>(p[1])) << 16 |
           static_cast<uint32_t>(std::to_integer<uint8_t>(p[2])) << 8 |
           static_cast<uint32_t>(std::to_integer<uint8_t>(p[3]));
}

} // namespace

size_t header_len(const FrameMeta& meta) {
    return kPlainHeaderLen + (meta.mss ? 4 : 0);
}

size_t build_headers(std::span<std::byte> dst, const FrameMeta& meta, size_t payload_len) {
    const size_t tcp_len = kTcpHeaderLen + (meta.mss ? 4 : 0);
    const size_t total = kEthHeaderLen + kIpHeaderLen + tcp_len;
    assert(dst.size() >= total);

    std::byte* eth = dst.data();
    std::memcpy(eth, meta.dst_mac.data(), 6);
    std::memcpy(eth + 6, meta.src_mac.data(), 6);
    put_u16(eth + 12, kEtherTypeIpv4);

    std::byte* ip = eth + kEthHeaderLen;
    ip[0] = static_cast<std::byte>(0x45); // v4, ihl 5
    ip[1] = static_cast<std::byte>(0);
    put_u16(ip + 2, static_cast<uint16_t>(kIpHeaderLen + tcp_len + payload_len));
    put_u16(ip + 4, 0); // id
    put_u16(ip + 6, 0x4000); // DF
    ip[8] = static_cast<std::byte>(64); // ttl
    ip[9] = static_cast<std::byte>(6);  // tcp
    put_u16(ip + 10, 0);
    put_u32(ip + 12, meta.src_ip);
    put_u32(ip + 16, meta.dst_ip);
    put_u16(ip + 10, inet_checksum({ip, kIpHeaderLen}));

    std::byte* tcp = ip + kIpHeaderLen;
    put_u16(tcp + 0, meta.src_port);
    put_u16(tcp + 2, meta.dst_port);
    put_u32(tcp + 4, meta.seq);
    put_u32(tcp + 8, meta.ack);
    tcp[12] = static_cast<std::byte>((tcp_len / 4) << 4);
    tcp[13] = static_cast<std::byte>(meta.flags);
    put_u16(tcp + 14, meta.window);
    put_u16(tcp + 16, 0); // checksum placeholder
    put_u16(tcp + 18, 0); // urgent
    if (meta.mss) {
        tcp[20] = static_cast<std::byte>(2); // kind: MSS
        tcp[21] = static_cast<std::byte>(4);
        put_u16(tcp + 22, *meta.mss);
    }
    // TCP checksum covers header + payload; payload already sits right
    // after the header when this is called on an assembled block.
    uint16_t csum =
        tcp_checksum(meta.src_ip, meta.dst_ip, {tcp, tcp_len + payload_len});
    put_u16(tcp + 16, csum);
    return total;
}

void refresh_headers(std::span<std::byte> frame, uint32_t ack, uint16_t window) {
    std::byte* ip = frame.data() + kEthHeaderLen;
    size_t ip_len = (std::to_integer<uint8_t>(ip[0]) & 0x0F) * 4;
    std::byte* tcp = ip + ip_len;
    size_t tcp_len = (std::to_integer<uint8_t>(tcp[12]) >> 4) * 4;
    size_t seg_len = get_u16(ip + 2) - ip_len;
    put_u32(tcp + 8, ack);
    put_u16(tcp + 14, window);
    put_u16(tcp + 16, 0);
    uint32_t src_ip = get_u32(ip + 12);
    uint32_t dst_ip = get_u32(ip + 16);
    put_u16(tcp + 16, tcp_checksum(src_ip, dst_ip, {tcp, seg_len}));
    (void)tcp_len;
}

bool verify_ip_checksum(std::span<const std::byte> frame) {
    if (frame.size() < kEthHeaderLen + kIpHeaderLen) {
        return false;
    }
    const std::byte* ip = frame.data() + kEthHeaderLen;
    size_t ip_len = (std::to_integer<uint8_t>(ip[0]) & 0x0F) * 4;
    if (ip_len < kIpHeaderLen || frame.size() < kEthHeaderLen + ip_len) {
        return false;
    }
    return inet_checksum({ip, ip_len}) == 0;
}

bool verify_tcp_checksum(std::span<const std::byte> frame) {
    if (frame.size() < kPlainHeaderLen) {
        return false;
    }
    const std::byte* ip = frame.data() + kEthHeaderLen;
    size_t ip_len = (std::to_integer<uint8_t>(ip[0]) & 0x0F) * 4;
    uint16_t tot = get_u16(ip + 2);
    if (tot < ip_len || frame.size() < kEthHeaderLen + tot) {
        return false;
    }
    const std::byte* tcp = ip + ip_len;
    size_t seg_len = tot - ip_len;
    uint32_t src_ip = get_u32(ip + 12);
    uint32_t dst_ip = get_u32(ip + 16);
    // Sum including the transmitted checksum folds to zero when valid.
    uint32_t acc = 0;
    acc += (src_ip >> 16) + (src_ip & 0xFFFF);
    acc += (dst_ip >> 16) + (dst_ip & 0xFFFF);
    acc += 6;
    acc += static_cast<uint32_t>(seg_len);
    acc = inet_partial({tcp, seg_len}, acc);
    return inet_fold(acc) == 0;
}

std::optional<ParsedFrame> parse_frame(std::span<const std::byte> frame) {
    if (frame.size() < kPlainHeaderLen) {
        return std::nullopt;
    }
    const std::byte* eth = frame.data();
    if (get_u16(eth + 12) != kEtherTypeIpv4) {
        return std::nullopt;
    }
    const std::byte* ip = eth + kEthHeaderLen;
    if ((std::to_integer<uint8_t>(ip[0]) >> 4) != 4) {
        return std::nullopt;
    }
    size_t ip_len = (std::to_integer<uint8_t>(ip[0]) & 0x0F) * 4;
    uint16_t tot = get_u16(ip + 2);
    if (ip_len < kIpHeaderLen || tot < ip_len + kTcpHeaderLen ||
        frame.size() < kEthHeaderLen + tot) {
        return std::nullopt;
    }
    if (std::to_integer<uint8_t>(ip[9]) != 6) {
        return std::nullopt;
    }
    if (!verify_ip_checksum(frame) || !verify_tcp_checksum(frame)) {
        return std::nullopt;
    }

    const std::byte* tcp = ip + ip_len;
    size_t tcp_len = (std::to_integer<uint8_t>(tcp[12]) >> 4) * 4;
    if (tcp_len < kTcpHeaderLen || tot < ip_len + tcp_len) {
        return std::nullopt;
    }

    ParsedFrame out;
    std::memcpy(out.meta.dst_mac.data(), eth, 6);
    std::memcpy(out.meta.src_mac.data(), eth + 6, 6);
    out.meta.src_ip = get_u32(ip + 12);
    out.meta.dst_ip = get_u32(ip + 16);
    out.meta.src_port = get_u16(tcp + 0);
    out.meta.dst_port = get_u16(tcp + 2);
    out.meta.seq = get_u32(tcp + 4);
    out.meta.ack = get_u32(tcp + 8);
    out.meta.flags = std::to_integer<uint8_t>(tcp[13]);
    out.meta.window = get_u16(tcp + 14);

    // MSS is the only option we understand; skip the rest.
    size_t opt = kTcpHeaderLen;
    while (opt < tcp_len) {
        uint8_t kind = std::to_integer<uint8_t>(tcp[opt]);
        if (kind == 0) break;   // end of options
        if (kind == 1) {        // nop
            opt += 1;
            continue;
        }
        if (opt + 1 >= tcp_len) break;
        uint8_t olen = std::to_integer<uint8_t>(tcp[opt + 1]);
        if (olen < 2 || opt + olen > tcp_len) break;
        if (kind == 2 && olen == 4) {
            out.meta.mss = get_u16(tcp + opt + 2);
        }
        opt += olen;
    }

    out.header_len = kEthHeaderLen + ip_len + tcp_len;
    out.payload = frame.subspan(out.header_len, tot - ip_len - tcp_len);
    return out;
}

} // namespace pno::tcp
