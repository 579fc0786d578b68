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

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

namespace pno::tcp {

inline constexpr size_t kEthHeaderLen = 14;
inline constexpr size_t kIpHeaderLen = 20; // no options
inline constexpr size_t kTcpHeaderLen = 20;
inline constexpr size_t kPlainHeaderLen = kEthHeaderLen + kIpHeaderLen + kTcpHeaderLen;
inline constexpr uint16_t kEtherTypeIpv4 = 0x0800;

using MacAddr = std::array<uint8_t, 6>;

inline constexpr uint8_t kTcpFin = 0x01;
inline constexpr uint8_t kTcpSyn = 0x02;
inline constexpr uint8_t kTcpRst = 0x04;
inline constexpr uint8_t kTcpPsh = 0x08;
inline constexpr uint8_t kTcpAck = 0x10;

struct FrameMeta {
    MacAddr src_mac{};
    MacAddr dst_mac{};
    uint32_t src_ip = 0; // host byte order
    uint32_t dst_ip = 0;
    uint16_t src_port = 0;
    uint16_t dst_port = 0;
    uint32_t seq = 0;
    uint32_t ack = 0;
    uint8_t flags = 0;
    uint16_t window = 0;
    std::optional<uint16_t> mss; // SYN-only option
};

struct ParsedFrame {
    FrameMeta meta;
    size_t header_len = 0; // eth + ip + tcp incl. options
    std::span<const std::byte> payload;
};

// Serialize eth+ip+tcp headers in front of `payload_len` payload bytes.
// `dst` must hold header_len(meta) bytes; returns bytes written.
size_t build_headers(std::span<std::byte> dst, const FrameMeta& meta, size_t payload_len);
size_t header_len(const FrameMeta& meta);

// Patch mutable TCP fields of an already-built frame in place (ack number,
// window, checksums).  Used by retransmission.
void refresh_headers(std::span<std::byte> frame, uint32_t ack, uint16_t window);

// Checksum-validating parse; nullopt for anything malformed.
std::optional<ParsedFrame> parse_frame(std::span<const std::byte> frame);

// Validation helpers used by verifiers and tests.
bool verify_ip_checksum(std::span<const std::byte> frame);
bool verify_tcp_checksum(std::span<const std::byte> frame);

} // namespace pno::tcp
