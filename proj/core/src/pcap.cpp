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

#include "pno/net/pcap.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace pno::net {

namespace {

void put_u32le(std::vector<std::byte>& out, uint32_t v) {
    for (int i = 0; i < 4; i++) {
        out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
    }
}

void put_u16le(std::vector<std::byte>& out, uint16_t v) {
    out.push_back(static_cast<std::byte>(v & 0xFF));
    out.push_back(static_cast<std::byte>(v >> 8));
}

} // namespace

void PcapTrace::record(std::span<const std::byte> frame, SimTime at_us) {
    frames_.push_back(Rec{{frame.begin(), frame.end()}, at_us});
}

std::vector<std::byte> PcapTrace::serialize() const {
    std::vector<std::byte> out;
    out.reserve(24 + frames_.size() * 64);
    put_u32le(out, 0xa1b2c3d4); // magic, microsecond resolution
    put_u16le(out, 2);          // version major
    put_u16le(out, 4);          // version minor
    put_u32le(out, 0);          // thiszone
    put_u32le(out, 0);          // sigfigs
    put_u32le(out, 65535);      // snaplen
    put_u32le(out, 1);          // LINKTYPE_ETHERNET

    for (const auto& r : frames_) {
        uint64_t total_us = static_cast<uint64_t>(std::llround(r.at_us));
        put_u32le(out, static_cast<uint32_t>(total_us / 1000000));
        put_u32le(out, static_cast<uint32_t>(total_us % 1000000));
        put_u32le(out, static_cast<uint32_t>(r.bytes.size()));
        put_u32le(out, static_cast<uint32_t>(r.bytes.size()));
        out.insert(out.end(), r.bytes.begin(), r.bytes.end());
    }
    return out;
}

Status PcapTrace::dump(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        return Errc::io_error;
    }
    auto bytes = serialize();
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    return f.good() ? Status{} : Status{Errc::io_error};
}

} // namespace pno::net
