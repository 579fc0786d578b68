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

#include "pno/tcp/packet_block.hpp"

#include <cassert>
#include <cstring>

namespace pno::tcp {

void PacketBlock::write_payload(uint32_t off, std::span<const std::byte> bytes) {
    assert(kHeadroom + off + bytes.size() <= buf_.size());
    if (!written_.empty()) {
        for (size_t i = 0; i < bytes.size(); i++) {
            if (written_[off + i]) {
                double_writes_++;
            }
            written_[off + i] = true;
        }
    }
    std::memcpy(buf_.data() + kHeadroom + off, bytes.data(), bytes.size());
}

std::span<std::byte> PacketBlock::prepend(uint32_t hdr_len) {
    assert(hdr_len <= data_offset_);
    data_offset_ -= hdr_len;
    return {buf_.data() + data_offset_, hdr_len};
}

void PacketBlock::adopt_frame(std::span<const std::byte> frame_bytes, uint32_t header_len) {
    assert(header_len <= kHeadroom);
    assert(frame_bytes.size() <= buf_.size() - (kHeadroom - header_len));
    data_offset_ = kHeadroom - header_len;
    std::memcpy(buf_.data() + data_offset_, frame_bytes.data(), frame_bytes.size());
    payload_len_ = static_cast<uint32_t>(frame_bytes.size()) - header_len;
    if (!written_.empty()) {
        for (size_t i = 0; i < payload_len_; i++) {
            written_[i] = true;
        }
    }
}

BlockPtr BlockPool::get() {
    outstanding_++;
    return std::make_shared<PacketBlock>(capacity_, track_writes_);
}

} // namespace pno::tcp
