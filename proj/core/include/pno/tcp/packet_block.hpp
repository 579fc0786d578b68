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

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace pno::tcp {

// Fixed-capacity zero-copy buffer: 128 bytes of headroom in front of the
// payload area so protocol headers are prepended in place.  Payload bytes
// are written exactly once over the block's lifetime; the optional write
// bitmap enforces that in instrumented runs.
class PacketBlock {
public:
    static constexpr uint32_t kHeadroom = 128;
    // mtu 1500 + 128 headroom + 64 slack, rounded up for alignment
    static constexpr uint32_t kDefaultCapacity = 1792;

    explicit PacketBlock(uint32_t capacity = kDefaultCapacity, bool track_writes = false)
        : buf_(capacity), data_offset_(kHeadroom) {
        if (track_writes) {
            written_.assign(capacity - kHeadroom, false);
        }
    }

    uint32_t capacity() const { return static_cast<uint32_t>(buf_.size()); }

    // --- transmit-side view ---

    // Payload area starts at kHeadroom.  Single-write discipline.
    void write_payload(uint32_t off, std::span<const std::byte> bytes);

    void set_payload_len(uint32_t len) { payload_len_ = len; }
    uint32_t payload_len() const { return payload_len_; }

    // Prepend headers: data_offset decreases by hdr_len.
    std::span<std::byte> prepend(uint32_t hdr_len);
    uint32_t data_offset() const { return data_offset_; }

    std::span<std::byte> frame() {
        return {buf_.data() + data_offset_, kHeadroom - data_offset_ + payload_len_};
    }
    std::span<const std::byte> frame() const {
        return {buf_.data() + data_offset_, kHeadroom - data_offset_ + payload_len_};
    }
    std::span<const std::byte> payload() const { return {buf_.data() + kHeadroom, payload_len_}; }

    bool has_headers() const { return data_offset_ < kHeadroom; }

    // --- receive-side view ---

    // Store a received frame so its payload starts exactly at kHeadroom.
    void adopt_frame(std::span<const std::byte> frame_bytes, uint32_t header_len);

    uint32_t seq = 0; // TCP sequence of the first payload byte

    // Instrumentation: number of double-written payload bytes observed.
    uint64_t double_writes() const { return double_writes_; }

    std::span<std::byte> raw() { return buf_; }

private:
    std::vector<std::byte> buf_;
    uint32_t data_offset_;
    uint32_t payload_len_ = 0;
    std::vector<bool> written_;
    uint64_t double_writes_ = 0;
};

using BlockPtr = std::shared_ptr<PacketBlock>;

// A view into a block's payload; receive-side trimming and splitting hand
// out adjusted views without copying bytes.
struct BlockView {
    BlockPtr block;
    uint32_t offset = 0; // relative to the block's payload area
    uint32_t len = 0;
    uint32_t seq = 0;

    std::span<const std::byte> bytes() const {
        return block->payload().subspan(offset, len);
    }
};

// Simple free-list pool; the stack allocates every datapath buffer here.
class BlockPool {
public:
    explicit BlockPool(uint32_t capacity = PacketBlock::kDefaultCapacity,
                       bool track_writes = false)
        : capacity_(capacity), track_writes_(track_writes) {}

    BlockPtr get();
    size_t outstanding() const { return outstanding_; }

private:
    uint32_t capacity_;
    bool track_writes_;
    size_t outstanding_ = 0;
};

} // namespace pno::tcp
