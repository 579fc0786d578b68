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

#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "pno/dma/engine.hpp"
#include "pno/errors.hpp"
#include "pno/rings/layout.hpp"

namespace pno::rings {

// Block header: 4-byte flag + 4-byte length (length counts the header and,
// for synchronous kinds, the 8-byte return-value slot).  Blocks are 8-byte
// aligned and contiguous; the cursor advances by round8(length).
enum class SFlag : uint32_t {
    w_none = 0,
    w_write = 1,
    w_socket = 2,
    w_listen = 3,
    w_connect = 4,
    w_close = 5,
    w_setopt = 6,
    w_epoll_ctl = 7,
    w_sendfile = 8,
    w_skip = 254, // wrap marker: length = bytes to the ring end
    w_done = 255,
};

inline constexpr bool is_request_flag(SFlag f) {
    auto v = static_cast<uint32_t>(f);
    return v >= 1 && v <= 8;
}

// Kinds whose caller busy-waits on the in-block return slot.
inline constexpr bool is_sync_kind(SFlag f) {
    switch (f) {
    case SFlag::w_socket:
    case SFlag::w_listen:
    case SFlag::w_connect:
    case SFlag::w_epoll_ctl:
    case SFlag::w_setopt:
        return true;
    default:
        return false;
    }
}

inline constexpr uint32_t kSHeaderSize = 8;
inline constexpr uint32_t kSRetvalSize = 8;

struct SBlockHandle {
    uint64_t voff = 0;       // virtual (free-running) ring offset of the header
    uint32_t length = 0;     // exact block length from the header
    uint32_t payload_off = 0; // 8 for async kinds, 16 for sync kinds
    bool committed = false;

    uint32_t payload_size() const { return length - payload_off; }
};

struct SBlockView {
    uint64_t voff = 0;
    SFlag flag = SFlag::w_none;
    uint32_t length = 0;
    uint32_t payload_off = 0;
    std::span<const std::byte> payload;
};

// Host-side producer.  Allocation is the only mutually exclusive step;
// body writes from different application threads proceed in parallel and
// commit publishes with a release store on the flag word.
class SRingProducer {
public:
    SRingProducer(dma::MemoryDomain& dom, const SharedLayout& lay);

    Result<SBlockHandle> alloc(uint32_t payload_size, bool sync_kind);

    void write_body(const SBlockHandle& h, uint32_t off, std::span<const std::byte> bytes);
    void write_body_u32(const SBlockHandle& h, uint32_t off, uint32_t v);
    void write_body_u64(const SBlockHandle& h, uint32_t off, uint64_t v);

    Status commit(SBlockHandle& h, SFlag request_flag);

    // Host view of the completion protocol: flag/retval as currently
    // visible in this domain's copy.
    bool done(const SBlockHandle& h) const;
    int64_t retval(const SBlockHandle& h) const;

    uint64_t alloc_cursor() const { return alloc_cursor_; }
    uint64_t scan_cursor_seen() const; // from the synced nic_ctrl slot
    uint64_t free_space() const;
    uint64_t capacity() const { return cap_; }

    uint64_t region_off(uint64_t voff) const { return base_ + (voff & mask_); }

private:
    dma::MemoryDomain& dom_;
    uint64_t base_, cap_, mask_;
    uint64_t host_ctrl_, nic_ctrl_;
    uint64_t alloc_cursor_ = 0;
    std::mutex alloc_mu_;
};

// NIC-side consumer: scans committed blocks, never writes anything except
// flag words and return-value slots.
class SRingConsumer {
public:
    SRingConsumer(dma::MemoryDomain& dom, const SharedLayout& lay);

    // Consecutive committed blocks starting at scan_cursor, stopping at the
    // first uncommitted one; advances the cursor past what it returns.
    std::vector<SBlockView> scan(size_t max_blocks);

    // Same walk without advancing; consume(n) then advances past the first
    // n peeked blocks.  Lets the dispatcher stop mid-batch under
    // backpressure while untouched blocks stay owned by the ring.
    std::vector<SBlockView> peek(size_t max_blocks) const;
    void consume(size_t n_blocks);

    struct Patch {
        uint64_t region_off = 0;
        uint32_t len = 0;
    };

    // Write retval + W_DONE for a synchronous request.  Returns the region
    // span the bridge must DMA back to the host.
    Result<Patch> complete(const SBlockView& v, int64_t retval);

    // Mark any block done (error paths / async acknowledgment).  If room,
    // an error value is stored at the start of the body.
    Patch mark_done(const SBlockView& v, std::optional<int64_t> errval);

    uint64_t scan_cursor() const { return scan_cursor_; }
    uint64_t region_off(uint64_t voff) const { return base_ + (voff & mask_); }

    // Upper bound on scannable bytes; the bridge sets this to the end of
    // the DMA-synced window (in shared memory the alloc cursor suffices).
    void set_scan_limit(uint64_t limit) { scan_limit_ = limit; }

private:
    dma::MemoryDomain& dom_;
    uint64_t base_, cap_, mask_;
    uint64_t host_ctrl_, nic_ctrl_;
    uint64_t scan_cursor_ = 0;
    uint64_t scan_limit_ = ~uint64_t{0};
};

} // namespace pno::rings
