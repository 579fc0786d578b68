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

#include "pno/rings/sring.hpp"

#include <cassert>
#include <cstring>

namespace pno::rings {

namespace {
constexpr uint64_t kFlagOff = 0;
constexpr uint64_t kLenOff = 4;

std::vector<std::byte> zeroes(size_t n) { return std::vector<std::byte>(n); }
} // namespace

SharedLayout SharedLayout::make(uint64_t sring_cap, uint64_t data_cap, uint64_t event_cap,
                                uint64_t info_slots) {
    assert(is_pow2(sring_cap) && is_pow2(data_cap) && is_pow2(event_cap) && is_pow2(info_slots));
    SharedLayout l;
    uint64_t off = 0;
    l.host_ctrl = off;
    off += kCtrlSize;
    l.nic_ctrl = off;
    off += kCtrlSize;
    l.sring = off;
    l.sring_cap = sring_cap;
    off += sring_cap;
    l.data = off;
    l.data_cap = data_cap;
    off += data_cap;
    l.event = off;
    l.event_cap = event_cap;
    off += event_cap;
    l.info_n2h = off;
    l.info_slots = info_slots;
    off += kInfoHeaderSize + info_slots * kInfoBlockSize;
    l.info_h2n = off;
    off += kInfoHeaderSize + info_slots * kInfoBlockSize;
    l.total = off;
    return l;
}

SharedLayout SharedLayout::from(const Config& cfg) {
    return make(cfg.get_u64("ring.sring_bytes", 1ull << 20),
                cfg.get_u64("ring.data_bytes", 4ull << 20),
                cfg.get_u64("ring.event_bytes", 4ull << 20),
                cfg.get_u64("ring.info_slots", 4096));
}

SRingProducer::SRingProducer(dma::MemoryDomain& dom, const SharedLayout& lay)
    : dom_(dom), base_(lay.sring), cap_(lay.sring_cap), mask_(lay.sring_cap - 1),
      host_ctrl_(lay.host_ctrl), nic_ctrl_(lay.nic_ctrl) {
    assert(is_pow2(cap_));
}

uint64_t SRingProducer::scan_cursor_seen() const {
    return dom_.load_u64_acquire(nic_ctrl_ + kNicCtrlScanCursor);
}

uint64_t SRingProducer::free_space() const {
    return cap_ - (alloc_cursor_ - scan_cursor_seen());
}

Result<SBlockHandle> SRingProducer::alloc(uint32_t payload_size, bool sync_kind) {
    std::lock_guard<std::mutex> lk(alloc_mu_);
    const uint32_t payload_off = kSHeaderSize + (sync_kind ? kSRetvalSize : 0);
    const uint32_t length = payload_off + payload_size;
    const uint64_t footprint = round8(length);
    if (footprint > cap_) {
        return Errc::ring_full;
    }

    uint64_t free = cap_ - (alloc_cursor_ - scan_cursor_seen());
    uint64_t rem = cap_ - (alloc_cursor_ & mask_);
    uint64_t need = footprint;
    bool needs_skip = footprint > rem;
    if (needs_skip) {
        need += rem;
    }
    if (need > free) {
        return Errc::ring_full;
    }

    if (needs_skip) {
        uint64_t off = base_ + (alloc_cursor_ & mask_);
        dom_.store_u32(off + kLenOff, static_cast<uint32_t>(rem), dma::Domain::host);
        dom_.store_u32_release(off + kFlagOff, static_cast<uint32_t>(SFlag::w_skip),
                               dma::Domain::host);
        alloc_cursor_ += rem;
    }

    SBlockHandle h;
    h.voff = alloc_cursor_;
    h.length = length;
    h.payload_off = payload_off;
    uint64_t off = base_ + (h.voff & mask_);
    auto z = zeroes(footprint);
    dom_.write(off, z, dma::Domain::host);
    dom_.store_u32(off + kLenOff, length, dma::Domain::host);
    alloc_cursor_ += footprint;
    dom_.store_u64_release(host_ctrl_ + kHostCtrlAllocCursor, alloc_cursor_, dma::Domain::host);
    return h;
}

void SRingProducer::write_body(const SBlockHandle& h, uint32_t off,
                               std::span<const std::byte> bytes) {
    assert(!h.committed);
    assert(off + bytes.size() <= h.payload_size());
    dom_.write(region_off(h.voff) + h.payload_off + off, bytes, dma::Domain::host);
}

void SRingProducer::write_body_u32(const SBlockHandle& h, uint32_t off, uint32_t v) {
    std::byte b[4];
    std::memcpy(b, &v, 4);
    write_body(h, off, b);
}

void SRingProducer::write_body_u64(const SBlockHandle& h, uint32_t off, uint64_t v) {
    std::byte b[8];
    std::memcpy(b, &v, 8);
    write_body(h, off, b);
}

Status SRingProducer::commit(SBlockHandle& h, SFlag request_flag) {
    if (!is_request_flag(request_flag)) {
        return Errc::invalid_flag;
    }
    if (h.committed) {
        return Errc::already_committed;
    }
    // Release order: body writes above become visible before the flag.
    dom_.store_u32_release(region_off(h.voff) + kFlagOff, static_cast<uint32_t>(request_flag),
                           dma::Domain::host);
    h.committed = true;
    return {};
}

bool SRingProducer::done(const SBlockHandle& h) const {
    return dom_.load_u32_acquire(base_ + (h.voff & mask_) + kFlagOff) ==
           static_cast<uint32_t>(SFlag::w_done);
}

int64_t SRingProducer::retval(const SBlockHandle& h) const {
    assert(h.payload_off == kSHeaderSize + kSRetvalSize);
    return static_cast<int64_t>(dom_.load_u64(base_ + (h.voff & mask_) + kSHeaderSize));
}

SRingConsumer::SRingConsumer(dma::MemoryDomain& dom, const SharedLayout& lay)
    : dom_(dom), base_(lay.sring), cap_(lay.sring_cap), mask_(lay.sring_cap - 1),
      host_ctrl_(lay.host_ctrl), nic_ctrl_(lay.nic_ctrl) {}

std::vector<SBlockView> SRingConsumer::peek(size_t max_blocks) const {
    std::vector<SBlockView> out;
    uint64_t cursor = scan_cursor_;
    // Never walk past the allocation cursor: bytes beyond it are stale
    // content from a previous lap of the ring.
    const uint64_t limit = dom_.load_u64_acquire(host_ctrl_ + kHostCtrlAllocCursor);
    while (out.size() < max_blocks && cursor < limit) {
        uint64_t pos = cursor & mask_;
        uint64_t rem = cap_ - pos;
        uint64_t off = base_ + pos;
        uint32_t flag = dom_.load_u32_acquire(off + kFlagOff);
        uint32_t length = dom_.load_u32(off + kLenOff);
        if (flag == static_cast<uint32_t>(SFlag::w_none)) {
            break; // first uncommitted block: stop
        }
        if (flag == static_cast<uint32_t>(SFlag::w_skip)) {
            // Wrap marker; resume at offset 0.
            cursor += rem;
            continue;
        }
        if (length < kSHeaderSize || round8(length) > rem) {
            break; // malformed; leave for diagnostics
        }
        SBlockView v;
        v.voff = cursor;
        v.flag = static_cast<SFlag>(flag);
        v.length = length;
        v.payload_off = kSHeaderSize + (is_sync_kind(v.flag) ? kSRetvalSize : 0);
        if (v.payload_off > length) {
            v.payload_off = length;
        }
        v.payload = dom_.view(off + v.payload_off, length - v.payload_off);
        out.push_back(v);
        cursor += round8(length);
    }
    return out;
}

void SRingConsumer::consume(size_t n_blocks) {
    size_t taken = 0;
    const uint64_t limit = dom_.load_u64_acquire(host_ctrl_ + kHostCtrlAllocCursor);
    while (taken < n_blocks && scan_cursor_ < limit) {
        uint64_t pos = scan_cursor_ & mask_;
        uint64_t rem = cap_ - pos;
        uint64_t off = base_ + pos;
        uint32_t flag = dom_.load_u32_acquire(off + kFlagOff);
        uint32_t length = dom_.load_u32(off + kLenOff);
        if (flag == static_cast<uint32_t>(SFlag::w_none)) {
            break;
        }
        if (flag == static_cast<uint32_t>(SFlag::w_skip)) {
            scan_cursor_ += rem;
            continue;
        }
        if (length < kSHeaderSize || round8(length) > rem) {
            break;
        }
        scan_cursor_ += round8(length);
        taken++;
    }
    dom_.store_u64_release(nic_ctrl_ + kNicCtrlScanCursor, scan_cursor_, dma::Domain::nic);
}

std::vector<SBlockView> SRingConsumer::scan(size_t max_blocks) {
    auto out = peek(max_blocks);
    consume(out.size());
    return out;
}

Result<SRingConsumer::Patch> SRingConsumer::complete(const SBlockView& v, int64_t retval) {
    if (!is_sync_kind(v.flag)) {
        return Errc::not_synchronous_kind;
    }
    uint64_t off = region_off(v.voff);
    dom_.store_u64(off + kSHeaderSize, static_cast<uint64_t>(retval), dma::Domain::nic);
    dom_.store_u32_release(off + kFlagOff, static_cast<uint32_t>(SFlag::w_done), dma::Domain::nic);
    return Patch{off, kSHeaderSize + kSRetvalSize};
}

SRingConsumer::Patch SRingConsumer::mark_done(const SBlockView& v, std::optional<int64_t> errval) {
    uint64_t off = region_off(v.voff);
    uint32_t len = kSHeaderSize;
    if (errval && v.length >= kSHeaderSize + kSRetvalSize) {
        dom_.store_u64(off + kSHeaderSize, static_cast<uint64_t>(*errval), dma::Domain::nic);
        len = kSHeaderSize + kSRetvalSize;
    }
    dom_.store_u32_release(off + kFlagOff, static_cast<uint32_t>(SFlag::w_done), dma::Domain::nic);
    return Patch{off, len};
}

} // namespace pno::rings
