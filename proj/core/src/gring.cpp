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

#include "pno/rings/gring.hpp"

#include <algorithm>
#include <cassert>
#include <cstring>

namespace pno::rings {

namespace {

uint64_t fd_hash(uint32_t fd) { return (static_cast<uint64_t>(fd) * 2654435761u); }

} // namespace

DataRingWriter::DataRingWriter(dma::MemoryDomain& dom, uint64_t base, uint64_t cap)
    : dom_(dom), base_(base), cap_(cap), mask_(cap - 1) {
    assert(is_pow2(cap));
}

void DataRingWriter::observe_head(uint64_t head) { head_seen_ = std::max(head_seen_, head); }

Result<DataRef> DataRingWriter::produce(uint32_t fd, std::span<const std::byte> payload) {
    if (payload.empty()) {
        return Errc::empty_payload;
    }
    uint64_t footprint = kGRecHeader + round8(payload.size());
    uint64_t rem = cap_ - (tail_ & mask_);
    uint64_t need = footprint;
    bool needs_skip = footprint > rem;
    if (needs_skip) {
        need += rem;
    }
    if (need > free_space()) {
        return Errc::data_ring_full;
    }
    if (needs_skip) {
        uint64_t off = base_ + (tail_ & mask_);
        dom_.store_u32(off, kGSkipFd, dma::Domain::nic);
        dom_.store_u32(off + 4, static_cast<uint32_t>(rem - kGRecHeader), dma::Domain::nic);
        tail_ += rem;
    }
    DataRef ref{tail_, tail_ + footprint};
    uint64_t off = base_ + (tail_ & mask_);
    dom_.store_u32(off, fd, dma::Domain::nic);
    dom_.store_u32(off + 4, static_cast<uint32_t>(payload.size()), dma::Domain::nic);
    dom_.write(off + kGRecHeader, payload, dma::Domain::nic);
    tail_ += footprint;
    return ref;
}

void DataRingWriter::region_spans(uint64_t from, uint64_t to,
                                  std::vector<std::pair<uint64_t, uint32_t>>& out) const {
    assert(to >= from && to - from <= cap_);
    if (from == to) {
        return;
    }
    uint64_t pos = from & mask_;
    uint64_t len = to - from;
    uint64_t first = std::min(len, cap_ - pos);
    out.emplace_back(base_ + pos, static_cast<uint32_t>(first));
    if (first < len) {
        out.emplace_back(base_, static_cast<uint32_t>(len - first));
    }
}

EventRingWriter::EventRingWriter(dma::MemoryDomain& dom, uint64_t base, uint64_t cap)
    : dom_(dom), base_(base), cap_(cap), mask_(cap - 1) {
    assert(is_pow2(cap));
}

Result<DataRef> EventRingWriter::produce(const EventRec& rec) {
    if (free_space() < sizeof(EventRec)) {
        return Errc::data_ring_full;
    }
    uint64_t off = base_ + (tail_ & mask_);
    dom_.store_u32(off, rec.fd, dma::Domain::nic);
    dom_.store_u32(off + 4, rec.events, dma::Domain::nic);
    DataRef ref{tail_, tail_ + sizeof(EventRec)};
    tail_ += sizeof(EventRec);
    return ref;
}

void EventRingWriter::region_spans(uint64_t from, uint64_t to,
                                   std::vector<std::pair<uint64_t, uint32_t>>& out) const {
    assert(to >= from && to - from <= cap_);
    if (from == to) {
        return;
    }
    uint64_t pos = from & mask_;
    uint64_t len = to - from;
    uint64_t first = std::min(len, cap_ - pos);
    out.emplace_back(base_ + pos, static_cast<uint32_t>(first));
    if (first < len) {
        out.emplace_back(base_, static_cast<uint32_t>(len - first));
    }
}

StreamInfoRing::StreamInfoRing(dma::MemoryDomain& dom, uint64_t header_base, uint64_t slot_count,
                               dma::Domain writer)
    : dom_(dom), header_base_(header_base), slots_(slot_count), writer_(writer) {
    assert(is_pow2(slot_count));
}

size_t StreamInfoRing::find(uint32_t fd) const {
    uint64_t h = fd_hash(fd) & (slots_ - 1);
    for (uint64_t i = 0; i < slots_; i++) {
        uint64_t slot = (h + i) & (slots_ - 1);
        uint32_t cur = dom_.load_u32(slot_region_off(slot));
        if (cur == fd) {
            return slot;
        }
        if (cur == kInfoEmptyFd) {
            return npos; // probe chain ends at an empty slot
        }
    }
    return npos;
}

Result<size_t> StreamInfoRing::upsert(uint32_t fd) {
    uint64_t h = fd_hash(fd) & (slots_ - 1);
    size_t first_free = npos;
    for (uint64_t i = 0; i < slots_; i++) {
        uint64_t slot = (h + i) & (slots_ - 1);
        uint32_t cur = dom_.load_u32(slot_region_off(slot));
        if (cur == fd) {
            return static_cast<size_t>(slot);
        }
        if (cur == kInfoTombstoneFd && first_free == npos) {
            first_free = slot;
            continue;
        }
        if (cur == kInfoEmptyFd) {
            if (first_free == npos) {
                first_free = slot;
            }
            break;
        }
    }
    if (first_free == npos) {
        return Errc::ring_full;
    }
    dom_.store_u32(slot_region_off(first_free), fd, writer_);
    return first_free;
}

void StreamInfoRing::erase(uint32_t fd) {
    size_t slot = find(fd);
    if (slot == npos) {
        return;
    }
    dom_.store_u32(slot_region_off(slot), kInfoTombstoneFd, writer_);
}

StreamInfo StreamInfoRing::read(size_t slot) const {
    uint64_t off = slot_region_off(slot);
    StreamInfo s;
    s.fd = dom_.load_u32(off);
    s.state = dom_.load_u32(off + 4);
    s.data_begin = dom_.load_u64(off + 8);
    s.data_end = dom_.load_u64(off + 16);
    s.event_count = dom_.load_u32(off + 24);
    s.generation = dom_.load_u32(off + 28);
    s.aux = dom_.load_u64(off + 32);
    s.peer_ip = dom_.load_u32(off + 40);
    s.peer_port = dom_.load_u32(off + 44);
    return s;
}

void StreamInfoRing::write(size_t slot, const StreamInfo& in) {
    std::byte block[SharedLayout::kInfoBlockSize] = {};
    std::memcpy(block + 0, &in.fd, 4);
    std::memcpy(block + 4, &in.state, 4);
    std::memcpy(block + 8, &in.data_begin, 8);
    std::memcpy(block + 16, &in.data_end, 8);
    std::memcpy(block + 24, &in.event_count, 4);
    std::memcpy(block + 28, &in.generation, 4);
    std::memcpy(block + 32, &in.aux, 8);
    std::memcpy(block + 40, &in.peer_ip, 4);
    std::memcpy(block + 44, &in.peer_port, 4);
    dom_.write(slot_region_off(slot), block, writer_);
}

void StreamInfoRing::set_data_tail(uint64_t v) {
    dom_.store_u64(header_base_ + kInfoHdrDataTail, v, writer_);
}

void StreamInfoRing::set_event_tail(uint64_t v) {
    dom_.store_u64(header_base_ + kInfoHdrEventTail, v, writer_);
}

uint64_t StreamInfoRing::data_tail() const { return dom_.load_u64(header_base_ + kInfoHdrDataTail); }

uint64_t StreamInfoRing::event_tail() const {
    return dom_.load_u64(header_base_ + kInfoHdrEventTail);
}

void FlushGuard::note_submitted(RingId r, uint64_t token, DataRef span) {
    pending_.emplace(token, Entry{r, span});
}

void FlushGuard::note_complete(uint64_t token) { pending_.erase(token); }

bool FlushGuard::is_flushed(RingId r, DataRef span) const {
    if (span.empty()) {
        return true;
    }
    for (const auto& [tok, e] : pending_) {
        if (e.ring == r && e.span.begin < span.end && span.begin < e.span.end) {
            return false;
        }
    }
    return true;
}

NicGRings::NicGRings(dma::MemoryDomain& nic, const SharedLayout& lay)
    : data_(nic, lay.data, lay.data_cap), events_(nic, lay.event, lay.event_cap),
      info_(nic, lay.info_n2h, lay.info_slots, dma::Domain::nic) {}

Result<DataRef> NicGRings::produce(uint32_t fd, std::span<const std::byte> payload) {
    return data_.produce(fd, payload);
}

Result<DataRef> NicGRings::produce_event(uint32_t fd, uint32_t events) {
    return events_.produce(EventRec{fd, events});
}

void NicGRings::mark_dirty_slot(size_t slot) {
    if (std::find(dirty_slots_.begin(), dirty_slots_.end(), slot) == dirty_slots_.end()) {
        dirty_slots_.push_back(slot);
    }
}

Result<size_t> NicGRings::open_stream(uint32_t fd, std::function<void(StreamInfo&)> init) {
    auto slot = info_.upsert(fd);
    if (!slot) {
        return slot;
    }
    StreamInfo s;
    s.fd = fd;
    s.data_begin = data_.tail();
    s.data_end = data_.tail();
    if (init) {
        init(s);
    }
    s.generation = 1;
    info_.write(*slot, s);
    mark_dirty_slot(*slot);
    header_dirty_ = true;
    return slot;
}

void NicGRings::close_stream(uint32_t fd) {
    size_t slot = info_.find(fd);
    if (slot == StreamInfoRing::npos) {
        return;
    }
    info_.erase(fd);
    mark_dirty_slot(slot);
}

Status NicGRings::publish(uint32_t fd, std::optional<DataRef> data_ref,
                          std::optional<DataRef> event_ref, uint32_t event_delta,
                          std::function<void(StreamInfo&)> mutate) {
    bool noop = (!data_ref || data_ref->empty()) && (!event_ref || event_ref->empty()) &&
                event_delta == 0 && !mutate;
    if (noop) {
        return {};
    }
    if (guard_.enabled()) {
        if (data_ref && !guard_.is_flushed(FlushGuard::data_ring, *data_ref)) {
            return Errc::ordering_violation;
        }
        if (event_ref && !guard_.is_flushed(FlushGuard::event_ring, *event_ref)) {
            return Errc::ordering_violation;
        }
    }
    size_t slot = info_.find(fd);
    if (slot == StreamInfoRing::npos) {
        auto up = open_stream(fd);
        if (!up) {
            return up.error();
        }
        slot = *up;
    }
    StreamInfo s = info_.read(slot);
    if (data_ref && !data_ref->empty()) {
        s.data_end = std::max(s.data_end, data_ref->end);
    }
    s.event_count += event_delta;
    if (mutate) {
        mutate(s);
    }
    s.generation += 1;
    info_.write(slot, s);
    // Tails travel with the metadata, never ahead of the data flush.
    info_.set_data_tail(data_.tail());
    info_.set_event_tail(events_.tail());
    mark_dirty_slot(slot);
    header_dirty_ = true;
    return {};
}

std::vector<std::pair<uint64_t, uint32_t>> NicGRings::take_dirty() {
    std::vector<std::pair<uint64_t, uint32_t>> out;
    if (header_dirty_) {
        out.emplace_back(info_.header_region_off(), 16);
    }
    for (size_t slot : dirty_slots_) {
        out.emplace_back(info_.slot_region_off(slot),
                         static_cast<uint32_t>(SharedLayout::kInfoBlockSize));
    }
    dirty_slots_.clear();
    header_dirty_ = false;
    return out;
}

HostGCache::HostGCache(dma::MemoryDomain& host, const SharedLayout& lay)
    : host_(host), lay_(lay), info_n2h_view_(host, lay.info_n2h, lay.info_slots, dma::Domain::nic),
      info_h2n_(host, lay.info_h2n, lay.info_slots, dma::Domain::host) {}

HostGCache::Refresh HostGCache::refresh() {
    Refresh r;
    const uint64_t data_mask = lay_.data_cap - 1;
    uint64_t data_tail = std::max(info_n2h_view_.data_tail(), demux_data_);
    while (demux_data_ < data_tail) {
        uint64_t off = lay_.data + (demux_data_ & data_mask);
        uint32_t fd = host_.load_u32(off);
        uint32_t len = host_.load_u32(off + 4);
        if (kGRecHeader + round8(len) > lay_.data_cap) {
            break; // torn record header (only reachable with the guard off)
        }
        uint64_t footprint = kGRecHeader + round8(len);
        Chunk rec;
        rec.rec_begin = demux_data_;
        rec.rec_end = demux_data_ + footprint;
        rec.region_off = off + kGRecHeader;
        rec.len = len;
        record_order_.push_back(RecordRef{rec.rec_begin, rec.rec_end, fd});
        if (fd != kGSkipFd) {
            auto& st = streams_[fd];
            st.chunks.push_back(rec);
            st.bytes_avail += len;
            r.data_records++;
        }
        demux_data_ += footprint;
    }

    uint64_t event_tail = std::max(info_n2h_view_.event_tail(), demux_event_);
    const uint64_t ev_mask = lay_.event_cap - 1;
    while (demux_event_ < event_tail) {
        uint64_t off = lay_.event + (demux_event_ & ev_mask);
        EventRec rec{host_.load_u32(off), host_.load_u32(off + 4)};
        pending_events_.push_back(rec);
        demux_event_ += sizeof(EventRec);
        r.events++;
    }
    event_head_ = demux_event_;
    return r;
}

Result<size_t> HostGCache::consume(uint32_t fd, std::span<std::byte> dst) {
    auto it = streams_.find(fd);
    if (it == streams_.end() || it->second.bytes_avail == 0) {
        return Errc::would_block;
    }
    auto& st = it->second;
    size_t copied = 0;
    while (copied < dst.size() && !st.chunks.empty()) {
        Chunk& c = st.chunks.front();
        uint32_t left = c.len - c.consumed;
        uint32_t n = static_cast<uint32_t>(std::min<uint64_t>(left, dst.size() - copied));
        std::memcpy(dst.data() + copied, host_.data() + c.region_off + c.consumed, n);
        c.consumed += n;
        copied += n;
        st.bytes_avail -= n;
        st.consumed_total += n;
        if (c.consumed == c.len) {
            st.fully_consumed_upto = c.rec_end;
            st.chunks.pop_front();
        }
    }
    return copied;
}

size_t HostGCache::available(uint32_t fd) const {
    auto it = streams_.find(fd);
    return it == streams_.end() ? 0 : it->second.bytes_avail;
}

std::vector<EventRec> HostGCache::drain_events() {
    std::vector<EventRec> out;
    out.swap(pending_events_);
    return out;
}

std::optional<StreamInfo> HostGCache::info(uint32_t fd) const {
    size_t slot = info_n2h_view_.find(fd);
    if (slot == StreamInfoRing::npos) {
        return std::nullopt;
    }
    return info_n2h_view_.read(slot);
}

void HostGCache::publish_acks() {
    // Advance the global data head over the prefix of fully consumed
    // records (skip records count as consumed).
    while (!record_order_.empty()) {
        const RecordRef& front = record_order_.front();
        if (front.fd != kGSkipFd) {
            auto it = streams_.find(front.fd);
            if (it == streams_.end() || it->second.fully_consumed_upto < front.rec_end) {
                break;
            }
        }
        data_head_ = front.rec_end;
        record_order_.pop_front();
    }
    host_.store_u64(lay_.host_ctrl + kHostCtrlDataHead, data_head_, dma::Domain::host);
    host_.store_u64(lay_.host_ctrl + kHostCtrlEventHead, event_head_, dma::Domain::host);

    // Per-fd consumption mirror in the host-writable info ring.
    for (auto& [fd, st] : streams_) {
        if (st.consumed_total == st.acked_total) {
            continue;
        }
        auto slot = info_h2n_.upsert(fd);
        if (!slot) {
            continue; // stats-only path; retried next time
        }
        StreamInfo s = info_h2n_.read(*slot);
        s.fd = fd;
        s.data_begin = st.consumed_total;
        s.generation += 1;
        info_h2n_.write(*slot, s);
        st.acked_total = st.consumed_total;
    }
}

} // namespace pno::rings
