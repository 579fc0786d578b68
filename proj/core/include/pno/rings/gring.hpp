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

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "pno/dma/engine.hpp"
#include "pno/errors.hpp"
#include "pno/rings/layout.hpp"

namespace pno::rings {

// Half-open span of virtual ring offsets.
struct DataRef {
    uint64_t begin = 0;
    uint64_t end = 0;
    bool empty() const { return begin == end; }
};

// Data-ring record: {fd u32, len u32} header + payload, padded to 8 bytes.
// fd 0xFFFFFFFF marks a wrap-skip record.
inline constexpr uint32_t kGRecHeader = 8;
inline constexpr uint32_t kGSkipFd = 0xFFFFFFFF;

// Event record, exactly 8 bytes: {fd u32, events u32}.
struct EventRec {
    uint32_t fd = 0;
    uint32_t events = 0;
};

// Event bits carried in EventRec::events.
inline constexpr uint32_t kEvReadable = 0x1;  // EPOLLIN edge (empty -> nonempty)
inline constexpr uint32_t kEvEof = 0x2;       // peer FIN drained
inline constexpr uint32_t kEvError = 0x4;     // reset or fatal error
inline constexpr uint32_t kEvNewConn = 0x8;   // fd is a freshly accepted connection
inline constexpr uint32_t kEvWritable = 0x10; // send path open (level)
inline constexpr uint32_t kEvClosed = 0x20;   // fd fully closed, entry reclaimable

// NIC-side writer of a payload record ring.
class DataRingWriter {
public:
    DataRingWriter(dma::MemoryDomain& dom, uint64_t base, uint64_t cap);

    // Append one record; DataRingFull when the footprint (plus any wrap
    // skip) does not fit, EmptyPayload for zero-length payloads.
    Result<DataRef> produce(uint32_t fd, std::span<const std::byte> payload);

    uint64_t tail() const { return tail_; }
    void observe_head(uint64_t head);
    uint64_t head_seen() const { return head_seen_; }
    uint64_t free_space() const { return cap_ - (tail_ - head_seen_); }
    uint64_t capacity() const { return cap_; }

    // Region spans covering virtual range [from, to): one span, or two when
    // the range wraps.  Used to build flush DMA descriptors.
    void region_spans(uint64_t from, uint64_t to,
                      std::vector<std::pair<uint64_t, uint32_t>>& out) const;

private:
    dma::MemoryDomain& dom_;
    uint64_t base_, cap_, mask_;
    uint64_t tail_ = 0;
    uint64_t head_seen_ = 0;
};

// NIC-side writer of the {fd, events} ring.
class EventRingWriter {
public:
    EventRingWriter(dma::MemoryDomain& dom, uint64_t base, uint64_t cap);

    Result<DataRef> produce(const EventRec& rec);
    uint64_t tail() const { return tail_; }
    void observe_head(uint64_t head) { head_seen_ = std::max(head_seen_, head); }
    uint64_t free_space() const { return cap_ - (tail_ - head_seen_); }
    void region_spans(uint64_t from, uint64_t to,
                      std::vector<std::pair<uint64_t, uint32_t>>& out) const;

private:
    dma::MemoryDomain& dom_;
    uint64_t base_, cap_, mask_;
    uint64_t tail_ = 0;
    uint64_t head_seen_ = 0;
};

// Fixed 64-byte metadata block, one per socket stream, located at
// hash(fd) with linear probing.
struct StreamInfo {
    uint32_t fd = 0;
    uint32_t state = 0; // kStream* bits
    uint64_t data_begin = 0;
    uint64_t data_end = 0;
    uint32_t event_count = 0;
    uint32_t generation = 0;
    uint64_t aux = 0; // parent listener fd for accepted connections
    uint32_t peer_ip = 0;
    uint32_t peer_port = 0;
};

inline constexpr uint32_t kStreamEof = 0x1;
inline constexpr uint32_t kStreamError = 0x2;
inline constexpr uint32_t kStreamListening = 0x4;
inline constexpr uint32_t kStreamConnected = 0x8;

inline constexpr uint32_t kInfoEmptyFd = 0;
inline constexpr uint32_t kInfoTombstoneFd = 0xFFFFFFFF;

// One direction of the Stream Info Ring pair.  The owning side writes
// slots; the other side only reads its DMA-synced copy.
class StreamInfoRing {
public:
    static constexpr size_t npos = static_cast<size_t>(-1);

    StreamInfoRing(dma::MemoryDomain& dom, uint64_t header_base, uint64_t slot_count,
                   dma::Domain writer);

    size_t find(uint32_t fd) const;
    Result<size_t> upsert(uint32_t fd); // ring_full when no free slot
    void erase(uint32_t fd);            // tombstone

    StreamInfo read(size_t slot) const;
    void write(size_t slot, const StreamInfo& in);

    uint64_t slot_region_off(size_t slot) const {
        return header_base_ + SharedLayout::kInfoHeaderSize + slot * SharedLayout::kInfoBlockSize;
    }
    uint64_t header_region_off() const { return header_base_; }
    uint64_t slot_count() const { return slots_; }

    void set_data_tail(uint64_t v);
    void set_event_tail(uint64_t v);
    uint64_t data_tail() const;
    uint64_t event_tail() const;

private:
    dma::MemoryDomain& dom_;
    uint64_t header_base_;
    uint64_t slots_;
    dma::Domain writer_;
};

// Tracks outstanding DMA flushes of ring spans so metadata publication can
// be structurally ordered after data visibility.  The enable flag exists
// only for the negative-control experiments.
class FlushGuard {
public:
    enum RingId { data_ring = 0, event_ring = 1 };

    void note_submitted(RingId r, uint64_t token, DataRef span);
    void note_complete(uint64_t token);
    bool is_flushed(RingId r, DataRef span) const;

    void set_enabled(bool on) { enabled_ = on; }
    bool enabled() const { return enabled_; }
    size_t outstanding() const { return pending_.size(); }

private:
    struct Entry {
        RingId ring;
        DataRef span;
    };
    std::unordered_map<uint64_t, Entry> pending_;
    bool enabled_ = true;
};

// NIC-side aggregate: the produce/publish half of the G-type rings.
class NicGRings {
public:
    NicGRings(dma::MemoryDomain& nic, const SharedLayout& lay);

    Result<DataRef> produce(uint32_t fd, std::span<const std::byte> payload);
    Result<DataRef> produce_event(uint32_t fd, uint32_t events);

    // Update the stream-info block for fd (extend data_end, count events,
    // bump generation) and stage it for DMA.  Fails with OrderingViolation
    // when the guard is enabled and a referenced span has an outstanding
    // flush.  Passing empty refs and delta 0 is a no-op.
    Status publish(uint32_t fd, std::optional<DataRef> data_ref, std::optional<DataRef> event_ref,
                   uint32_t event_delta,
                   std::function<void(StreamInfo&)> mutate = nullptr);

    // Create / drop stream entries (connection lifecycle).
    Result<size_t> open_stream(uint32_t fd, std::function<void(StreamInfo&)> init = nullptr);
    void close_stream(uint32_t fd);

    // Dirty info-slot region spans accumulated since the last call (header
    // span included when any slot is dirty).
    std::vector<std::pair<uint64_t, uint32_t>> take_dirty();

    DataRingWriter& data() { return data_; }
    EventRingWriter& events() { return events_; }
    StreamInfoRing& info() { return info_; }
    FlushGuard& guard() { return guard_; }

private:
    void mark_dirty_slot(size_t slot);

    DataRingWriter data_;
    EventRingWriter events_;
    StreamInfoRing info_;
    FlushGuard guard_;
    std::vector<size_t> dirty_slots_;
    bool header_dirty_ = false;
};

// Host-side half: demultiplexes synced records into per-fd queues and
// serves reads entirely from local memory.
class HostGCache {
public:
    HostGCache(dma::MemoryDomain& host, const SharedLayout& lay);

    struct Refresh {
        size_t data_records = 0;
        size_t events = 0;
    };

    // Walk rings up to the published tails (from the host copy of the
    // stream-info header) and absorb new records.
    Refresh refresh();

    Result<size_t> consume(uint32_t fd, std::span<std::byte> dst);
    size_t available(uint32_t fd) const;

    std::vector<EventRec> drain_events();

    std::optional<StreamInfo> info(uint32_t fd) const;

    // Highest record offsets fully absorbed by refresh().
    uint64_t demux_data_cursor() const { return demux_data_; }
    uint64_t demux_event_cursor() const { return demux_event_; }

    // Publish consumption acknowledgments into the host-writable side
    // (head slots + per-fd H2N info blocks).
    void publish_acks();

private:
    struct Chunk {
        uint64_t rec_begin; // record virtual offset (header)
        uint64_t rec_end;
        uint64_t region_off; // payload position in the region
        uint32_t len;
        uint32_t consumed = 0;
    };
    struct RecordRef {
        uint64_t rec_begin;
        uint64_t rec_end;
        uint32_t fd; // kGSkipFd for wrap records
    };
    struct Stream {
        std::deque<Chunk> chunks;
        uint64_t bytes_avail = 0;
        uint64_t consumed_total = 0;
        uint64_t acked_total = 0;
        uint64_t fully_consumed_upto = 0;
    };

    dma::MemoryDomain& host_;
    SharedLayout lay_;
    StreamInfoRing info_n2h_view_; // read-only view of the NIC-written copy
    StreamInfoRing info_h2n_;      // host-written acknowledgments
    std::unordered_map<uint32_t, Stream> streams_;
    std::deque<RecordRef> record_order_; // for head advancement
    std::vector<EventRec> pending_events_;
    uint64_t demux_data_ = 0;
    uint64_t demux_event_ = 0;
    uint64_t data_head_ = 0;
    uint64_t event_head_ = 0;
};

} // namespace pno::rings
