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

#include "pno/bridge/bridge.hpp"

#include <algorithm>
#include <cassert>
#include <cstring>
#include <sstream>

namespace pno::bridge {

namespace {

// POSIX-style negative statuses crossing the ring boundary.
constexpr int64_t kErrBadf = -9;
constexpr int64_t kErrAgain = -11;
constexpr int64_t kErrAddrInUse = -98;
constexpr int64_t kErrConnRefused = -111;
constexpr int64_t kErrHostUnreach = -113;

constexpr uint32_t kPingFd = 0xFFFFFFFF;

uint32_t rd_u32(std::span<const std::byte> p, size_t off) {
    uint32_t v;
    std::memcpy(&v, p.data() + off, 4);
    return v;
}

} // namespace

BridgeConfig BridgeConfig::from(const Config& cfg) {
    BridgeConfig c;
    c.cores = static_cast<uint32_t>(cfg.get_u64("bridge.cores", c.cores));
    c.poll_budget = cfg.get_u64("bridge.poll_budget", c.poll_budget);
    c.batch_window_us = cfg.get_f64("bridge.batch_window_us", c.batch_window_us);
    c.sync_window_bytes =
        static_cast<uint32_t>(cfg.get_u64("bridge.sync_window_bytes", c.sync_window_bytes));
    c.rx_drain_budget = cfg.get_u64("bridge.rx_drain_budget", c.rx_drain_budget);
    c.ordering_guard = cfg.get_bool("bridge.ordering_guard", c.ordering_guard);
    return c;
}

std::string BridgeStats::to_text() const {
    std::ostringstream os;
    os << "bridge.cycles=" << cycles << "\n";
    os << "bridge.blocks_parsed=" << blocks_parsed << "\n";
    os << "bridge.bytes_bridged=" << bytes_bridged << "\n";
    os << "bridge.bytes_delivered=" << bytes_delivered << "\n";
    os << "bridge.ordering_stalls=" << ordering_stalls << "\n";
    os << "bridge.ordering_violations=" << ordering_violations << "\n";
    os << "bridge.unknown_blocks=" << unknown_blocks << "\n";
    os << "bridge.unknown_fd=" << unknown_fd << "\n";
    os << "bridge.events_emitted=" << events_emitted << "\n";
    os << "bridge.dma_batches=" << dma_batches << "\n";
    os << "bridge.dma_descriptors=" << dma_descriptors << "\n";
    os << "bridge.write_stalls=" << write_stalls << "\n";
    os << "bridge.data_ring_stalls=" << data_ring_stalls << "\n";
    return os.str();
}

NicRuntime::NicRuntime(SimClock& clock, dma::SimDmaEngine& dma, const rings::SharedLayout& lay,
                       tcp::StackConfig stack_cfg, BridgeConfig cfg, net::SimLink& tx_link,
                       net::SimLink& rx_link)
    : clock_(clock), dma_(dma), lay_(lay), cfg_(cfg),
      scons_(dma.domain(dma::Domain::nic), lay), grings_(dma.domain(dma::Domain::nic), lay),
      tx_link_(tx_link), rx_link_(rx_link) {
    grings_.guard().set_enabled(cfg_.ordering_guard);
    for (uint32_t i = 0; i < cfg_.cores; i++) {
        tcp::StackConfig per_core = stack_cfg;
        per_core.seed = stack_cfg.seed + i * 7919;
        engines_.push_back(std::make_unique<tcp::TcpEngine>(
            clock_, per_core, [this](std::span<const std::byte> f) {
                if (frame_tap_) {
                    frame_tap_(f, clock_.now());
                }
                tx_link_.send(f, clock_.now());
            }));
    }
}

NicRuntime::FdEntry* NicRuntime::lookup_fd(uint32_t fd) {
    auto it = fd_table_.find(fd);
    return it == fd_table_.end() || !it->second.open ? nullptr : &it->second;
}

uint32_t NicRuntime::fd_of(uint32_t core, tcp::TcpEngine::ConnId conn) const {
    auto it = conn_to_fd_.find({core, conn});
    return it == conn_to_fd_.end() ? 0 : it->second;
}

void NicRuntime::queue_patch(const rings::SRingConsumer::Patch& p) {
    patch_batch_.push_back(dma::DmaDescriptor{dma::Domain::nic, p.region_off, p.region_off, p.len});
}

void NicRuntime::complete_sync_block(const PendingSync& ps, int64_t retval) {
    rings::SBlockView v;
    v.voff = ps.voff;
    v.flag = ps.kind;
    auto patch = scons_.complete(v, retval);
    if (patch) {
        queue_patch(*patch);
    }
}

uint32_t NicRuntime::ingress_core(std::span<const std::byte> frame) const {
    if (cfg_.cores == 1 || frame.size() < 38) {
        return 0;
    }
    // Flow affinity: hash the 4-tuple fields straight out of the frame
    // (software RSS stand-in).
    uint32_t src_ip = rd_u32(frame, 26);
    uint32_t ports = rd_u32(frame, 34);
    uint64_t h = (static_cast<uint64_t>(src_ip) << 32) ^ ports;
    h *= 0x9E3779B97F4A7C15ull;
    return static_cast<uint32_t>((h >> 33) % cfg_.cores);
}

void NicRuntime::start_host_sync(SimTime now) {
    if (sync_state_ != SyncState::idle) {
        return;
    }
    if (now - last_sync_at_ < cfg_.batch_window_us) {
        return;
    }
    auto& nic = dma_.domain(dma::Domain::nic);

    std::vector<dma::DmaDescriptor> batch;
    // Host control slots: S alloc cursor + data/event heads.
    batch.push_back(dma::DmaDescriptor{dma::Domain::host, lay_.host_ctrl, lay_.host_ctrl, 24});

    // S-ring window [synced_upto, alloc_cursor as of the previous sync).
    uint64_t alloc_known = nic.load_u64(lay_.host_ctrl + rings::kHostCtrlAllocCursor);
    uint64_t from = s_synced_upto_;
    uint64_t to = alloc_known;
    if (to > from) {
        if (to - from > cfg_.sync_window_bytes) {
            to = from + cfg_.sync_window_bytes;
        }
        uint64_t mask = lay_.sring_cap - 1;
        uint64_t pos = from & mask;
        uint64_t len = to - from;
        uint64_t first = std::min(len, lay_.sring_cap - pos);
        batch.push_back(dma::DmaDescriptor{dma::Domain::host, lay_.sring + pos, lay_.sring + pos,
                                           static_cast<uint32_t>(first)});
        if (first < len) {
            batch.push_back(dma::DmaDescriptor{dma::Domain::host, lay_.sring, lay_.sring,
                                               static_cast<uint32_t>(len - first)});
        }
        s_synced_upto_ = to;
    }

    // A rotating slice of the host-written info ring (consumption mirror).
    {
        constexpr uint64_t kSlice = 16;
        uint64_t slot = h2n_rotor_ % lay_.info_slots;
        uint64_t nslots = std::min(kSlice, lay_.info_slots - slot);
        uint64_t off = lay_.info_h2n + rings::SharedLayout::kInfoHeaderSize +
                       slot * rings::SharedLayout::kInfoBlockSize;
        batch.push_back(dma::DmaDescriptor{
            dma::Domain::host, off, off,
            static_cast<uint32_t>(nslots * rings::SharedLayout::kInfoBlockSize)});
        h2n_rotor_ = (slot + nslots) % lay_.info_slots;
    }

    auto tok = dma_.submit_batch(batch);
    if (!tok) {
        return; // engine saturated; retry next cycle
    }
    stats_.dma_batches++;
    stats_.dma_descriptors += batch.size();
    sync_token_lo_ = *tok;
    sync_token_hi_ = *tok + batch.size() - 1;
    sync_pending_ = batch.size();
    sync_state_ = SyncState::inflight;
    last_sync_at_ = now;
}

void NicRuntime::dispatch(const rings::SBlockView& blk, SimTime now) {
    (void)now;
    stats_.blocks_parsed++;
    auto flag_idx = static_cast<uint32_t>(blk.flag);
    if (flag_idx < 9) {
        stats_.dispatched[flag_idx]++;
    }
    auto p = blk.payload;

    switch (blk.flag) {
    case rings::SFlag::w_socket: {
        uint32_t fd = next_fd_++;
        FdEntry e;
        e.open = true;
        fd_table_[fd] = e;
        PendingSync ps{blk.voff, blk.flag, fd, 0, tcp::TcpEngine::kInvalidConn};
        complete_sync_block(ps, fd);
        break;
    }
    case rings::SFlag::w_listen: {
        uint32_t fd = rd_u32(p, 0);
        uint32_t port = rd_u32(p, 4);
        uint32_t backlog = rd_u32(p, 8);
        FdEntry* e = lookup_fd(fd);
        PendingSync ps{blk.voff, blk.flag, fd, 0, tcp::TcpEngine::kInvalidConn};
        if (!e) {
            stats_.unknown_fd++;
            complete_sync_block(ps, kErrBadf);
            break;
        }
        int64_t rv = 0;
        e->listeners.assign(cfg_.cores, tcp::TcpEngine::kInvalidConn);
        for (uint32_t core = 0; core < cfg_.cores; core++) {
            auto lid = engines_[core]->open_passive(static_cast<uint16_t>(port), backlog);
            if (!lid) {
                rv = kErrAddrInUse;
                break;
            }
            e->listeners[core] = *lid;
        }
        if (rv == 0) {
            e->is_listener = true;
            grings_.open_stream(fd, [](rings::StreamInfo& s) {
                s.state |= rings::kStreamListening;
            });
        }
        complete_sync_block(ps, rv);
        break;
    }
    case rings::SFlag::w_connect: {
        uint32_t fd = rd_u32(p, 0);
        uint32_t ip = rd_u32(p, 4);
        uint32_t port = rd_u32(p, 8);
        FdEntry* e = lookup_fd(fd);
        PendingSync ps{blk.voff, blk.flag, fd, 0, tcp::TcpEngine::kInvalidConn};
        if (!e) {
            stats_.unknown_fd++;
            complete_sync_block(ps, kErrBadf);
            break;
        }
        uint16_t src_port = next_port_++;
        uint64_t h = (static_cast<uint64_t>(ip) << 32) ^
                     (static_cast<uint64_t>(port) << 16) ^ src_port;
        h *= 0x9E3779B97F4A7C15ull;
        uint32_t core = static_cast<uint32_t>((h >> 33) % cfg_.cores);
        auto conn = engines_[core]->open_active(ip, static_cast<uint16_t>(port), src_port);
        if (!conn) {
            complete_sync_block(ps, kErrHostUnreach);
            break;
        }
        e->core = core;
        e->conn = *conn;
        conn_to_fd_[{core, *conn}] = fd;
        ps.core = core;
        ps.conn = *conn;
        conn_waits_.push_back(ps); // completed on ESTABLISHED / refusal
        break;
    }
    case rings::SFlag::w_epoll_ctl: {
        uint32_t epfd = rd_u32(p, 0);
        uint32_t op = rd_u32(p, 4);
        uint32_t fd = rd_u32(p, 8);
        PendingSync ps{blk.voff, blk.flag, fd, 0, tcp::TcpEngine::kInvalidConn};
        auto& set = epoll_interest_[epfd];
        int64_t rv = 0;
        if (op == 1) { // add
            if (!lookup_fd(fd)) {
                rv = kErrBadf;
            } else {
                set.push_back(fd);
            }
        } else if (op == 2) { // del
            set.erase(std::remove(set.begin(), set.end(), fd), set.end());
        }
        complete_sync_block(ps, rv);
        break;
    }
    case rings::SFlag::w_setopt: {
        uint32_t fd = rd_u32(p, 0);
        PendingSync ps{blk.voff, blk.flag, fd, 0, tcp::TcpEngine::kInvalidConn};
        if (fd != kPingFd && !lookup_fd(fd)) {
            stats_.unknown_fd++;
            complete_sync_block(ps, kErrBadf);
            break;
        }
        complete_sync_block(ps, 0); // no-op surface (and the sync ping)
        break;
    }
    case rings::SFlag::w_close: {
        uint32_t fd = rd_u32(p, 0);
        FdEntry* e = lookup_fd(fd);
        if (!e) {
            stats_.unknown_fd++;
            queue_patch(scons_.mark_done(blk, kErrBadf));
            break;
        }
        if (e->is_listener) {
            for (uint32_t core = 0; core < cfg_.cores; core++) {
                if (e->listeners[core] != tcp::TcpEngine::kInvalidConn) {
                    engines_[core]->close(e->listeners[core]);
                }
            }
            grings_.close_stream(fd);
            auto ev = grings_.produce_event(fd, rings::kEvClosed);
            if (ev) {
                publish_queue_.push_back(PendingPublish{fd, std::nullopt, *ev, 1, 0});
                stats_.events_emitted++;
            }
            e->open = false;
        } else if (e->conn != tcp::TcpEngine::kInvalidConn) {
            engines_[e->core]->close(e->conn);
            // EV_CLOSED follows from the engine's closed feed.
        } else {
            e->open = false; // socket never connected
        }
        queue_patch(scons_.mark_done(blk, std::nullopt));
        break;
    }
    case rings::SFlag::w_write:
    case rings::SFlag::w_sendfile: {
        uint32_t fd = rd_u32(p, 0);
        uint32_t size = rd_u32(p, 4);
        FdEntry* e = lookup_fd(fd);
        if (!e || e->conn == tcp::TcpEngine::kInvalidConn) {
            stats_.unknown_fd++;
            queue_patch(scons_.mark_done(blk, -1));
            break;
        }
        uint32_t off = have_stalled_write_ ? stalled_write_off_ : 0;
        auto body = p.subspan(8 + off, size - off);
        auto accepted = engines_[e->core]->tx_enqueue(e->conn, body);
        size_t n = accepted ? *accepted : 0;
        stats_.bytes_bridged += n;
        if (n < body.size()) {
            // Send window full: resume this block next cycle.
            have_stalled_write_ = true;
            stalled_write_off_ = off + static_cast<uint32_t>(n);
            stats_.write_stalls++;
        } else {
            have_stalled_write_ = false;
            stalled_write_off_ = 0;
            queue_patch(scons_.mark_done(blk, std::nullopt));
        }
        break;
    }
    default:
        stats_.unknown_blocks++;
        queue_patch(scons_.mark_done(blk, -1));
        break;
    }
}

void NicRuntime::scan_and_dispatch(SimTime now) {
    auto views = scons_.peek(cfg_.poll_budget);
    size_t done = 0;
    for (const auto& v : views) {
        bool was_stalled_write = have_stalled_write_;
        dispatch(v, now);
        if (have_stalled_write_) {
            // Current W_WRITE could not fully drain; stop here.
            (void)was_stalled_write;
            break;
        }
        done++;
    }
    scons_.consume(done);
}

void NicRuntime::emit_conn_events(uint32_t core, SimTime now) {
    (void)now;
    auto& eng = *engines_[core];

    for (auto conn : eng.take_established()) {
        auto info = eng.info(conn);
        // Pending W_CONNECT completion?
        for (size_t i = 0; i < conn_waits_.size(); i++) {
            if (conn_waits_[i].core == core && conn_waits_[i].conn == conn) {
                complete_sync_block(conn_waits_[i], 0);
                conn_waits_.erase(conn_waits_.begin() + static_cast<ptrdiff_t>(i));
                break;
            }
        }
        uint32_t fd = fd_of(core, conn);
        if (fd == 0 && info.parent_listener != tcp::TcpEngine::kInvalidConn) {
            // Accepted connection: allocate its fd and announce it.
            fd = next_fd_++;
            FdEntry e;
            e.open = true;
            e.core = core;
            e.conn = conn;
            fd_table_[fd] = e;
            conn_to_fd_[{core, conn}] = fd;
            // Which listener fd does this engine-level listener belong to?
            uint32_t listener_fd = 0;
            for (auto& [cand_fd, cand] : fd_table_) {
                if (cand.is_listener && cand.open &&
                    cand.listeners.size() > core && cand.listeners[core] == info.parent_listener) {
                    listener_fd = cand_fd;
                    break;
                }
            }
            grings_.open_stream(fd, [&](rings::StreamInfo& s) {
                s.state |= rings::kStreamConnected;
                s.aux = listener_fd;
                s.peer_ip = info.remote_ip;
                s.peer_port = info.remote_port;
            });
            auto ev = grings_.produce_event(fd, rings::kEvNewConn);
            if (ev) {
                publish_queue_.push_back(PendingPublish{fd, std::nullopt, *ev, 1, 0});
                stats_.events_emitted++;
            }
        } else if (fd != 0) {
            grings_.open_stream(fd, [&](rings::StreamInfo& s) {
                s.state |= rings::kStreamConnected;
                s.peer_ip = info.remote_ip;
                s.peer_port = info.remote_port;
            });
            auto ev = grings_.produce_event(fd, rings::kEvWritable);
            if (ev) {
                publish_queue_.push_back(PendingPublish{fd, std::nullopt, *ev, 1, 0});
                stats_.events_emitted++;
            }
        }
        // Engine-level accept bookkeeping: the bridge owns delivery, so
        // drain the engine's accept queue.
        if (info.parent_listener != tcp::TcpEngine::kInvalidConn) {
            eng.accept(info.parent_listener);
        }
    }

    for (auto [conn, err] : eng.take_errors()) {
        for (size_t i = 0; i < conn_waits_.size(); i++) {
            if (conn_waits_[i].core == core && conn_waits_[i].conn == conn) {
                complete_sync_block(conn_waits_[i],
                                    err == Errc::conn_refused ? kErrConnRefused : kErrHostUnreach);
                conn_waits_.erase(conn_waits_.begin() + static_cast<ptrdiff_t>(i));
                break;
            }
        }
        uint32_t fd = fd_of(core, conn);
        if (fd != 0) {
            auto ev = grings_.produce_event(fd, rings::kEvError);
            if (ev) {
                publish_queue_.push_back(
                    PendingPublish{fd, std::nullopt, *ev, 1, rings::kStreamError});
                stats_.events_emitted++;
            }
            fd_table_[fd].conn = tcp::TcpEngine::kInvalidConn;
            conn_to_fd_.erase({core, conn});
        }
    }

    for (auto conn : eng.take_closed()) {
        uint32_t fd = fd_of(core, conn);
        if (fd != 0) {
            auto ev = grings_.produce_event(fd, rings::kEvClosed);
            if (ev) {
                publish_queue_.push_back(PendingPublish{fd, std::nullopt, *ev, 1, 0});
                stats_.events_emitted++;
            }
            fd_table_[fd].conn = tcp::TcpEngine::kInvalidConn;
            fd_table_[fd].open = false;
            grings_.close_stream(fd);
            conn_to_fd_.erase({core, conn});
        }
    }
}

void NicRuntime::drain_stack_to_grings(uint32_t core, SimTime now) {
    (void)now;
    auto& eng = *engines_[core];
    for (auto conn : eng.live_conns()) {
        uint32_t fd = fd_of(core, conn);
        if (fd == 0) {
            continue;
        }
        FdEntry& e = fd_table_[fd];
        size_t budget = cfg_.rx_drain_budget;
        while (budget-- > 0 && eng.readable_bytes(conn) > 0) {
            // Worst case footprint for one view: payload + record header +
            // a wrap skip record.
            if (grings_.data().free_space() <
                tcp::PacketBlock::kDefaultCapacity + 2 * rings::kGRecHeader + 8) {
                stats_.data_ring_stalls++;
                break; // keep segments in the receive pool (backpressure)
            }
            auto views = eng.rx_read(conn, 1);
            if (views.empty()) {
                break;
            }
            const auto& v = views.front();
            auto ref = grings_.produce(fd, v.bytes());
            assert(ref);
            stats_.bytes_delivered += v.len;
            uint32_t delta = 0;
            if (e.unread_hint == 0) {
                auto ev = grings_.produce_event(fd, rings::kEvReadable);
                if (ev) {
                    publish_queue_.push_back(PendingPublish{fd, *ref, *ev, 1, 0});
                    stats_.events_emitted++;
                } else {
                    publish_queue_.push_back(PendingPublish{fd, *ref, std::nullopt, 0, 0});
                }
            } else {
                publish_queue_.push_back(PendingPublish{fd, *ref, std::nullopt, delta, 0});
            }
            e.unread_hint += v.len;
            // Block reference dropped here: the pool block is released as
            // soon as the bridge has copied it into the data ring.
        }
        if (eng.eof_drained(conn) && !e.eof_sent) {
            auto ev = grings_.produce_event(fd, rings::kEvEof);
            if (ev) {
                publish_queue_.push_back(
                    PendingPublish{fd, std::nullopt, *ev, 1, rings::kStreamEof});
                e.eof_sent = true;
                stats_.events_emitted++;
            }
        }
    }
}

void NicRuntime::submit_flushes(SimTime now) {
    (void)now;
    struct SpanRef {
        rings::FlushGuard::RingId ring;
        rings::DataRef vspan;
    };
    std::vector<dma::DmaDescriptor> batch;
    std::vector<SpanRef> refs;

    auto add_ring_spans = [&](rings::FlushGuard::RingId ring, uint64_t base, uint64_t cap,
                              uint64_t from, uint64_t to) {
        uint64_t mask = cap - 1;
        while (from < to) {
            uint64_t pos = from & mask;
            uint64_t len = std::min(to - from, cap - pos);
            batch.push_back(dma::DmaDescriptor{dma::Domain::nic, base + pos, base + pos,
                                               static_cast<uint32_t>(len)});
            refs.push_back(SpanRef{ring, rings::DataRef{from, from + len}});
            from += len;
        }
    };

    add_ring_spans(rings::FlushGuard::data_ring, lay_.data, lay_.data_cap, data_flushed_upto_,
                   grings_.data().tail());
    add_ring_spans(rings::FlushGuard::event_ring, lay_.event, lay_.event_cap, event_flushed_upto_,
                   grings_.events().tail());
    if (batch.empty()) {
        return;
    }
    auto tok = dma_.submit_batch(batch);
    if (!tok) {
        return; // retry next cycle; flushed_upto unchanged
    }
    stats_.dma_batches++;
    stats_.dma_descriptors += batch.size();
    for (size_t i = 0; i < batch.size(); i++) {
        uint64_t t = *tok + i;
        flush_tokens_[t] = static_cast<uint8_t>(refs[i].ring);
        grings_.guard().note_submitted(refs[i].ring, t, refs[i].vspan);
    }
    data_flushed_upto_ = grings_.data().tail();
    event_flushed_upto_ = grings_.events().tail();
}

void NicRuntime::drain_publish_queue() {
    while (!publish_queue_.empty()) {
        PendingPublish& pp = publish_queue_.front();
        if (grings_.guard().enabled()) {
            bool data_ok = !pp.data_ref ||
                           grings_.guard().is_flushed(rings::FlushGuard::data_ring, *pp.data_ref);
            bool ev_ok = !pp.event_ref ||
                         grings_.guard().is_flushed(rings::FlushGuard::event_ring, *pp.event_ref);
            if (!data_ok || !ev_ok) {
                stats_.ordering_stalls++;
                break; // strict FIFO publication
            }
        }
        uint32_t bits = pp.state_bits;
        Status st = grings_.publish(pp.fd, pp.data_ref, pp.event_ref, pp.event_delta,
                                    bits ? std::function<void(rings::StreamInfo&)>(
                                               [bits](rings::StreamInfo& s) { s.state |= bits; })
                                         : nullptr);
        if (!st) {
            stats_.ordering_violations++;
        }
        publish_queue_.pop_front();
    }
}

void NicRuntime::submit_info_sync(SimTime now) {
    (void)now;
    if (info_sync_inflight_) {
        return; // serialize: keeps host-visible metadata monotone
    }
    auto dirty = grings_.take_dirty();
    if (dirty.empty()) {
        return;
    }
    std::vector<dma::DmaDescriptor> batch;
    for (auto [off, len] : dirty) {
        batch.push_back(dma::DmaDescriptor{dma::Domain::nic, off, off, len});
    }
    auto tok = dma_.submit_batch(batch);
    if (!tok) {
        // Put the dirt back: simplest is to re-mark on next publish; the
        // slots stay dirty in grings_ bookkeeping terms.
        for (auto [off, len] : dirty) {
            dirty_backlog_.emplace_back(off, len);
        }
        return;
    }
    stats_.dma_batches++;
    stats_.dma_descriptors += batch.size();
    info_sync_token_lo_ = *tok;
    info_sync_token_hi_ = *tok + batch.size() - 1;
    info_sync_inflight_ = true;
}

void NicRuntime::on_dma_complete(uint64_t token) {
    if (sync_state_ == SyncState::inflight && token >= sync_token_lo_ && token <= sync_token_hi_) {
        if (--sync_pending_ == 0) {
            sync_state_ = SyncState::idle;
            // Host control just landed: refresh head views.
            auto& nic = dma_.domain(dma::Domain::nic);
            grings_.data().observe_head(nic.load_u64(lay_.host_ctrl + rings::kHostCtrlDataHead));
            grings_.events().observe_head(nic.load_u64(lay_.host_ctrl + rings::kHostCtrlEventHead));
        }
        return;
    }
    if (auto it = flush_tokens_.find(token); it != flush_tokens_.end()) {
        grings_.guard().note_complete(token);
        flush_tokens_.erase(it);
        drain_publish_queue();
        return;
    }
    if (info_sync_inflight_ && token >= info_sync_token_lo_ && token <= info_sync_token_hi_) {
        if (token == info_sync_token_hi_) {
            info_sync_inflight_ = false;
        }
        return;
    }
    // Patch/cursor writebacks need no action.
}

bool NicRuntime::dma_poll_step(SimTime now) {
    (void)now;
    auto comps = dma_.poll_completions(static_cast<size_t>(-1));
    for (const auto& c : comps) {
        on_dma_complete(c.token);
    }
    return !comps.empty();
}

bool NicRuntime::bridge_step(uint32_t core, SimTime now) {
    bool work = false;
    if (core == 0) {
        stats_.cycles++;
        start_host_sync(now);
        size_t parsed_before = stats_.blocks_parsed;
        scan_and_dispatch(now);
        work |= stats_.blocks_parsed != parsed_before;
    }
    emit_conn_events(core, now);
    drain_stack_to_grings(core, now);
    if (core == 0) {
        submit_flushes(now);
        if (!grings_.guard().enabled()) {
            drain_publish_queue(); // negative control: publish immediately
        }
        submit_info_sync(now);
        // NIC->host writebacks: W_DONE patches + the scan cursor.
        if (!patch_batch_.empty() || scons_.scan_cursor() != last_pub_scan_) {
            patch_batch_.push_back(dma::DmaDescriptor{dma::Domain::nic,
                                                      lay_.nic_ctrl + rings::kNicCtrlScanCursor,
                                                      lay_.nic_ctrl + rings::kNicCtrlScanCursor,
                                                      8});
            auto tok = dma_.submit_batch(patch_batch_);
            if (tok) {
                stats_.dma_batches++;
                stats_.dma_descriptors += patch_batch_.size();
                last_pub_scan_ = scons_.scan_cursor();
                patch_batch_.clear();
                work = true;
            } else {
                patch_batch_.pop_back(); // retry later
            }
        }
    }
    return work;
}

bool NicRuntime::stack_step(uint32_t core, SimTime now) {
    bool work = false;
    if (core == 0) {
        for (auto& f : rx_link_.poll(now)) {
            uint32_t target = ingress_core(f.bytes);
            engines_[target]->rx_segment(f.bytes);
            work = true;
        }
    }
    engines_[core]->timer_tick();
    engines_[core]->tx_emit_all();
    return work;
}

Result<rings::DataRef> NicRuntime::shuttle_data(uint32_t fd, std::span<const std::byte> payload) {
    auto ref = grings_.produce(fd, payload);
    if (!ref) {
        return ref;
    }
    stats_.bytes_delivered += payload.size();
    publish_queue_.push_back(PendingPublish{fd, *ref, std::nullopt, 0, 0});
    return ref;
}

void NicRuntime::open_plain_stream(uint32_t fd) {
    FdEntry e;
    e.open = true;
    fd_table_[fd] = e;
    grings_.open_stream(fd);
}

void NicRuntime::flush_now() {
    submit_flushes(clock_.now());
    if (!grings_.guard().enabled()) {
        drain_publish_queue();
    }
    submit_info_sync(clock_.now());
}

bool NicRuntime::idle() const {
    return publish_queue_.empty() && flush_tokens_.empty() && !info_sync_inflight_ &&
           patch_batch_.empty();
}

} // namespace pno::bridge
