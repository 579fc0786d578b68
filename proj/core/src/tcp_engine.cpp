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

#include "pno/tcp/engine.hpp"

#include <algorithm>
#include <cassert>

#include "pno/tcp/checksum.hpp"
#include "pno/tcp/seq.hpp"

namespace pno::tcp {

const char* state_name(TcpState s) {
    switch (s) {
    case TcpState::closed: return "CLOSED";
    case TcpState::listen: return "LISTEN";
    case TcpState::syn_sent: return "SYN_SENT";
    case TcpState::syn_rcvd: return "SYN_RCVD";
    case TcpState::established: return "ESTABLISHED";
    case TcpState::fin_wait_1: return "FIN_WAIT_1";
    case TcpState::fin_wait_2: return "FIN_WAIT_2";
    case TcpState::close_wait: return "CLOSE_WAIT";
    case TcpState::closing: return "CLOSING";
    case TcpState::last_ack: return "LAST_ACK";
    case TcpState::time_wait: return "TIME_WAIT";
    }
    return "?";
}

StackConfig StackConfig::from(const Config& cfg) {
    StackConfig c;
    c.mtu = static_cast<uint16_t>(cfg.get_u64("tcp.mtu", c.mtu));
    c.mss = static_cast<uint16_t>(cfg.get_u64("tcp.mss", c.mss));
    c.recv_buf = static_cast<uint32_t>(cfg.get_u64("tcp.recv_buf", c.recv_buf));
    c.min_rto_us = cfg.get_f64("tcp.min_rto_us", c.min_rto_us);
    c.max_rto_us = cfg.get_f64("tcp.max_rto_us", c.max_rto_us);
    c.initial_rto_us = cfg.get_f64("tcp.initial_rto_us", c.initial_rto_us);
    c.delack_us = cfg.get_f64("tcp.delack_us", c.delack_us);
    c.msl_us = cfg.get_f64("tcp.msl_us", c.msl_us);
    c.seed = cfg.get_u64("tcp.seed", c.seed);
    return c;
}

namespace {
constexpr uint32_t kMaxAdvertised = 65535;
}

TcpEngine::TcpEngine(SimClock& clock, StackConfig cfg, FrameSink sink)
    : clock_(clock), cfg_(cfg), sink_(std::move(sink)),
      pool_(PacketBlock::kDefaultCapacity, cfg.track_payload_writes), timers_(100.0, 512),
      rng_(cfg.seed) {}

TcpEngine::ConnId TcpEngine::alloc_conn() {
    if (!free_list_.empty()) {
        ConnId id = free_list_.back();
        free_list_.pop_back();
        conns_[id] = Conn{};
        conns_[id].in_use = true;
        return id;
    }
    conns_.push_back(Conn{});
    conns_.back().in_use = true;
    return static_cast<ConnId>(conns_.size() - 1);
}

void TcpEngine::release_conn(ConnId id) {
    Conn& c = conns_[id];
    if (!c.in_use) {
        return;
    }
    timers_.cancel(id, TimerKind::rto);
    timers_.cancel(id, TimerKind::delayed_ack);
    timers_.cancel(id, TimerKind::time_wait);
    timers_.cancel(id, TimerKind::persist);
    by_tuple_.erase(TupleKey{c.remote_ip, c.local_port, c.remote_port});
    if (c.state == TcpState::listen) {
        listeners_.erase(c.local_port);
    }
    c = Conn{};
    free_list_.push_back(id);
}

uint32_t TcpEngine::local_rwnd(const Conn& c) const {
    uint64_t used = c.pool.pooled_bytes() + c.pool.assembled_bytes();
    uint64_t buf = cfg_.recv_buf;
    uint64_t avail = used >= buf ? 0 : buf - used;
    return static_cast<uint32_t>(std::min<uint64_t>(avail, kMaxAdvertised));
}

uint32_t TcpEngine::usable_window(const Conn& c) const {
    return std::min(c.cwnd, c.peer_rwnd);
}

uint32_t TcpEngine::seq_len_of(const SendWindow::Entry& e) const {
    return e.len + ((e.flags & (kTcpSyn | kTcpFin)) ? 1 : 0);
}

Result<TcpEngine::ConnId> TcpEngine::open_passive(uint16_t port, uint32_t backlog) {
    if (listeners_.count(port)) {
        return Errc::addr_in_use;
    }
    ConnId id = alloc_conn();
    Conn& c = conn(id);
    c.state = TcpState::listen;
    c.local_ip = cfg_.ip;
    c.local_port = port;
    c.backlog = backlog;
    listeners_[port] = id;
    return id;
}

Result<TcpEngine::ConnId> TcpEngine::open_active(uint32_t dst_ip, uint16_t dst_port,
                                                 uint16_t src_port) {
    ConnId id = alloc_conn();
    Conn& c = conn(id);
    c.local_ip = cfg_.ip;
    c.remote_ip = dst_ip;
    if (src_port != 0) {
        c.local_port = src_port;
    } else {
        c.local_port = next_ephemeral_++;
        if (next_ephemeral_ == 0) {
            next_ephemeral_ = 49152;
        }
    }
    c.remote_port = dst_port;
    by_tuple_[TupleKey{c.remote_ip, c.local_port, c.remote_port}] = id;

    c.state = TcpState::syn_sent;
    c.iss = static_cast<uint32_t>(rng_());
    c.snd_una = c.iss;
    c.snd_nxt = c.iss;
    c.enqueue_nxt = c.iss + 1;
    c.mss_eff = cfg_.mss;
    c.cwnd = 2 * cfg_.mss;
    c.ssthresh = kMaxAdvertised;
    c.rto_us = cfg_.initial_rto_us;
    c.peer_rwnd = cfg_.mss; // until the peer advertises
    c.window = SendWindow{64};

    BlockPtr b = pool_.get();
    b->set_payload_len(0);
    c.window.push(b, c.iss, 0, kTcpSyn);
    tx_emit(id);
    return id;
}

Result<TcpEngine::ConnId> TcpEngine::accept(ConnId listener) {
    if (!valid(listener) || conn(listener).state != TcpState::listen) {
        return Errc::bad_fd;
    }
    Conn& l = conn(listener);
    if (l.accept_q.empty()) {
        return Errc::would_block;
    }
    ConnId id = l.accept_q.front();
    l.accept_q.pop_front();
    return id;
}

Status TcpEngine::close(ConnId id) {
    if (!valid(id)) {
        return Errc::bad_fd;
    }
    Conn& c = conn(id);
    switch (c.state) {
    case TcpState::listen:
    case TcpState::syn_sent:
        release_conn(id);
        return {};
    case TcpState::established:
    case TcpState::syn_rcvd:
        c.state = TcpState::fin_wait_1;
        break;
    case TcpState::close_wait:
        c.state = TcpState::last_ack;
        break;
    default:
        return Errc::conn_closed;
    }
    if (!c.fin_enqueued) {
        BlockPtr b = pool_.get();
        b->set_payload_len(0);
        if (!c.window.push(b, c.enqueue_nxt, 0, kTcpFin | kTcpAck)) {
            // Window ring exhausted; mark and enqueue once space frees.
            c.state = c.state == TcpState::last_ack ? TcpState::close_wait : TcpState::established;
            return Errc::window_full;
        }
        c.fin_enqueued = true;
        c.enqueue_nxt += 1;
        tx_emit(id);
    }
    return {};
}

void TcpEngine::abort(ConnId id) {
    if (!valid(id)) {
        return;
    }
    Conn& c = conn(id);
    if (c.state != TcpState::listen && c.state != TcpState::syn_sent) {
        send_reset(c);
    }
    closed_feed_.push_back(id);
    release_conn(id);
}

Result<size_t> TcpEngine::tx_enqueue(ConnId id, std::span<const std::byte> payload) {
    if (!valid(id)) {
        return Errc::bad_fd;
    }
    Conn& c = conn(id);
    if (c.state != TcpState::established && c.state != TcpState::close_wait) {
        return Errc::conn_closed;
    }
    if (c.fin_enqueued) {
        return Errc::conn_closed;
    }
    if (c.window.full()) {
        return Errc::window_full;
    }
    size_t accepted = 0;
    while (accepted < payload.size() && !c.window.full()) {
        uint32_t chunk = static_cast<uint32_t>(
            std::min<size_t>(c.mss_eff, payload.size() - accepted));
        BlockPtr b = pool_.get();
        b->write_payload(0, payload.subspan(accepted, chunk));
        b->set_payload_len(chunk);
        b->seq = c.enqueue_nxt;
        c.window.push(std::move(b), c.enqueue_nxt, chunk, kTcpAck | kTcpPsh);
        c.enqueue_nxt += chunk;
        accepted += chunk;
    }
    if (accepted == 0) {
        return Errc::window_full;
    }
    return accepted;
}

void TcpEngine::emit_entry(ConnId id, Conn& c, SendWindow::Entry& e, bool is_retransmit) {
    PacketBlock& b = *e.block;
    if (!b.has_headers()) {
        FrameMeta meta;
        meta.src_mac = cfg_.mac;
        meta.dst_mac = cfg_.peer_mac;
        meta.src_ip = c.local_ip;
        meta.dst_ip = c.remote_ip;
        meta.src_port = c.local_port;
        meta.dst_port = c.remote_port;
        meta.seq = e.seq;
        meta.flags = e.flags;
        if (e.flags & kTcpSyn) {
            meta.mss = cfg_.mss;
        } else {
            meta.flags |= kTcpAck;
        }
        meta.ack = (meta.flags & kTcpAck) ? c.rcv_nxt : 0;
        meta.window = static_cast<uint16_t>(local_rwnd(c));
        size_t hlen = header_len(meta);
        auto hdr = b.prepend(static_cast<uint32_t>(hlen));
        build_headers(hdr, meta, e.len);
    } else {
        bool has_ack = e.flags != kTcpSyn;
        refresh_headers(b.frame(), has_ack ? c.rcv_nxt : 0,
                        static_cast<uint16_t>(local_rwnd(c)));
    }

    uint32_t end = e.seq + seq_len_of(e);
    if (!is_retransmit) {
        // Conservation: never emit past min(cwnd, peer window).
        if (end - c.snd_una > usable_window(c)) {
            stats_.window_violations++;
        }
    }
    e.transmitted = true;
    e.last_tx = clock_.now();
    if (is_retransmit) {
        e.retransmitted = true;
        stats_.retransmits++;
        if (c.rtt_pending && seq_le(c.rtt_seq_end, end) && seq_lt(e.seq, c.rtt_seq_end)) {
            c.rtt_pending = false; // Karn: sample spoiled
        }
    } else {
        if (seq_gt(end, c.snd_nxt)) {
            c.snd_nxt = end;
        }
        if (!c.rtt_pending && e.len > 0) {
            c.rtt_pending = true;
            c.rtt_seq_end = end;
            c.rtt_sent_at = clock_.now();
        }
    }
    if (e.flags & kTcpSyn) {
        c.syn_tx_count++;
    }
    stats_.segs_out++;
    stats_.bytes_out += e.len;
    c.segs_since_ack = 0;
    timers_.cancel(id, TimerKind::delayed_ack);
    arm_rto(id, c);
    sink_(e.block->frame());
}

void TcpEngine::tx_emit(ConnId id) {
    if (!valid(id)) {
        return;
    }
    Conn& c = conn(id);
    while (SendWindow::Entry* e = c.window.next_unsent()) {
        uint32_t end = e->seq + seq_len_of(*e);
        bool handshake = (e->flags & kTcpSyn) != 0;
        if (!handshake && end - c.snd_una > usable_window(c)) {
            // cwnd/rwnd exhausted; probe if the peer closed its window.
            if (c.peer_rwnd == 0 && flight(c) == 0 &&
                !timers_.armed(id, TimerKind::persist)) {
                timers_.arm(id, TimerKind::persist, clock_.now() + cfg_.persist_us);
            }
            break;
        }
        emit_entry(id, c, *e, false);
    }
}

void TcpEngine::tx_emit_all() {
    for (ConnId id = 0; id < conns_.size(); id++) {
        if (conns_[id].in_use) {
            tx_emit(id);
        }
    }
}

Status TcpEngine::retransmit(ConnId id, uint32_t seq) {
    if (!valid(id)) {
        return Errc::bad_fd;
    }
    return retransmit_locked(id, conn(id), seq);
}

Status TcpEngine::retransmit_locked(ConnId id, Conn& c, uint32_t seq) {
    SendWindow::Entry* e = c.window.find(seq);
    if (!e || !e->transmitted) {
        return Errc::unknown_seq;
    }
    emit_entry(id, c, *e, true);
    return {};
}

void TcpEngine::send_pure_ack(Conn& c) {
    std::byte buf[kPlainHeaderLen];
    FrameMeta meta;
    meta.src_mac = cfg_.mac;
    meta.dst_mac = cfg_.peer_mac;
    meta.src_ip = c.local_ip;
    meta.dst_ip = c.remote_ip;
    meta.src_port = c.local_port;
    meta.dst_port = c.remote_port;
    meta.seq = c.snd_nxt;
    meta.ack = c.rcv_nxt;
    meta.flags = kTcpAck;
    meta.window = static_cast<uint16_t>(local_rwnd(c));
    build_headers(buf, meta, 0);
    stats_.segs_out++;
    stats_.pure_acks_out++;
    c.segs_since_ack = 0;
    sink_({buf, sizeof(buf)});
}

void TcpEngine::send_reset(Conn& c) {
    std::byte buf[kPlainHeaderLen];
    FrameMeta meta;
    meta.src_mac = cfg_.mac;
    meta.dst_mac = cfg_.peer_mac;
    meta.src_ip = c.local_ip;
    meta.dst_ip = c.remote_ip;
    meta.src_port = c.local_port;
    meta.dst_port = c.remote_port;
    meta.seq = c.snd_nxt;
    meta.ack = c.rcv_nxt;
    meta.flags = kTcpRst | kTcpAck;
    meta.window = 0;
    build_headers(buf, meta, 0);
    stats_.segs_out++;
    stats_.rsts_out++;
    sink_({buf, sizeof(buf)});
}

void TcpEngine::send_rst_for(const ParsedFrame& in) {
    std::byte buf[kPlainHeaderLen];
    FrameMeta meta;
    meta.src_mac = cfg_.mac;
    meta.dst_mac = in.meta.src_mac;
    meta.src_ip = in.meta.dst_ip;
    meta.dst_ip = in.meta.src_ip;
    meta.src_port = in.meta.dst_port;
    meta.dst_port = in.meta.src_port;
    if (in.meta.flags & kTcpAck) {
        meta.seq = in.meta.ack;
        meta.flags = kTcpRst;
    } else {
        meta.seq = 0;
        uint32_t seg_len = static_cast<uint32_t>(in.payload.size()) +
                           ((in.meta.flags & (kTcpSyn | kTcpFin)) ? 1 : 0);
        meta.ack = in.meta.seq + seg_len;
        meta.flags = kTcpRst | kTcpAck;
    }
    meta.window = 0;
    build_headers(buf, meta, 0);
    stats_.segs_out++;
    stats_.rsts_out++;
    sink_({buf, sizeof(buf)});
}

void TcpEngine::arm_rto(ConnId id, Conn& c) {
    if (flight(c) > 0) {
        if (!timers_.armed(id, TimerKind::rto)) {
            timers_.arm(id, TimerKind::rto, clock_.now() + c.rto_us);
        }
    } else {
        timers_.cancel(id, TimerKind::rto);
    }
}

void TcpEngine::schedule_ack(ConnId id, Conn& c, bool forced) {
    if (forced) {
        timers_.cancel(id, TimerKind::delayed_ack);
        send_pure_ack(c);
        return;
    }
    c.segs_since_ack++;
    if (c.segs_since_ack >= cfg_.delack_segs) {
        timers_.cancel(id, TimerKind::delayed_ack);
        send_pure_ack(c);
        return;
    }
    if (!timers_.armed(id, TimerKind::delayed_ack)) {
        timers_.arm(id, TimerKind::delayed_ack, clock_.now() + cfg_.delack_us);
    }
}

void TcpEngine::sample_rtt(Conn& c, double rtt) {
    if (!c.rtt_valid) {
        c.srtt_us = rtt;
        c.rttvar_us = rtt / 2.0;
        c.rtt_valid = true;
    } else {
        double err = std::abs(c.srtt_us - rtt);
        c.rttvar_us = 0.75 * c.rttvar_us + 0.25 * err;
        c.srtt_us = 0.875 * c.srtt_us + 0.125 * rtt;
    }
    double rto = c.srtt_us + std::max(100.0, 4.0 * c.rttvar_us);
    c.rto_us = std::clamp(rto, cfg_.min_rto_us, cfg_.max_rto_us);
}

void TcpEngine::on_established(ConnId id, Conn& c) {
    c.state = TcpState::established;
    established_feed_.push_back(id);
    if (c.parent_listener != kInvalidConn && valid(c.parent_listener)) {
        Conn& l = conn(c.parent_listener);
        l.accept_q.push_back(id);
        if (l.half_open > 0) {
            l.half_open--;
        }
    }
}

void TcpEngine::enter_time_wait(ConnId id, Conn& c) {
    c.state = TcpState::time_wait;
    timers_.cancel(id, TimerKind::rto);
    timers_.arm(id, TimerKind::time_wait, clock_.now() + 2.0 * cfg_.msl_us);
}

void TcpEngine::fail_conn(ConnId id, Conn& c, Errc e) {
    (void)c;
    error_feed_.push_back(ConnError{id, e});
    release_conn(id);
}

void TcpEngine::handle_listen(const ParsedFrame& in) {
    auto it = listeners_.find(in.meta.dst_port);
    if (it == listeners_.end()) {
        send_rst_for(in);
        return;
    }
    Conn& l = conn(it->second);
    if (l.accept_q.size() + l.half_open >= l.backlog) {
        return; // drop; client retries
    }

    ConnId id = alloc_conn();
    Conn& c = conn(id);
    c.state = TcpState::syn_rcvd;
    c.local_ip = cfg_.ip;
    c.remote_ip = in.meta.src_ip;
    c.local_port = in.meta.dst_port;
    c.remote_port = in.meta.src_port;
    c.parent_listener = it->second;
    by_tuple_[TupleKey{c.remote_ip, c.local_port, c.remote_port}] = id;

    c.irs = in.meta.seq;
    c.rcv_nxt = in.meta.seq + 1;
    c.pool.init(c.rcv_nxt);
    c.iss = static_cast<uint32_t>(rng_());
    c.snd_una = c.iss;
    c.snd_nxt = c.iss;
    c.enqueue_nxt = c.iss + 1;
    c.mss_eff = static_cast<uint16_t>(
        std::min<uint32_t>(cfg_.mss, in.meta.mss.value_or(cfg_.mss)));
    c.cwnd = 2 * c.mss_eff;
    c.ssthresh = kMaxAdvertised;
    c.rto_us = cfg_.initial_rto_us;
    c.peer_rwnd = in.meta.window;
    c.window = SendWindow{64};
    conn(it->second).half_open++;

    BlockPtr b = pool_.get();
    b->set_payload_len(0);
    c.window.push(std::move(b), c.iss, 0, kTcpSyn | kTcpAck);
    tx_emit(id);
}

void TcpEngine::handle_syn_sent(ConnId id, Conn& c, const ParsedFrame& in) {
    if (in.meta.flags & kTcpRst) {
        stats_.rsts_in++;
        fail_conn(id, c, Errc::conn_refused);
        return;
    }
    if ((in.meta.flags & (kTcpSyn | kTcpAck)) == (kTcpSyn | kTcpAck)) {
        if (in.meta.ack != c.iss + 1) {
            send_rst_for(in);
            return;
        }
        c.irs = in.meta.seq;
        c.rcv_nxt = in.meta.seq + 1;
        c.pool.init(c.rcv_nxt);
        c.snd_una = in.meta.ack;
        c.peer_rwnd = in.meta.window;
        c.mss_eff = static_cast<uint16_t>(
            std::min<uint32_t>(cfg_.mss, in.meta.mss.value_or(cfg_.mss)));
        c.cwnd = 2 * c.mss_eff;
        c.window.release_upto(c.snd_una);
        timers_.cancel(id, TimerKind::rto);
        on_established(id, c);
        send_pure_ack(c);
        tx_emit(id);
        return;
    }
    if (in.meta.flags & kTcpSyn) {
        // Simultaneous open.
        c.irs = in.meta.seq;
        c.rcv_nxt = in.meta.seq + 1;
        c.pool.init(c.rcv_nxt);
        c.state = TcpState::syn_rcvd;
        c.peer_rwnd = in.meta.window;
        if (SendWindow::Entry* e = c.window.find(c.iss)) {
            e->flags |= kTcpAck;
            emit_entry(id, c, *e, true);
        }
    }
}

void TcpEngine::process_ack(ConnId id, Conn& c, const ParsedFrame& in) {
    const uint32_t ack = in.meta.ack;

    if (seq_gt(ack, c.snd_nxt)) {
        stats_.acks_ignored++;
        return;
    }
    if (seq_le(ack, c.snd_una)) {
        // Duplicate or old ACK.
        c.peer_rwnd = in.meta.window;
        if (ack == c.snd_una && in.payload.empty() && flight(c) > 0 &&
            !(in.meta.flags & (kTcpSyn | kTcpFin))) {
            stats_.dup_acks_in++;
            c.dup_acks++;
            if (c.dup_acks == 3) {
                // Fast retransmit of the segment at snd_una.
                c.ssthresh = std::max(flight(c) / 2, 2u * c.mss_eff);
                if (retransmit_locked(id, c, c.snd_una)) {
                    stats_.fast_retransmits++;
                    c.in_recovery = true;
                    c.recovery_point = c.snd_nxt;
                    c.cwnd = c.ssthresh + 3 * c.mss_eff;
                }
            } else if (c.dup_acks > 3 && c.in_recovery) {
                c.cwnd += c.mss_eff; // inflation
                tx_emit(id);
            }
        } else if (seq_lt(ack, c.snd_una)) {
            stats_.acks_ignored++;
        }
        return;
    }

    // New data acknowledged.
    uint32_t acked_bytes = ack - c.snd_una;
    c.window.release_upto(ack);
    c.snd_una = ack;
    c.peer_rwnd = in.meta.window;
    c.dup_acks = 0;

    if (c.rtt_pending && seq_ge(ack, c.rtt_seq_end)) {
        sample_rtt(c, clock_.now() - c.rtt_sent_at);
        c.rtt_pending = false;
    }

    if (c.in_recovery) {
        if (seq_ge(ack, c.recovery_point)) {
            c.in_recovery = false;
            c.cwnd = c.ssthresh;
        } else {
            // NewReno partial ack: the next hole starts exactly at snd_una.
            retransmit_locked(id, c, c.snd_una);
            c.cwnd = c.cwnd > acked_bytes ? c.cwnd - acked_bytes : c.mss_eff;
            c.cwnd += c.mss_eff;
        }
    } else if (c.cwnd < c.ssthresh) {
        c.cwnd += std::min(acked_bytes, static_cast<uint32_t>(c.mss_eff));
    } else {
        c.cwnd += std::max(1u, static_cast<uint32_t>(c.mss_eff) *
                                   static_cast<uint32_t>(c.mss_eff) / c.cwnd);
    }

    timers_.cancel(id, TimerKind::rto);
    arm_rto(id, c);

    // Close-sequence progress.
    bool fin_acked = c.fin_enqueued && ack == c.enqueue_nxt;
    switch (c.state) {
    case TcpState::syn_rcvd:
        on_established(id, c);
        break;
    case TcpState::fin_wait_1:
        if (fin_acked) {
            c.state = TcpState::fin_wait_2;
        }
        break;
    case TcpState::closing:
        if (fin_acked) {
            enter_time_wait(id, c);
        }
        break;
    case TcpState::last_ack:
        if (fin_acked) {
            closed_feed_.push_back(id);
            release_conn(id);
            return;
        }
        break;
    default:
        break;
    }
    tx_emit(id);
}

void TcpEngine::maybe_finish_fin(ConnId id, Conn& c) {
    if (!c.pending_fin || c.fin_received) {
        return;
    }
    if (c.rcv_nxt != *c.pending_fin) {
        return;
    }
    c.rcv_nxt += 1;
    c.fin_received = true;
    switch (c.state) {
    case TcpState::established:
        c.state = TcpState::close_wait;
        break;
    case TcpState::fin_wait_1:
        // Our FIN unacked yet: simultaneous close.
        c.state = TcpState::closing;
        break;
    case TcpState::fin_wait_2:
        enter_time_wait(id, c);
        break;
    default:
        break;
    }
}

void TcpEngine::process_payload(ConnId id, Conn& c, const ParsedFrame& in) {
    const uint32_t seg_seq = in.meta.seq;
    const uint32_t seg_len = static_cast<uint32_t>(in.payload.size());
    const bool fin = (in.meta.flags & kTcpFin) != 0;

    if (seg_len == 0 && !fin) {
        if (seg_seq != c.rcv_nxt) {
            // Out-of-place empty segment (window probe): answer with the
            // current window.
            schedule_ack(id, c, true);
        }
        return;
    }

    uint32_t seg_end = seg_seq + seg_len + (fin ? 1 : 0);
    uint32_t wnd_end = c.rcv_nxt + local_rwnd(c);

    if (seq_le(seg_end, c.rcv_nxt)) {
        // Entirely old: re-ACK so the peer can move on.
        schedule_ack(id, c, true);
        return;
    }
    if (seq_ge(seg_seq, wnd_end)) {
        stats_.out_of_window++;
        schedule_ack(id, c, true);
        return;
    }

    if (fin) {
        c.pending_fin = seg_seq + seg_len;
    }

    bool advanced = false;
    if (seg_len > 0) {
        BlockPtr b = pool_.get();
        b->adopt_frame(
            std::span<const std::byte>(in.payload.data() - in.header_len,
                                       in.payload.size() + in.header_len),
            static_cast<uint32_t>(in.header_len));
        BlockView view{std::move(b), 0, seg_len, seg_seq};
        uint32_t before = c.rcv_nxt;
        c.pool.insert(std::move(view));
        c.rcv_nxt = c.pool.rcv_nxt();
        advanced = c.rcv_nxt != before;
        stats_.bytes_in += seg_len;
    }
    maybe_finish_fin(id, c);
    if (c.fin_received) {
        advanced = true;
    }

    // Out-of-order arrivals trigger an immediate duplicate ACK; in-order
    // data follows the delayed-ACK policy.
    schedule_ack(id, c, /*forced=*/!advanced || c.fin_received);
}

void TcpEngine::handle_segment(ConnId id, Conn& c, const ParsedFrame& in) {
    if (in.meta.flags & kTcpRst) {
        stats_.rsts_in++;
        fail_conn(id, c, Errc::conn_closed);
        return;
    }
    if (c.state == TcpState::syn_rcvd && (in.meta.flags & kTcpSyn)) {
        // SYN retransmission: re-emit SYN-ACK.
        if (SendWindow::Entry* e = c.window.find(c.iss)) {
            emit_entry(id, c, *e, true);
        }
        return;
    }
    if (in.meta.flags & kTcpAck) {
        process_ack(id, c, in);
        if (!c.in_use) {
            return; // last_ack completed and the conn was reclaimed
        }
    }
    process_payload(id, c, in);
}

void TcpEngine::rx_segment(std::span<const std::byte> frame) {
    auto parsed = parse_frame(frame);
    if (!parsed) {
        stats_.malformed++;
        return;
    }
    if (parsed->meta.dst_ip != cfg_.ip) {
        stats_.malformed++;
        return;
    }
    stats_.segs_in++;

    auto it = by_tuple_.find(
        TupleKey{parsed->meta.src_ip, parsed->meta.dst_port, parsed->meta.src_port});
    if (it == by_tuple_.end()) {
        if ((parsed->meta.flags & kTcpSyn) && !(parsed->meta.flags & kTcpAck)) {
            handle_listen(*parsed);
        } else if (!(parsed->meta.flags & kTcpRst)) {
            send_rst_for(*parsed);
        }
        return;
    }
    ConnId id = it->second;
    Conn& c = conn(id);
    switch (c.state) {
    case TcpState::syn_sent:
        handle_syn_sent(id, c, *parsed);
        break;
    case TcpState::time_wait:
        if (parsed->meta.flags & kTcpFin) {
            send_pure_ack(c); // re-ACK a retransmitted FIN
        }
        break;
    default:
        handle_segment(id, c, *parsed);
        break;
    }
}

std::vector<BlockView> TcpEngine::rx_read(ConnId id, size_t max_views) {
    if (!valid(id)) {
        return {};
    }
    return conn(id).pool.read(max_views);
}

void TcpEngine::on_rto(ConnId id, Conn& c) {
    stats_.rto_fires++;
    if (c.state == TcpState::syn_sent || c.state == TcpState::syn_rcvd) {
        if (c.syn_tx_count > cfg_.syn_retries) {
            fail_conn(id, c, Errc::no_route);
            return;
        }
    }
    SendWindow::Entry* e = c.window.front();
    if (!e) {
        return;
    }
    c.ssthresh = std::max(flight(c) / 2, 2u * c.mss_eff);
    c.cwnd = c.mss_eff;
    c.in_recovery = false;
    c.dup_acks = 0;
    c.rto_us = std::min(c.rto_us * 2.0, cfg_.max_rto_us);
    if (e->transmitted) {
        emit_entry(id, c, *e, true);
    } else {
        emit_entry(id, c, *e, false);
    }
    timers_.arm(id, TimerKind::rto, clock_.now() + c.rto_us);
}

void TcpEngine::timer_tick() {
    auto fired = timers_.advance(clock_.now());
    for (const auto& f : fired) {
        if (!conns_[f.conn].in_use) {
            continue;
        }
        Conn& c = conn(f.conn);
        switch (f.kind) {
        case TimerKind::rto:
            on_rto(f.conn, c);
            break;
        case TimerKind::delayed_ack:
            send_pure_ack(c);
            break;
        case TimerKind::time_wait:
            closed_feed_.push_back(f.conn);
            release_conn(f.conn);
            break;
        case TimerKind::persist:
            if (c.peer_rwnd == 0 && c.window.next_unsent() != nullptr) {
                // Keepalive-style probe: one byte below snd_una elicits an
                // ACK carrying the current window.
                std::byte buf[kPlainHeaderLen];
                FrameMeta meta;
                meta.src_mac = cfg_.mac;
                meta.dst_mac = cfg_.peer_mac;
                meta.src_ip = c.local_ip;
                meta.dst_ip = c.remote_ip;
                meta.src_port = c.local_port;
                meta.dst_port = c.remote_port;
                meta.seq = c.snd_una - 1;
                meta.ack = c.rcv_nxt;
                meta.flags = kTcpAck;
                meta.window = static_cast<uint16_t>(local_rwnd(c));
                build_headers(buf, meta, 0);
                stats_.segs_out++;
                stats_.persist_probes++;
                sink_({buf, sizeof(buf)});
                timers_.arm(f.conn, TimerKind::persist,
                            clock_.now() + cfg_.persist_us);
            }
            break;
        }
    }
}

TcpEngine::ConnInfo TcpEngine::info(ConnId id) const {
    ConnInfo out;
    if (!valid(id)) {
        return out;
    }
    const Conn& c = conn(id);
    out.state = c.state;
    out.iss = c.iss;
    out.irs = c.irs;
    out.snd_una = c.snd_una;
    out.snd_nxt = c.snd_nxt;
    out.rcv_nxt = c.rcv_nxt;
    out.cwnd = c.cwnd;
    out.ssthresh = c.ssthresh;
    out.peer_rwnd = c.peer_rwnd;
    out.local_rwnd = local_rwnd(c);
    out.flight = c.snd_nxt - c.snd_una;
    out.dup_acks = c.dup_acks;
    out.mss = c.mss_eff;
    out.srtt_us = c.srtt_us;
    out.rttvar_us = c.rttvar_us;
    out.rto_us = c.rto_us;
    out.send_window_used = c.window.size();
    out.send_window_slots = c.window.slot_count();
    out.local_port = c.local_port;
    out.remote_port = c.remote_port;
    out.remote_ip = c.remote_ip;
    out.parent_listener = c.parent_listener;
    return out;
}

TcpState TcpEngine::state(ConnId id) const {
    return valid(id) ? conn(id).state : TcpState::closed;
}

bool TcpEngine::valid(ConnId id) const { return id < conns_.size() && conns_[id].in_use; }

size_t TcpEngine::readable_bytes(ConnId id) const {
    return valid(id) ? static_cast<size_t>(conn(id).pool.assembled_bytes()) : 0;
}

bool TcpEngine::eof_drained(ConnId id) const {
    if (!valid(id)) {
        return false;
    }
    const Conn& c = conn(id);
    return c.fin_received && c.pool.assembled_bytes() == 0;
}

size_t TcpEngine::send_space(ConnId id) const {
    if (!valid(id)) {
        return 0;
    }
    const Conn& c = conn(id);
    return (c.window.slot_count() - c.window.size()) * c.mss_eff;
}

const RecvPool* TcpEngine::recv_pool(ConnId id) const {
    return valid(id) ? &conn(id).pool : nullptr;
}

const SendWindow* TcpEngine::send_window(ConnId id) const {
    return valid(id) ? &conn(id).window : nullptr;
}

std::vector<TcpEngine::ConnId> TcpEngine::take_established() {
    auto out = std::move(established_feed_);
    established_feed_.clear();
    return out;
}

std::vector<TcpEngine::ConnError> TcpEngine::take_errors() {
    auto out = std::move(error_feed_);
    error_feed_.clear();
    return out;
}

std::vector<TcpEngine::ConnId> TcpEngine::take_closed() {
    auto out = std::move(closed_feed_);
    closed_feed_.clear();
    return out;
}

std::vector<TcpEngine::ConnId> TcpEngine::live_conns() const {
    std::vector<ConnId> out;
    for (ConnId id = 0; id < conns_.size(); id++) {
        if (conns_[id].in_use && conns_[id].state != TcpState::listen) {
            out.push_back(id);
        }
    }
    return out;
}

uint64_t TcpEngine::payload_double_writes() const {
    uint64_t n = 0;
    for (const auto& c : conns_) {
        if (!c.in_use) {
            continue;
        }
        // Walk live blocks in the send window.
        const_cast<SendWindow&>(c.window).for_each([&](const SendWindow::Entry& e) {
            if (e.block) {
                n += e.block->double_writes();
            }
        });
    }
    return n;
}

} // namespace pno::tcp
