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
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "pno/config.hpp"
#include "pno/errors.hpp"
#include "pno/sim/clock.hpp"
#include "pno/tcp/headers.hpp"
#include "pno/tcp/packet_block.hpp"
#include "pno/tcp/recv_pool.hpp"
#include "pno/tcp/send_window.hpp"
#include "pno/tcp/timer_wheel.hpp"

namespace pno::tcp {

enum class TcpState : uint8_t {
    closed,
    listen,
    syn_sent,
    syn_rcvd,
    established,
    fin_wait_1,
    fin_wait_2,
    close_wait,
    closing,
    last_ack,
    time_wait,
};

const char* state_name(TcpState s);

struct StackConfig {
    uint32_t ip = 0x0A000001; // 10.0.0.1
    MacAddr mac{{0x02, 0, 0, 0, 0, 0x01}};
    MacAddr peer_mac{{0x02, 0, 0, 0, 0, 0x02}};
    uint16_t mtu = 1500;
    uint16_t mss = 1460;
    uint32_t recv_buf = 65535; // no window scaling: <= 65535
    double min_rto_us = 5'000;
    double max_rto_us = 2'000'000;
    double initial_rto_us = 20'000;
    double delack_us = 5'000;  // delayed-ACK cap
    uint32_t delack_segs = 2;  // or every 2nd segment, whichever first
    double msl_us = 100'000;   // TIME_WAIT = 2 MSL
    double persist_us = 10'000;
    uint32_t syn_retries = 6;
    uint64_t seed = 7;
    bool track_payload_writes = false;

    static StackConfig from(const Config& cfg);
};

struct EngineStats {
    uint64_t segs_out = 0;
    uint64_t segs_in = 0;
    uint64_t bytes_out = 0;
    uint64_t bytes_in = 0;
    uint64_t pure_acks_out = 0;
    uint64_t retransmits = 0;
    uint64_t fast_retransmits = 0;
    uint64_t rto_fires = 0;
    uint64_t dup_acks_in = 0;
    uint64_t acks_ignored = 0;
    uint64_t malformed = 0;
    uint64_t out_of_window = 0;
    uint64_t rsts_out = 0;
    uint64_t rsts_in = 0;
    uint64_t persist_probes = 0;
    uint64_t window_violations = 0; // conservation check, must stay 0
};

// One user-space TCP instance: owns its connections exclusively
// (per-core localization; instances never share state).
class TcpEngine {
public:
    using ConnId = uint32_t;
    static constexpr ConnId kInvalidConn = 0xFFFFFFFF;
    using FrameSink = std::function<void(std::span<const std::byte>)>;

    TcpEngine(SimClock& clock, StackConfig cfg, FrameSink sink);

    // --- connection lifecycle ---
    Result<ConnId> open_passive(uint16_t port, uint32_t backlog = 128);
    Result<ConnId> open_active(uint32_t dst_ip, uint16_t dst_port, uint16_t src_port = 0);
    Result<ConnId> accept(ConnId listener); // would_block when backlog empty
    Status close(ConnId conn);              // FIN sequence
    void abort(ConnId conn);                // RST + drop

    // --- datapath ---
    Result<size_t> tx_enqueue(ConnId conn, std::span<const std::byte> payload);
    void tx_emit(ConnId conn);
    void tx_emit_all();
    Status retransmit(ConnId conn, uint32_t seq);
    void rx_segment(std::span<const std::byte> frame);
    std::vector<BlockView> rx_read(ConnId conn, size_t max_views);
    void timer_tick();

    // --- introspection ---
    struct ConnInfo {
        TcpState state = TcpState::closed;
        uint32_t iss = 0, irs = 0;
        uint32_t snd_una = 0, snd_nxt = 0, rcv_nxt = 0;
        uint32_t cwnd = 0, ssthresh = 0;
        uint32_t peer_rwnd = 0;
        uint32_t local_rwnd = 0;
        uint32_t flight = 0;
        uint32_t dup_acks = 0;
        uint16_t mss = 0;
        double srtt_us = 0, rttvar_us = 0, rto_us = 0;
        size_t send_window_used = 0;
        size_t send_window_slots = 0;
        uint32_t local_port = 0, remote_port = 0;
        uint32_t remote_ip = 0;
        ConnId parent_listener = kInvalidConn;
    };
    ConnInfo info(ConnId conn) const;
    TcpState state(ConnId conn) const;
    bool valid(ConnId conn) const;
    size_t readable_bytes(ConnId conn) const;
    bool eof_drained(ConnId conn) const; // FIN received and queue drained
    size_t send_space(ConnId conn) const;

    const RecvPool* recv_pool(ConnId conn) const;   // tests
    const SendWindow* send_window(ConnId conn) const;

    // Connection-event feeds the bridge drains each cycle.
    std::vector<ConnId> take_established();
    struct ConnError {
        ConnId conn;
        Errc err;
    };
    std::vector<ConnError> take_errors();
    std::vector<ConnId> take_closed();

    std::vector<ConnId> live_conns() const;

    SimTime next_timer_deadline() const { return timers_.next_deadline(); }

    EngineStats& stats() { return stats_; }
    const StackConfig& config() const { return cfg_; }
    uint64_t payload_double_writes() const;

private:
    struct Conn {
        TcpState state = TcpState::closed;
        bool in_use = false;
        uint32_t local_ip = 0, remote_ip = 0;
        uint16_t local_port = 0, remote_port = 0;

        uint32_t iss = 0, irs = 0;
        uint32_t snd_una = 0, snd_nxt = 0, enqueue_nxt = 0;
        uint32_t rcv_nxt = 0;
        uint32_t peer_rwnd = 0;
        uint16_t mss_eff = 0;

        uint32_t cwnd = 0, ssthresh = 0;
        uint32_t dup_acks = 0;
        bool in_recovery = false;
        uint32_t recovery_point = 0;

        double srtt_us = 0, rttvar_us = 0, rto_us = 0;
        bool rtt_valid = false;
        bool rtt_pending = false;
        uint32_t rtt_seq_end = 0;
        SimTime rtt_sent_at = 0;
        uint32_t syn_tx_count = 0;

        SendWindow window{1};
        RecvPool pool;
        std::optional<uint32_t> pending_fin; // FIN seq awaiting in-order arrival
        bool fin_received = false;
        bool fin_enqueued = false;

        uint32_t segs_since_ack = 0;

        ConnId parent_listener = kInvalidConn;
        std::deque<ConnId> accept_q;
        uint32_t backlog = 0;
        uint32_t half_open = 0;
    };

    struct TupleKey {
        uint32_t rip;
        uint16_t lport, rport;
        bool operator<(const TupleKey& o) const {
            if (rip != o.rip) return rip < o.rip;
            if (lport != o.lport) return lport < o.lport;
            return rport < o.rport;
        }
    };

    ConnId alloc_conn();
    void release_conn(ConnId id);
    Conn& conn(ConnId id) { return conns_[id]; }
    const Conn& conn(ConnId id) const { return conns_[id]; }

    uint32_t flight(const Conn& c) const { return c.snd_nxt - c.snd_una; }
    uint32_t usable_window(const Conn& c) const;
    uint32_t local_rwnd(const Conn& c) const;
    uint32_t seq_len_of(const SendWindow::Entry& e) const;

    void emit_entry(ConnId id, Conn& c, SendWindow::Entry& e, bool is_retransmit);
    void send_pure_ack(Conn& c);
    void send_rst_for(const ParsedFrame& in);
    void send_reset(Conn& c);
    void schedule_ack(ConnId id, Conn& c, bool forced);
    void arm_rto(ConnId id, Conn& c);
    void handle_listen(const ParsedFrame& in);
    void handle_syn_sent(ConnId id, Conn& c, const ParsedFrame& in);
    void handle_segment(ConnId id, Conn& c, const ParsedFrame& in);
    void process_ack(ConnId id, Conn& c, const ParsedFrame& in);
    void process_payload(ConnId id, Conn& c, const ParsedFrame& in);
    void maybe_finish_fin(ConnId id, Conn& c);
    void on_established(ConnId id, Conn& c);
    void enter_time_wait(ConnId id, Conn& c);
    void fail_conn(ConnId id, Conn& c, Errc e);
    void sample_rtt(Conn& c, double rtt);
    void on_rto(ConnId id, Conn& c);
    Status retransmit_locked(ConnId id, Conn& c, uint32_t seq);

    SimClock& clock_;
    StackConfig cfg_;
    FrameSink sink_;
    BlockPool pool_;
    TimerWheel timers_;
    std::vector<Conn> conns_;
    std::vector<ConnId> free_list_;
    std::map<TupleKey, ConnId> by_tuple_;
    std::unordered_map<uint16_t, ConnId> listeners_;
    std::vector<ConnId> established_feed_;
    std::vector<ConnError> error_feed_;
    std::vector<ConnId> closed_feed_;
    std::mt19937_64 rng_;
    uint16_t next_ephemeral_ = 49152;
    EngineStats stats_;
};

} // namespace pno::tcp
