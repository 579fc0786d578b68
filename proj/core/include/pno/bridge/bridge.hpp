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
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pno/dma/engine.hpp"
#include "pno/net/link.hpp"
#include "pno/rings/gring.hpp"
#include "pno/rings/sring.hpp"
#include "pno/tcp/engine.hpp"

namespace pno::bridge {

struct BridgeConfig {
    uint32_t cores = 1;
    size_t poll_budget = 128;       // S blocks dispatched per cycle
    double batch_window_us = 0.0;   // min spacing between DMA sync cycles
    uint32_t sync_window_bytes = 256 * 1024;
    size_t rx_drain_budget = 64;    // stream views bridged per conn per cycle
    bool ordering_guard = true;     // negative-control switch

    static BridgeConfig from(const Config& cfg);
};

struct BridgeStats {
    uint64_t cycles = 0;
    uint64_t blocks_parsed = 0;
    uint64_t bytes_bridged = 0;     // host write payload -> stack
    uint64_t bytes_delivered = 0;   // stack -> data ring
    uint64_t ordering_stalls = 0;   // publishes deferred on pending flushes
    uint64_t ordering_violations = 0;
    uint64_t unknown_blocks = 0;
    uint64_t unknown_fd = 0;
    uint64_t events_emitted = 0;
    uint64_t dma_batches = 0;
    uint64_t dma_descriptors = 0;
    uint64_t write_stalls = 0;      // W_WRITE deferred on a full send window
    uint64_t data_ring_stalls = 0;
    uint64_t dispatched[9] = {};    // per request flag

    std::string to_text() const;
};

// NIC-side runtime: per-core TCP engines behind one TCP-Bridge that owns
// every DMA the system issues.  Register bridge_step / stack_step (per
// core) and dma_poll_step with the driver.
class NicRuntime {
public:
    NicRuntime(SimClock& clock, dma::SimDmaEngine& dma, const rings::SharedLayout& lay,
               tcp::StackConfig stack_cfg, BridgeConfig cfg, net::SimLink& tx_link,
               net::SimLink& rx_link);

    bool bridge_step(uint32_t core, SimTime now);
    bool stack_step(uint32_t core, SimTime now);
    bool dma_poll_step(SimTime now);

    tcp::TcpEngine& engine(uint32_t core) { return *engines_[core]; }
    uint32_t cores() const { return cfg_.cores; }
    BridgeStats& stats() { return stats_; }
    rings::NicGRings& grings() { return grings_; }
    BridgeConfig& config() { return cfg_; }

    // Observe every frame the NIC stacks emit (pcap recording).
    void set_frame_tap(std::function<void(std::span<const std::byte>, SimTime)> tap) {
        frame_tap_ = std::move(tap);
    }

    // Direct shuttle used by soak tests: produce+flush+publish app bytes
    // for an fd through the exact datapath the dispatcher uses.  Returns
    // the produced record span.
    Result<rings::DataRef> shuttle_data(uint32_t fd, std::span<const std::byte> payload);
    void open_plain_stream(uint32_t fd);

    // Drive one full flush turnaround without the driver (tests).
    void flush_now();

    bool idle() const;

private:
    struct FdEntry {
        uint32_t core = 0;
        tcp::TcpEngine::ConnId conn = tcp::TcpEngine::kInvalidConn;
        bool is_listener = false;
        std::vector<tcp::TcpEngine::ConnId> listeners; // one per core
        bool open = false;
        uint64_t unread_hint = 0; // readable-edge tracking
        bool eof_sent = false;
    };

    struct PendingSync {
        uint64_t voff;
        rings::SFlag kind;
        uint32_t fd_hint;
        uint32_t core = 0;
        tcp::TcpEngine::ConnId conn = tcp::TcpEngine::kInvalidConn;
    };

    struct PendingPublish {
        uint32_t fd;
        std::optional<rings::DataRef> data_ref;
        std::optional<rings::DataRef> event_ref;
        uint32_t event_delta;
        uint32_t state_bits; // OR'd into stream info
    };

    void start_host_sync(SimTime now);
    void scan_and_dispatch(SimTime now);
    void dispatch(const rings::SBlockView& blk, SimTime now);
    void drain_stack_to_grings(uint32_t core, SimTime now);
    void emit_conn_events(uint32_t core, SimTime now);
    void submit_flushes(SimTime now);
    void drain_publish_queue();
    void submit_info_sync(SimTime now);
    void complete_sync_block(const PendingSync& ps, int64_t retval);
    void on_dma_complete(uint64_t token);
    uint32_t ingress_core(std::span<const std::byte> frame) const;
    FdEntry* lookup_fd(uint32_t fd);
    uint32_t fd_of(uint32_t core, tcp::TcpEngine::ConnId conn) const;
    void queue_patch(const rings::SRingConsumer::Patch& p);

    SimClock& clock_;
    dma::SimDmaEngine& dma_;
    rings::SharedLayout lay_;
    BridgeConfig cfg_;
    rings::SRingConsumer scons_;
    rings::NicGRings grings_;
    std::vector<std::unique_ptr<tcp::TcpEngine>> engines_;
    net::SimLink& tx_link_;
    net::SimLink& rx_link_;

    // host->nic sync state machine
    enum class SyncState { idle, inflight };
    SyncState sync_state_ = SyncState::idle;
    uint64_t sync_token_lo_ = 0, sync_token_hi_ = 0;
    size_t sync_pending_ = 0;
    uint64_t s_synced_upto_ = 0;
    uint64_t h2n_rotor_ = 0;
    uint64_t last_pub_scan_ = 0;
    SimTime last_sync_at_ = -1e18;

    // nic->host patch batch (W_DONE flags, scan cursor)
    std::vector<dma::DmaDescriptor> patch_batch_;

    // data/event flush accumulation
    uint64_t data_flushed_upto_ = 0;
    uint64_t event_flushed_upto_ = 0;
    std::deque<PendingPublish> publish_queue_;
    std::unordered_map<uint64_t, uint8_t> flush_tokens_; // token -> ring id

    // info slab DMA serialization
    bool info_sync_inflight_ = false;
    uint64_t info_sync_token_lo_ = 0, info_sync_token_hi_ = 0;
    std::vector<std::pair<uint64_t, uint32_t>> dirty_backlog_;

    std::unordered_map<uint32_t, FdEntry> fd_table_;
    std::map<std::pair<uint32_t, uint32_t>, uint32_t> conn_to_fd_; // (core,conn)->fd
    std::vector<PendingSync> conn_waits_; // W_CONNECT completions
    uint32_t next_fd_ = 1000;
    uint16_t next_port_ = 52000;

    // stalled partial W_WRITE (block still unconsumed in the S ring)
    bool have_stalled_write_ = false;
    uint32_t stalled_write_off_ = 0;

    std::unordered_map<uint32_t, std::vector<uint32_t>> epoll_interest_; // epfd -> fds
    uint32_t next_epfd_ = 1;
    std::function<void(std::span<const std::byte>, SimTime)> frame_tap_;

    BridgeStats stats_;
};

} // namespace pno::bridge
