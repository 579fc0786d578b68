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
#include <istream>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

#include "pno/config.hpp"
#include "pno/dma/engine.hpp"
#include "pno/rings/gring.hpp"
#include "pno/rings/sring.hpp"
#include "pno/sim/driver.hpp"

namespace pno::proxy {

// Routing: descriptors >= 1000 belong to the offloaded stack, everything
// below stays with local host services.
inline constexpr int kOffloadFdBase = 1000;
inline bool route_offloaded(int fd) { return fd >= kOffloadFdBase; }

// POSIX-flavored statuses (negative errno).
inline constexpr int kEagain = -11;
inline constexpr int kEbadf = -9;
inline constexpr int kEinval = -22;
inline constexpr int kEnospc = -28;
inline constexpr int kEtimedout = -110;

struct EpollEvent {
    int fd = 0;
    uint32_t events = 0; // kEpollIn / kEpollOut / ...
};

inline constexpr uint32_t kEpollIn = 0x1;
inline constexpr uint32_t kEpollOut = 0x4;
inline constexpr uint32_t kEpollHup = 0x10;
inline constexpr uint32_t kEpollErr = 0x8;

inline constexpr int kEpollCtlAdd = 1;
inline constexpr int kEpollCtlDel = 2;
inline constexpr int kEpollCtlMod = 3;

// Host-OS readiness facility stand-in for fds below the threshold;
// deterministic so epoll-merge tests are hermetic.
class LocalEventSource {
public:
    virtual ~LocalEventSource() = default;
    // Level-triggered snapshot of ready (fd, events) pairs.
    virtual std::vector<EpollEvent> poll_ready() = 0;
};

class SimLocalEvents : public LocalEventSource {
public:
    void set_ready(int fd, uint32_t events, bool on);
    bool is_ready(int fd) const;
    std::vector<EpollEvent> poll_ready() override;

private:
    std::map<int, uint32_t> ready_;
};

struct ProxyConfig {
    uint32_t spin_budget = 64;       // polls before yielding to the driver
    double sync_timeout_us = 2e6;    // give up on a synchronous call
    bool sync_per_call = false;      // baseline mode: every call round-trips
    static ProxyConfig from(const Config& cfg);
};

// Host-side TCP-Proxy: fills the S ring, serves reads and events from the
// local G cache, and busy-waits (bounded, then yields) on synchronous
// return slots.
class HostProxy {
public:
    HostProxy(sim::Driver& driver, dma::MemoryDomain& host, const rings::SharedLayout& lay,
              ProxyConfig cfg, LocalEventSource* local = nullptr);

    // --- POSIX-shaped surface (p_* per the offloaded API convention) ---
    int p_socket();
    int p_listen(int fd, uint16_t port, int backlog);
    int p_connect(int fd, uint32_t ip, uint16_t port);
    int p_accept(int fd);
    long p_write(int fd, std::span<const std::byte> bytes);
    long p_read(int fd, std::span<std::byte> out);
    int p_close(int fd);
    int p_setsockopt(int fd, int level, int opt, int64_t val);
    int p_set_nonblocking(int fd, bool on);
    long p_sendfile(int out_fd, std::istream& src, size_t count);

    int p_epoll_create();
    int p_epoll_ctl(int epfd, int op, int fd, uint32_t events);
    int p_epoll_wait(int epfd, std::span<EpollEvent> out, double timeout_us);

    // Absorb freshly synced data/events into the cache; called from the
    // host application task (and internally before reads).
    void poll_cache();

    bool eof(int fd) const;
    size_t available(int fd);

    // The task index of the calling host thread; lets synchronous calls
    // park themselves while pumping the driver.
    void set_task(size_t task_index) { task_ = task_index; }

    struct Stats {
        uint64_t sync_calls = 0;
        uint64_t sync_spins = 0;
        uint64_t writes = 0;
        uint64_t write_ring_full = 0;
        uint64_t reads_served = 0;
        uint64_t read_round_trips = 0; // stays 0 outside sync_per_call mode
        uint64_t events_delivered = 0;
        uint64_t forced_round_trips = 0;
    };
    const Stats& stats() const { return stats_; }
    rings::HostGCache& cache() { return cache_; }

private:
    struct FdState {
        bool open = false;
        bool nonblocking = false;
        bool eof = false;
        bool error = false;
        bool listener = false;
        bool connected = false;
        std::deque<int> pending_accepts;
    };
    struct EpollState {
        bool open = false;
        std::map<int, uint32_t> offloaded; // fd -> interest mask
        std::map<int, uint32_t> local;
    };

    Result<int64_t> sync_call(rings::SFlag kind, std::span<const std::byte> payload);
    Status forced_round_trip(); // sync ping (baseline mode)
    void absorb_events();
    FdState* fd_state(int fd);

    sim::Driver& driver_;
    rings::SRingProducer sprod_;
    rings::HostGCache cache_;
    ProxyConfig cfg_;
    LocalEventSource* local_;
    std::unordered_map<int, FdState> fds_;
    std::unordered_map<int, EpollState> epolls_;
    int next_epfd_ = 1'000'000;
    size_t task_ = sim::Driver::npos;
    Stats stats_;
};

} // namespace pno::proxy
