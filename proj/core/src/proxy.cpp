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

#include "pno/proxy/proxy.hpp"

#include <algorithm>
#include <cstring>

namespace pno::proxy {

namespace {

constexpr uint32_t kPingFd = 0xFFFFFFFF;

void put_u32(std::vector<std::byte>& v, uint32_t x) {
    size_t n = v.size();
    v.resize(n + 4);
    std::memcpy(v.data() + n, &x, 4);
}

} // namespace

void SimLocalEvents::set_ready(int fd, uint32_t events, bool on) {
    if (on) {
        ready_[fd] |= events;
    } else {
        auto it = ready_.find(fd);
        if (it != ready_.end()) {
            it->second &= ~events;
            if (it->second == 0) {
                ready_.erase(it);
            }
        }
    }
}

bool SimLocalEvents::is_ready(int fd) const { return ready_.count(fd) != 0; }

std::vector<EpollEvent> SimLocalEvents::poll_ready() {
    std::vector<EpollEvent> out;
    for (auto [fd, ev] : ready_) {
        out.push_back(EpollEvent{fd, ev});
    }
    return out;
}

ProxyConfig ProxyConfig::from(const Config& cfg) {
    ProxyConfig c;
    c.spin_budget = static_cast<uint32_t>(cfg.get_u64("proxy.spin_budget", c.spin_budget));
    c.sync_timeout_us = cfg.get_f64("proxy.sync_timeout_us", c.sync_timeout_us);
    c.sync_per_call = cfg.get_bool("proxy.sync_per_call", c.sync_per_call);
    return c;
}

HostProxy::HostProxy(sim::Driver& driver, dma::MemoryDomain& host, const rings::SharedLayout& lay,
                     ProxyConfig cfg, LocalEventSource* local)
    : driver_(driver), sprod_(host, lay), cache_(host, lay), cfg_(cfg), local_(local) {}

HostProxy::FdState* HostProxy::fd_state(int fd) {
    auto it = fds_.find(fd);
    return it == fds_.end() || !it->second.open ? nullptr : &it->second;
}

Result<int64_t> HostProxy::sync_call(rings::SFlag kind, std::span<const std::byte> payload) {
    auto h = sprod_.alloc(static_cast<uint32_t>(payload.size()), /*sync_kind=*/true);
    if (!h) {
        return h.error();
    }
    if (!payload.empty()) {
        sprod_.write_body(*h, 0, payload);
    }
    if (Status st = sprod_.commit(*h, kind); !st) {
        return st.error();
    }
    stats_.sync_calls++;

    // Busy-wait on the return slot: spin a budget, then yield to the
    // driver so the bridge can make progress.
    auto& handle = *h;
    uint32_t spins = 0;
    SimTime deadline = driver_.clock().now() + cfg_.sync_timeout_us;
    while (!sprod_.done(handle)) {
        if (spins++ < cfg_.spin_budget) {
            stats_.sync_spins++;
            continue;
        }
        if (!driver_.pump_until([&] { return sprod_.done(handle); },
                                deadline - driver_.clock().now(), task_)) {
            return Errc::io_error; // timed out: simulation fault
        }
    }
    return sprod_.retval(handle);
}

Status HostProxy::forced_round_trip() {
    std::vector<std::byte> body;
    put_u32(body, kPingFd);
    put_u32(body, 0);
    put_u32(body, 0);
    auto rv = sync_call(rings::SFlag::w_setopt, body);
    if (!rv) {
        return rv.error();
    }
    stats_.forced_round_trips++;
    return {};
}

int HostProxy::p_socket() {
    auto rv = sync_call(rings::SFlag::w_socket, {});
    if (!rv) {
        return kEnospc;
    }
    int fd = static_cast<int>(*rv);
    if (fd >= kOffloadFdBase) {
        fds_[fd].open = true;
    }
    return fd;
}

int HostProxy::p_listen(int fd, uint16_t port, int backlog) {
    FdState* st = fd_state(fd);
    if (!st || !route_offloaded(fd)) {
        return kEbadf;
    }
    std::vector<std::byte> body;
    put_u32(body, static_cast<uint32_t>(fd));
    put_u32(body, port);
    put_u32(body, static_cast<uint32_t>(backlog));
    auto rv = sync_call(rings::SFlag::w_listen, body);
    if (!rv) {
        return kEinval;
    }
    if (*rv == 0) {
        st->listener = true;
    }
    return static_cast<int>(*rv);
}

int HostProxy::p_connect(int fd, uint32_t ip, uint16_t port) {
    FdState* st = fd_state(fd);
    if (!st || !route_offloaded(fd)) {
        return kEbadf;
    }
    std::vector<std::byte> body;
    put_u32(body, static_cast<uint32_t>(fd));
    put_u32(body, ip);
    put_u32(body, port);
    auto rv = sync_call(rings::SFlag::w_connect, body);
    if (!rv) {
        return kEtimedout;
    }
    if (*rv == 0) {
        st->connected = true;
    }
    return static_cast<int>(*rv);
}

int HostProxy::p_accept(int fd) {
    FdState* st = fd_state(fd);
    if (!st || !st->listener) {
        return kEbadf;
    }
    poll_cache();
    if (st->pending_accepts.empty()) {
        if (st->nonblocking) {
            return kEagain;
        }
        bool ok = driver_.pump_until(
            [&] {
                poll_cache();
                return !st->pending_accepts.empty();
            },
            cfg_.sync_timeout_us, task_);
        if (!ok) {
            return kEagain;
        }
    }
    int conn_fd = st->pending_accepts.front();
    st->pending_accepts.pop_front();
    fds_[conn_fd].open = true;
    fds_[conn_fd].connected = true;
    return conn_fd;
}

long HostProxy::p_write(int fd, std::span<const std::byte> bytes) {
    FdState* st = fd_state(fd);
    if (!st || !route_offloaded(fd) || st->listener) {
        return kEbadf;
    }
    if (st->error) {
        return kEinval;
    }
    // write block body: fd + size + payload (the write_size + 16 layout).
    uint32_t size = static_cast<uint32_t>(bytes.size());
    auto h = sprod_.alloc(8 + size, /*sync_kind=*/false);
    if (!h) {
        stats_.write_ring_full++;
        return kEagain; // RingFull: short write / EAGAIN semantics
    }
    sprod_.write_body_u32(*h, 0, static_cast<uint32_t>(fd));
    sprod_.write_body_u32(*h, 4, size);
    if (size > 0) {
        sprod_.write_body(*h, 8, bytes);
    }
    sprod_.commit(*h, rings::SFlag::w_write);
    stats_.writes++;
    if (cfg_.sync_per_call) {
        forced_round_trip();
    }
    // Immediate return: no DMA wait on the submit path.
    return static_cast<long>(size);
}

long HostProxy::p_read(int fd, std::span<std::byte> out) {
    FdState* st = fd_state(fd);
    if (!st || !route_offloaded(fd)) {
        return kEbadf;
    }
    if (cfg_.sync_per_call) {
        forced_round_trip();
        stats_.read_round_trips++;
    }
    poll_cache();
    auto got = cache_.consume(static_cast<uint32_t>(fd), out);
    if (!got) {
        if (st->eof) {
            return 0; // orderly end of stream
        }
        if (st->nonblocking) {
            return kEagain;
        }
        bool ok = driver_.pump_until(
            [&] {
                poll_cache();
                return cache_.available(static_cast<uint32_t>(fd)) > 0 || st->eof;
            },
            cfg_.sync_timeout_us, task_);
        if (!ok) {
            return kEagain;
        }
        if (cache_.available(static_cast<uint32_t>(fd)) == 0 && st->eof) {
            return 0;
        }
        got = cache_.consume(static_cast<uint32_t>(fd), out);
        if (!got) {
            return kEagain;
        }
    }
    stats_.reads_served++;
    cache_.publish_acks();
    return static_cast<long>(*got);
}

int HostProxy::p_close(int fd) {
    FdState* st = fd_state(fd);
    if (!st) {
        return kEbadf;
    }
    std::vector<std::byte> body;
    put_u32(body, static_cast<uint32_t>(fd));
    auto h = sprod_.alloc(static_cast<uint32_t>(body.size()), /*sync_kind=*/false);
    if (!h) {
        return kEagain;
    }
    sprod_.write_body(*h, 0, body);
    sprod_.commit(*h, rings::SFlag::w_close);
    st->open = false;
    for (auto& [epfd, eset] : epolls_) {
        eset.offloaded.erase(fd);
    }
    return 0;
}

int HostProxy::p_setsockopt(int fd, int level, int opt, int64_t val) {
    if (!fd_state(fd)) {
        return kEbadf;
    }
    std::vector<std::byte> body;
    put_u32(body, static_cast<uint32_t>(fd));
    put_u32(body, static_cast<uint32_t>(level));
    put_u32(body, static_cast<uint32_t>(opt));
    (void)val;
    auto rv = sync_call(rings::SFlag::w_setopt, body);
    return rv ? static_cast<int>(*rv) : kEinval;
}

int HostProxy::p_set_nonblocking(int fd, bool on) {
    FdState* st = fd_state(fd);
    if (!st) {
        return kEbadf;
    }
    st->nonblocking = on;
    return 0;
}

long HostProxy::p_sendfile(int out_fd, std::istream& src, size_t count) {
    FdState* st = fd_state(out_fd);
    if (!st || !route_offloaded(out_fd)) {
        return kEbadf;
    }
    // Stream the file through ring-sized write chunks.
    constexpr size_t kChunk = 32 * 1024;
    std::vector<std::byte> buf(kChunk);
    size_t total = 0;
    while (total < count) {
        size_t want = std::min(kChunk, count - total);
        src.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(want));
        size_t got = static_cast<size_t>(src.gcount());
        if (got == 0) {
            break; // end of file
        }
        size_t off = 0;
        while (off < got) {
            long n = p_write(out_fd, std::span<const std::byte>(buf.data() + off, got - off));
            if (n == kEagain) {
                if (st->nonblocking) {
                    return static_cast<long>(total + off);
                }
                driver_.pump_until([] { return false; }, 50.0, task_); // let rings drain
                continue;
            }
            if (n < 0) {
                return total + off > 0 ? static_cast<long>(total + off) : n;
            }
            off += static_cast<size_t>(n);
        }
        total += got;
        if (got < want) {
            break;
        }
    }
    return static_cast<long>(total);
}

int HostProxy::p_epoll_create() {
    int epfd = next_epfd_++;
    epolls_[epfd].open = true;
    return epfd;
}

int HostProxy::p_epoll_ctl(int epfd, int op, int fd, uint32_t events) {
    auto it = epolls_.find(epfd);
    if (it == epolls_.end() || !it->second.open) {
        return kEbadf;
    }
    EpollState& es = it->second;
    auto& side = route_offloaded(fd) ? es.offloaded : es.local;
    switch (op) {
    case kEpollCtlAdd:
    case kEpollCtlMod:
        if (route_offloaded(fd) && !fd_state(fd)) {
            return kEbadf;
        }
        side[fd] = events;
        break;
    case kEpollCtlDel:
        side.erase(fd);
        break;
    default:
        return kEinval;
    }
    if (route_offloaded(fd)) {
        // Mirror interest on the NIC side (gates edge-event generation).
        std::vector<std::byte> body;
        put_u32(body, static_cast<uint32_t>(epfd));
        put_u32(body, static_cast<uint32_t>(op));
        put_u32(body, static_cast<uint32_t>(fd));
        put_u32(body, events);
        auto rv = sync_call(rings::SFlag::w_epoll_ctl, body);
        if (!rv) {
            return kEinval;
        }
        return static_cast<int>(*rv);
    }
    return 0;
}

void HostProxy::absorb_events() {
    for (const auto& ev : cache_.drain_events()) {
        int fd = static_cast<int>(ev.fd);
        if (ev.events & rings::kEvNewConn) {
            auto info = cache_.info(ev.fd);
            if (info) {
                int listener = static_cast<int>(info->aux);
                if (FdState* ls = fd_state(listener)) {
                    ls->pending_accepts.push_back(fd);
                }
            }
            continue;
        }
        if (ev.events & rings::kEvEof) {
            fds_[fd].eof = true;
        }
        if (ev.events & rings::kEvError) {
            fds_[fd].error = true;
        }
        if (ev.events & rings::kEvClosed) {
            // Entry reclaimable once the application closed it too.
        }
        stats_.events_delivered++;
    }
}

void HostProxy::poll_cache() {
    cache_.refresh();
    absorb_events();
}

int HostProxy::p_epoll_wait(int epfd, std::span<EpollEvent> out, double timeout_us) {
    auto it = epolls_.find(epfd);
    if (it == epolls_.end() || !it->second.open) {
        return kEbadf;
    }
    if (out.empty()) {
        return kEinval;
    }
    if (cfg_.sync_per_call) {
        forced_round_trip();
    }

    auto collect = [&]() -> int {
        EpollState& es = it->second;
        poll_cache();
        int n = 0;
        // Offloaded side: level-triggered from the host-local cache.
        for (auto& [fd, interest] : es.offloaded) {
            if (n >= static_cast<int>(out.size())) {
                break;
            }
            FdState* st = fd_state(fd);
            if (!st) {
                continue;
            }
            uint32_t ready = 0;
            if (interest & kEpollIn) {
                bool readable = cache_.available(static_cast<uint32_t>(fd)) > 0 ||
                                (st->listener && !st->pending_accepts.empty()) ||
                                (st->eof && !st->listener);
                if (readable) {
                    ready |= kEpollIn;
                }
            }
            if ((interest & kEpollOut) && st->connected && !st->eof) {
                ready |= kEpollOut;
            }
            if (st->error) {
                ready |= kEpollErr;
            }
            if (ready) {
                out[n++] = EpollEvent{fd, ready};
            }
        }
        // Local side: non-blocking poll of the host facility, filtered by
        // the local interest list.
        if (local_) {
            for (const auto& lev : local_->poll_ready()) {
                if (n >= static_cast<int>(out.size())) {
                    break;
                }
                auto li = es.local.find(lev.fd);
                if (li == es.local.end()) {
                    continue;
                }
                uint32_t masked = lev.events & (li->second | kEpollErr | kEpollHup);
                if (masked) {
                    out[n++] = EpollEvent{lev.fd, masked};
                }
            }
        }
        return n;
    };

    int n = collect();
    if (n > 0 || timeout_us <= 0) {
        return n;
    }
    driver_.pump_until([&] { return collect() > 0; }, timeout_us, task_);
    return collect();
}

bool HostProxy::eof(int fd) const {
    auto it = fds_.find(fd);
    return it != fds_.end() && it->second.eof;
}

size_t HostProxy::available(int fd) {
    poll_cache();
    return cache_.available(static_cast<uint32_t>(fd));
}

} // namespace pno::proxy
