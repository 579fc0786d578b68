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

#include "pno/bench/workload.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pno/bench/world.hpp"

namespace pno::bench {

namespace {

std::vector<uint32_t> parse_u32_list(const std::string& s, std::vector<uint32_t> fallback) {
    if (s.empty()) {
        return fallback;
    }
    std::vector<uint32_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(static_cast<uint32_t>(std::stoul(item)));
        }
    }
    return out.empty() ? fallback : out;
}

} // namespace

Result<WorkloadConfig> WorkloadConfig::from(const Config& cfg) {
    WorkloadConfig w;
    w.raw = cfg;
    w.workload = cfg.get_str("run.workload", w.workload);
    if (w.workload != "echo" && w.workload != "stream" && w.workload != "dma_micro") {
        return Errc::parse_error;
    }
    w.connections = static_cast<uint32_t>(cfg.get_u64("run.connections", w.connections));
    w.msg_size = static_cast<uint32_t>(cfg.get_u64("run.msg_size", w.msg_size));
    w.cores = static_cast<uint32_t>(cfg.get_u64("run.cores", w.cores));
    w.message_budget = cfg.get_u64("run.message_budget", w.message_budget);
    w.duration_us = cfg.get_f64("run.duration_us", w.duration_us);
    w.qd_list = parse_u32_list(cfg.get_str("run.qd", ""), w.qd_list);
    w.size_list = parse_u32_list(cfg.get_str("run.sizes", ""), w.size_list);
    w.dma_iters = cfg.get_u64("run.dma_iters", w.dma_iters);
    w.report_path = cfg.get_str("run.report", w.report_path);
    w.report_format = cfg.get_str("run.format", w.report_format);
    if (w.connections < 1 || w.msg_size < 1 || w.cores < 1) {
        return Errc::parse_error;
    }
    return w;
}

World::World(const Config& c)
    : cfg(c), lay(rings::SharedLayout::from(c)), host_mem(dma::Domain::host, lay.total),
      nic_mem(dma::Domain::nic, lay.total), dma(clock, host_mem, nic_mem, dma::DmaConfig::from(c)),
      link_n2c(clock,
               [&] {
                   auto lc = net::LinkConfig::from(c);
                   return lc;
               }()),
      link_c2n(clock,
               [&] {
                   auto lc = net::LinkConfig::from(c);
                   lc.seed += 1;
                   return lc;
               }()),
      nic(clock, dma, lay,
          [&] {
              auto sc = tcp::StackConfig::from(c);
              sc.ip = kNicIp;
              sc.mac = tcp::MacAddr{{0x02, 0, 0, 0, 0, 0x01}};
              sc.peer_mac = tcp::MacAddr{{0x02, 0, 0, 0, 0, 0x02}};
              return sc;
          }(),
          [&] {
              auto bc = bridge::BridgeConfig::from(c);
              bc.cores = static_cast<uint32_t>(c.get_u64("run.cores", bc.cores));
              return bc;
          }(),
          link_n2c, link_c2n),
      driver(clock, c.get_f64("sim.tick_us", 0.5)),
      proxy(driver, host_mem, lay, proxy::ProxyConfig::from(c), &local_events) {
    tracing = cfg.get_bool("sim.trace", false);

    auto client_cfg = tcp::StackConfig::from(c);
    client_cfg.ip = kClientIp;
    client_cfg.mac = tcp::MacAddr{{0x02, 0, 0, 0, 0, 0x02}};
    client_cfg.peer_mac = tcp::MacAddr{{0x02, 0, 0, 0, 0, 0x01}};
    client_cfg.seed = c.get_u64("tcp.seed", 7) + 1;
    client = std::make_unique<tcp::TcpEngine>(clock, client_cfg,
                                              [this](std::span<const std::byte> f) {
                                                  if (tracing) {
                                                      trace.record(f, clock.now());
                                                  }
                                                  link_c2n.send(f, clock.now());
                                              });

    driver.set_advance_hook([this] { dma.settle(); });

    // Task order is the determinism contract: bridge+stack pairs per core,
    // then the dedicated DMA poller, then the client pump.
    for (uint32_t core = 0; core < nic.cores(); core++) {
        driver.add_task("bridge" + std::to_string(core),
                        [this, core](SimTime now) { return nic.bridge_step(core, now); });
        driver.add_task("stack" + std::to_string(core),
                        [this, core](SimTime now) { return nic.stack_step(core, now); });
    }
    driver.add_task("dma_poll", [this](SimTime now) { return nic.dma_poll_step(now); });
    driver.add_task("client", [this](SimTime now) {
        bool work = false;
        for (auto& f : link_n2c.poll(now)) {
            client->rx_segment(f.bytes);
            work = true;
        }
        client->timer_tick();
        client->tx_emit_all();
        return work;
    });

    if (tracing) {
        nic.set_frame_tap(
            [this](std::span<const std::byte> f, SimTime at) { trace.record(f, at); });
    }
}

namespace {

// Drives N client connections in ping-pong against the p_* echo server.
class EchoClient {
public:
    EchoClient(World& w, const WorkloadConfig& cfg, uint16_t port)
        : w_(w), cfg_(cfg), port_(port), conn_state_(cfg.connections) {}

    bool step(SimTime now) {
        bool work = false;
        for (uint32_t i = 0; i < cfg_.connections; i++) {
            work |= step_conn(i, now);
        }
        return work;
    }

    void start() {
        for (uint32_t i = 0; i < cfg_.connections; i++) {
            auto conn = w_.client->open_active(World::kNicIp, port_);
            conn_state_[i].conn = *conn;
            // Stagger first sends so batching phases decorrelate.
            conn_state_[i].next_send_at = 0.7 * static_cast<double>(i % 16);
        }
    }

    uint64_t total_messages() const { return total_msgs_; }
    const std::vector<double>& latencies() const { return latencies_; }
    bool budget_done() const {
        return cfg_.message_budget > 0 && total_msgs_ >= cfg_.message_budget;
    }
    uint64_t echo_mismatches() const { return echo_mismatches_; }

private:
    struct PerConn {
        tcp::TcpEngine::ConnId conn = tcp::TcpEngine::kInvalidConn;
        bool inflight = false;
        uint32_t received = 0;
        SimTime sent_at = 0;
        SimTime next_send_at = 0;
        uint32_t msg_no = 0;
    };

    bool step_conn(uint32_t i, SimTime now) {
        PerConn& pc = conn_state_[i];
        auto st = w_.client->state(pc.conn);
        if (st != tcp::TcpState::established) {
            return false;
        }
        bool work = false;
        if (!pc.inflight) {
            if (budget_done() || now < pc.next_send_at) {
                return false;
            }
            std::vector<std::byte> msg(cfg_.msg_size);
            for (uint32_t b = 0; b < cfg_.msg_size; b++) {
                msg[b] = static_cast<std::byte>((i + pc.msg_no + b) & 0xFF);
            }
            auto acc = w_.client->tx_enqueue(pc.conn, msg);
            if (acc && *acc == msg.size()) {
                w_.client->tx_emit(pc.conn);
                pc.inflight = true;
                pc.received = 0;
                pc.sent_at = now;
                work = true;
            }
            return work;
        }
        // Await the echoed bytes.
        auto views = w_.client->rx_read(pc.conn, 64);
        for (const auto& v : views) {
            verify_echo(i, pc, v);
            pc.received += v.len;
            work = true;
        }
        if (pc.received >= cfg_.msg_size) {
            latencies_.push_back(now - pc.sent_at);
            total_msgs_++;
            pc.inflight = false;
            pc.msg_no++;
            pc.next_send_at = now; // immediate next round
        }
        return work;
    }

    void verify_echo(uint32_t i, PerConn& pc, const tcp::BlockView& v) {
        auto bytes = v.bytes();
        for (uint32_t k = 0; k < bytes.size(); k++) {
            uint32_t pos = pc.received + k;
            auto expect = static_cast<std::byte>((i + pc.msg_no + pos) & 0xFF);
            if (bytes[k] != expect) {
                echo_mismatches_++;
            }
        }
    }

    World& w_;
    const WorkloadConfig& cfg_;
    uint16_t port_;
    std::vector<PerConn> conn_state_;
    std::vector<double> latencies_;
    uint64_t total_msgs_ = 0;
    uint64_t echo_mismatches_ = 0;
};

// p_*-based echo application: epoll loop, read everything, write it back.
// Bytes that hit a full S ring stay in a per-fd backlog and retry first.
class EchoServer {
public:
    EchoServer(World& w, uint16_t port, uint32_t msg_size)
        : w_(w), buf_(std::max(msg_size, 1u) * 4) {
        listen_fd_ = w_.proxy.p_socket();
        w_.proxy.p_set_nonblocking(listen_fd_, true);
        w_.proxy.p_listen(listen_fd_, port, 256);
        epfd_ = w_.proxy.p_epoll_create();
        w_.proxy.p_epoll_ctl(epfd_, proxy::kEpollCtlAdd, listen_fd_, proxy::kEpollIn);
    }

    bool step(SimTime) {
        bool work = flush_backlogs();
        proxy::EpollEvent evs[64];
        int n = w_.proxy.p_epoll_wait(epfd_, evs, 0.0);
        work |= n > 0;
        for (int i = 0; i < n; i++) {
            if (evs[i].fd == listen_fd_) {
                for (;;) {
                    int cfd = w_.proxy.p_accept(listen_fd_);
                    if (cfd < 0) {
                        break;
                    }
                    w_.proxy.p_set_nonblocking(cfd, true);
                    w_.proxy.p_epoll_ctl(epfd_, proxy::kEpollCtlAdd, cfd, proxy::kEpollIn);
                }
                continue;
            }
            if (evs[i].events & proxy::kEpollIn) {
                if (!backlog_[evs[i].fd].empty()) {
                    continue; // preserve byte order: drain the backlog first
                }
                for (;;) {
                    long got = w_.proxy.p_read(evs[i].fd, buf_);
                    if (got <= 0) {
                        break;
                    }
                    echo_back(evs[i].fd, std::span<const std::byte>(buf_.data(),
                                                                    static_cast<size_t>(got)));
                }
            }
        }
        return work;
    }

    int epfd() const { return epfd_; }
    int listener() const { return listen_fd_; }

private:
    bool flush_backlogs() {
        bool work = false;
        for (auto& [fd, pending] : backlog_) {
            while (!pending.empty()) {
                long put = w_.proxy.p_write(fd, pending);
                if (put < 0) {
                    break;
                }
                pending.erase(pending.begin(), pending.begin() + put);
                work = true;
            }
        }
        return work;
    }

    void echo_back(int fd, std::span<const std::byte> bytes) {
        size_t off = 0;
        while (off < bytes.size()) {
            long put = w_.proxy.p_write(fd, bytes.subspan(off));
            if (put < 0) {
                auto& pending = backlog_[fd];
                pending.insert(pending.end(), bytes.begin() + static_cast<ptrdiff_t>(off),
                               bytes.end());
                return;
            }
            off += static_cast<size_t>(put);
        }
    }

    World& w_;
    int listen_fd_ = -1;
    int epfd_ = -1;
    std::vector<std::byte> buf_;
    std::map<int, std::vector<std::byte>> backlog_;
};

MetricsReport finalize_echo(World& w, const WorkloadConfig& cfg, const EchoClient& client,
                            double measured_us, uint64_t msgs_baseline) {
    MetricsReport r;
    r.workload = cfg.workload;
    r.duration_us = measured_us;
    r.messages = client.total_messages() - msgs_baseline;
    r.bytes = r.messages * cfg.msg_size;
    if (measured_us > 0) {
        r.msgs_per_sec = static_cast<double>(r.messages) * 1e6 / measured_us;
        r.bytes_per_sec = static_cast<double>(r.bytes) * 1e6 / measured_us;
    }
    r.latency = LatencySummary::of(client.latencies());
    r.config_echo = cfg.raw;

    auto& bs = w.nic.stats();
    r.counters["bridge.cycles"] = std::to_string(bs.cycles);
    r.counters["bridge.blocks_parsed"] = std::to_string(bs.blocks_parsed);
    r.counters["bridge.bytes_bridged"] = std::to_string(bs.bytes_bridged);
    r.counters["bridge.bytes_delivered"] = std::to_string(bs.bytes_delivered);
    r.counters["bridge.ordering_stalls"] = std::to_string(bs.ordering_stalls);
    r.counters["bridge.ordering_violations"] = std::to_string(bs.ordering_violations);
    r.counters["bridge.events_emitted"] = std::to_string(bs.events_emitted);
    r.counters["bridge.dma_batches"] = std::to_string(bs.dma_batches);
    r.counters["bridge.dma_descriptors"] = std::to_string(bs.dma_descriptors);
    r.counters["dma.transactions"] = std::to_string(w.dma.stats().transactions);
    r.counters["dma.descriptors"] = std::to_string(w.dma.stats().descriptors);
    r.counters["dma.bytes"] = std::to_string(w.dma.stats().bytes);
    r.counters["proxy.sync_calls"] = std::to_string(w.proxy.stats().sync_calls);
    r.counters["proxy.writes"] = std::to_string(w.proxy.stats().writes);
    r.counters["proxy.reads_served"] = std::to_string(w.proxy.stats().reads_served);
    r.counters["proxy.read_round_trips"] = std::to_string(w.proxy.stats().read_round_trips);
    r.counters["proxy.forced_round_trips"] = std::to_string(w.proxy.stats().forced_round_trips);
    r.counters["client.echo_mismatches"] = std::to_string(client.echo_mismatches());
    for (uint32_t core = 0; core < w.nic.cores(); core++) {
        auto& es = w.nic.engine(core).stats();
        std::string p = "tcp.core" + std::to_string(core) + ".";
        r.counters[p + "segs_out"] = std::to_string(es.segs_out);
        r.counters[p + "segs_in"] = std::to_string(es.segs_in);
        r.counters[p + "retransmits"] = std::to_string(es.retransmits);
        r.counters[p + "window_violations"] = std::to_string(es.window_violations);
    }
    return r;
}

} // namespace

Result<MetricsReport> run_echo(const WorkloadConfig& cfg) {
    World w(cfg.raw);
    constexpr uint16_t kPort = 7;

    EchoServer server(w, kPort, cfg.msg_size);
    EchoClient client(w, cfg, kPort);

    size_t server_task =
        w.driver.add_task("echo_server", [&](SimTime now) { return server.step(now); });
    w.proxy.set_task(server_task);
    w.driver.add_task("echo_client", [&](SimTime now) { return client.step(now); });

    client.start();

    // Connection ramp: every connection must reach ESTABLISHED.
    bool up = w.pump_until(
        [&] {
            size_t est = 0;
            for (auto id : w.client->live_conns()) {
                if (w.client->state(id) == tcp::TcpState::established) {
                    est++;
                }
            }
            return est >= cfg.connections;
        },
        1e6);
    if (!up) {
        return Errc::io_error;
    }

    SimTime t0 = w.clock.now();
    uint64_t msgs_baseline = client.total_messages();
    if (cfg.message_budget > 0) {
        if (!w.pump_until([&] { return client.budget_done(); }, cfg.duration_us * 100 + 1e6)) {
            return Errc::io_error;
        }
    } else {
        w.run_for(cfg.duration_us);
    }
    double measured = w.clock.now() - t0;

    return finalize_echo(w, cfg, client, measured, msgs_baseline);
}

Result<MetricsReport> run_stream(const WorkloadConfig& cfg) {
    World w(cfg.raw);
    constexpr uint16_t kPort = 9;

    // Server: read-and-discard sink over p_*.
    struct Sink {
        World& w;
        int listen_fd, epfd;
        std::vector<std::byte> buf;
        uint64_t received = 0;
        explicit Sink(World& w_) : w(w_), buf(64 * 1024) {
            listen_fd = w.proxy.p_socket();
            w.proxy.p_set_nonblocking(listen_fd, true);
            w.proxy.p_listen(listen_fd, kPort, 256);
            epfd = w.proxy.p_epoll_create();
            w.proxy.p_epoll_ctl(epfd, proxy::kEpollCtlAdd, listen_fd, proxy::kEpollIn);
        }
        bool step() {
            proxy::EpollEvent evs[64];
            int n = w.proxy.p_epoll_wait(epfd, evs, 0.0);
            for (int i = 0; i < n; i++) {
                if (evs[i].fd == listen_fd) {
                    for (;;) {
                        int cfd = w.proxy.p_accept(listen_fd);
                        if (cfd < 0) break;
                        w.proxy.p_set_nonblocking(cfd, true);
                        w.proxy.p_epoll_ctl(epfd, proxy::kEpollCtlAdd, cfd, proxy::kEpollIn);
                    }
                    continue;
                }
                for (;;) {
                    long got = w.proxy.p_read(evs[i].fd, buf);
                    if (got <= 0) break;
                    received += static_cast<uint64_t>(got);
                }
            }
            return n > 0;
        }
    } sink(w);

    size_t sink_task = w.driver.add_task("stream_sink", [&](SimTime) { return sink.step(); });
    w.proxy.set_task(sink_task);

    uint64_t per_conn = cfg.message_budget > 0
                            ? cfg.message_budget
                            : static_cast<uint64_t>(cfg.msg_size) * 1024;
    struct Src {
        tcp::TcpEngine::ConnId conn;
        uint64_t sent = 0;
    };
    std::vector<Src> srcs;
    for (uint32_t i = 0; i < cfg.connections; i++) {
        auto conn = w.client->open_active(World::kNicIp, kPort);
        srcs.push_back(Src{*conn, 0});
    }
    std::vector<std::byte> chunk(cfg.msg_size);
    for (uint32_t b = 0; b < cfg.msg_size; b++) {
        chunk[b] = static_cast<std::byte>(b * 131 + 17);
    }
    w.driver.add_task("stream_sources", [&](SimTime) {
        bool work = false;
        for (auto& s : srcs) {
            if (s.sent >= per_conn ||
                w.client->state(s.conn) != tcp::TcpState::established) {
                continue;
            }
            size_t want = std::min<uint64_t>(chunk.size(), per_conn - s.sent);
            auto acc = w.client->tx_enqueue(
                s.conn, std::span<const std::byte>(chunk.data(), want));
            if (acc) {
                s.sent += *acc;
                w.client->tx_emit(s.conn);
                work = true;
            }
        }
        return work;
    });

    SimTime t0 = w.clock.now();
    uint64_t goal = per_conn * cfg.connections;
    bool done = w.pump_until([&] { return sink.received >= goal; }, 60e6);
    double measured = w.clock.now() - t0;

    MetricsReport r;
    r.workload = cfg.workload;
    r.duration_us = measured;
    r.messages = sink.received / std::max(1u, cfg.msg_size);
    r.bytes = sink.received;
    if (measured > 0) {
        r.msgs_per_sec = static_cast<double>(r.messages) * 1e6 / measured;
        r.bytes_per_sec = static_cast<double>(r.bytes) * 1e6 / measured;
    }
    r.config_echo = cfg.raw;
    r.counters["stream.goal_bytes"] = std::to_string(goal);
    r.counters["stream.received_bytes"] = std::to_string(sink.received);
    r.counters["stream.completed"] = done ? "1" : "0";
    return r;
}

Result<MetricsReport> run_dma_micro(const WorkloadConfig& cfg) {
    MetricsReport r;
    r.workload = "dma_micro";
    r.config_echo = cfg.raw;

    auto dma_cfg = dma::DmaConfig::from(cfg.raw);
    uint64_t iters = std::max<uint64_t>(1, cfg.dma_iters);

    for (uint32_t size : cfg.size_list) {
        for (uint32_t qd : cfg.qd_list) {
            SimClock clock;
            uint64_t region = static_cast<uint64_t>(qd) * size;
            dma::MemoryDomain host(dma::Domain::host, region);
            dma::MemoryDomain nic(dma::Domain::nic, region);
            dma::DmaConfig dc = dma_cfg;
            dc.max_inflight = std::max<uint32_t>(dc.max_inflight, qd);
            dma::SimDmaEngine eng(clock, host, nic, dc);

            double lat_acc = 0;
            uint64_t reqs = 0;
            SimTime t0 = clock.now();
            for (uint64_t it = 0; it < iters; it++) {
                clock.advance(dc.submit_cost_us);
                std::vector<dma::DmaDescriptor> descs;
                for (uint32_t i = 0; i < qd; i++) {
                    descs.push_back(dma::DmaDescriptor{dma::Domain::host,
                                                       static_cast<uint64_t>(i) * size,
                                                       static_cast<uint64_t>(i) * size, size});
                }
                SimTime submit_at = clock.now();
                auto tok = eng.submit_batch(descs);
                if (!tok) {
                    return tok.error();
                }
                SimTime done_at = eng.next_complete_at();
                eng.clock_advance(done_at - clock.now());
                auto comps = eng.poll_completions(qd);
                if (comps.size() != qd) {
                    return Errc::io_error;
                }
                lat_acc += (comps.back().complete_at - submit_at) / qd;
                reqs += qd;
            }
            double elapsed_us = clock.now() - t0;
            MetricsReport::DmaCell cell;
            cell.qd = qd;
            cell.size = size;
            cell.amortized_us = lat_acc / static_cast<double>(iters);
            cell.rps = static_cast<double>(reqs) * 1e6 / elapsed_us;
            r.dma_cells.push_back(cell);
        }
    }
    r.duration_us = 0;
    return r;
}

Result<MetricsReport> run_workload(const WorkloadConfig& cfg) {
    if (cfg.workload == "echo") {
        return run_echo(cfg);
    }
    if (cfg.workload == "stream") {
        return run_stream(cfg);
    }
    if (cfg.workload == "dma_micro") {
        return run_dma_micro(cfg);
    }
    return Errc::parse_error;
}

Status dump_pcap(const Config& cfg_in, const std::string& path) {
    Config cfg = cfg_in;
    cfg.set("sim.trace", "1");
    World w(cfg);
    constexpr uint16_t kPort = 7;
    EchoServer server(w, kPort, 64);
    WorkloadConfig wc;
    wc.connections = 2;
    wc.msg_size = 64;
    wc.message_budget = 8;
    wc.raw = cfg;
    EchoClient client(w, wc, kPort);
    size_t server_task =
        w.driver.add_task("echo_server", [&](SimTime now) { return server.step(now); });
    w.proxy.set_task(server_task);
    w.driver.add_task("echo_client", [&](SimTime now) { return client.step(now); });
    client.start();
    w.pump_until([&] { return client.budget_done(); }, 1e6);
    return w.trace.dump(path);
}

} // namespace bench
