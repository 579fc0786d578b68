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

#include <memory>

#include "pno/bridge/bridge.hpp"
#include "pno/net/pcap.hpp"
#include "pno/proxy/proxy.hpp"

namespace pno::bench {

// Fully wired desk simulation: host domain with TCP-Proxy, NIC domain with
// TCP-Bridge + per-core stacks, the DMA engine between them, and a plain
// peer stack ("the client machine") behind an impaired duplex link.
//
//   host app --p_*--> proxy --rings/DMA--> bridge --stack--> link <--> client
class World {
public:
    explicit World(const Config& cfg);

    SimClock clock;
    Config cfg;
    rings::SharedLayout lay;
    dma::MemoryDomain host_mem;
    dma::MemoryDomain nic_mem;
    dma::SimDmaEngine dma;
    net::SimLink link_n2c; // NIC -> client
    net::SimLink link_c2n; // client -> NIC
    bridge::NicRuntime nic;
    std::unique_ptr<tcp::TcpEngine> client;
    proxy::SimLocalEvents local_events;
    sim::Driver driver;
    proxy::HostProxy proxy;
    net::PcapTrace trace;
    bool tracing = false;

    // Advance the whole world.
    void run_for(double us) { driver.run_for(us); }
    bool pump_until(const std::function<bool()>& pred, double timeout_us) {
        return driver.pump_until(pred, timeout_us);
    }

    static constexpr uint32_t kNicIp = 0x0A000001;    // 10.0.0.1
    static constexpr uint32_t kClientIp = 0x0A000002; // 10.0.0.2
};

} // namespace pno::bench
