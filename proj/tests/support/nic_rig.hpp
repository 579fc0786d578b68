#pragma once

// Host domain + DMA engine + NicRuntime with a raw S-ring producer and a
// host G cache: the bridge test rig.  The pump loop replicates the driver
// task order (bridge, stack, dma poller).

#include "pno/bridge/bridge.hpp"
#include "pno/rings/gring.hpp"
#include "pno/rings/sring.hpp"

namespace rig {

struct NicRig {
    pno::SimClock clock;
    pno::rings::SharedLayout lay;
    pno::dma::MemoryDomain host;
    pno::dma::MemoryDomain nic_mem;
    pno::dma::SimDmaEngine dma;
    pno::net::SimLink wire_out; // nic -> peer
    pno::net::SimLink wire_in;  // peer -> nic
    pno::bridge::NicRuntime nic;
    pno::rings::SRingProducer sprod;
    pno::rings::HostGCache cache;
    double tick_us = 0.5;

    explicit NicRig(pno::Config cfg = {}, pno::rings::SharedLayout layout =
                                              pno::rings::SharedLayout::make(1 << 20, 1 << 20,
                                                                             1 << 18, 256))
        : lay(layout), host(pno::dma::Domain::host, lay.total),
          nic_mem(pno::dma::Domain::nic, lay.total),
          dma(clock, host, nic_mem, pno::dma::DmaConfig::from(cfg)),
          wire_out(clock, pno::net::LinkConfig::from(cfg)),
          wire_in(clock,
                  [&] {
                      auto lc = pno::net::LinkConfig::from(cfg);
                      lc.seed += 1;
                      return lc;
                  }()),
          nic(clock, dma, lay, pno::tcp::StackConfig::from(cfg),
              pno::bridge::BridgeConfig::from(cfg), wire_out, wire_in),
          sprod(host, lay), cache(host, lay) {}

    void pump_once() {
        clock.advance(tick_us);
        dma.settle();
        for (uint32_t core = 0; core < nic.cores(); core++) {
            nic.bridge_step(core, clock.now());
            nic.stack_step(core, clock.now());
        }
        nic.dma_poll_step(clock.now());
    }

    void pump(double us) {
        double end = clock.now() + us;
        while (clock.now() < end) {
            pump_once();
        }
    }

    template <typename Pred>
    bool pump_until(Pred&& pred, double timeout_us) {
        double end = clock.now() + timeout_us;
        while (clock.now() < end) {
            if (pred()) {
                return true;
            }
            pump_once();
        }
        return pred();
    }
};

} // namespace rig
