#pragma once

// Two TcpEngine instances joined by impaired SimLinks, pumped by a small
// event loop: the standard rig for stack-to-stack tests.

#include <functional>

#include "pno/net/link.hpp"
#include "pno/tcp/engine.hpp"

namespace rig {

struct StackPair {
    pno::SimClock clock;
    pno::net::SimLink ab; // a -> b
    pno::net::SimLink ba; // b -> a
    std::unique_ptr<pno::tcp::TcpEngine> a;
    std::unique_ptr<pno::tcp::TcpEngine> b;

    explicit StackPair(pno::net::LinkConfig link_cfg = {}, pno::tcp::StackConfig base = {},
                       uint64_t seed = 1)
        : ab(clock, [&] {
              auto c = link_cfg;
              c.seed = seed;
              return c;
          }()),
          ba(clock, [&] {
              auto c = link_cfg;
              c.seed = seed + 0x9E37;
              return c;
          }()) {
        auto ca = base;
        ca.ip = 0x0A000001;
        ca.mac = {{2, 0, 0, 0, 0, 1}};
        ca.peer_mac = {{2, 0, 0, 0, 0, 2}};
        ca.seed = seed * 31 + 1;
        auto cb = base;
        cb.ip = 0x0A000002;
        cb.mac = {{2, 0, 0, 0, 0, 2}};
        cb.peer_mac = {{2, 0, 0, 0, 0, 1}};
        cb.seed = seed * 31 + 2;
        a = std::make_unique<pno::tcp::TcpEngine>(
            clock, ca, [this](std::span<const std::byte> f) { ab.send(f, clock.now()); });
        b = std::make_unique<pno::tcp::TcpEngine>(
            clock, cb, [this](std::span<const std::byte> f) { ba.send(f, clock.now()); });
    }

    // Deliver due frames, run timers, emit.  One cycle.
    bool pump_once() {
        bool work = false;
        for (auto& f : ab.poll(clock.now())) {
            b->rx_segment(f.bytes);
            work = true;
        }
        for (auto& f : ba.poll(clock.now())) {
            a->rx_segment(f.bytes);
            work = true;
        }
        a->timer_tick();
        b->timer_tick();
        a->tx_emit_all();
        b->tx_emit_all();
        return work;
    }

    // Event-driven run: jump the clock to the next interesting moment.
    void run_until(const std::function<bool()>& pred, double timeout_us) {
        double deadline = clock.now() + timeout_us;
        while (clock.now() < deadline) {
            if (pred()) {
                return;
            }
            pump_once();
            if (pred()) {
                return;
            }
            double next = std::min(std::min(ab.next_delivery(), ba.next_delivery()),
                                   std::min(a->next_timer_deadline(), b->next_timer_deadline()));
            if (!std::isfinite(next)) {
                // Nothing scheduled: nudge forward to let apps act.
                clock.advance(1.0);
                continue;
            }
            clock.advance_to(std::max(next, clock.now() + 0.01));
        }
    }

    void run_for(double us) {
        double end = clock.now() + us;
        run_until([&] { return false; }, us);
        clock.advance_to(end);
    }
};

} // namespace rig
