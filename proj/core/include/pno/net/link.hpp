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

#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <vector>

#include "pno/config.hpp"
#include "pno/sim/clock.hpp"

namespace pno::net {

struct LinkConfig {
    double loss_prob = 0.0;
    double reorder_prob = 0.0;
    uint32_t reorder_window = 1; // frames a reordered frame is held back
    double dup_prob = 0.0;
    double corrupt_prob = 0.0;
    double one_way_delay_us = 50.0;
    uint64_t bandwidth_bps = 0; // 0 = infinite
    uint64_t seed = 1;

    static LinkConfig from(const Config& cfg);
};

struct Frame {
    std::vector<std::byte> bytes;
    SimTime ingress_time_us = 0.0;
};

// Deterministic one-direction impaired link.  Impairments draw from one
// seeded stream, so (seed, send trace) fully determines the delivery trace.
class SimLink {
public:
    SimLink(SimClock& clock, LinkConfig cfg);

    void send(std::span<const std::byte> frame, SimTime now);
    std::vector<Frame> poll(SimTime now);

    // Earliest pending delivery time; +inf when idle.
    SimTime next_delivery() const;
    bool idle() const { return queue_.empty() && held_.empty(); }

    struct Stats {
        uint64_t sent = 0;
        uint64_t delivered = 0;
        uint64_t dropped = 0;
        uint64_t duplicated = 0;
        uint64_t corrupted = 0;
        uint64_t reordered = 0;
        uint64_t in_flight = 0; // queued + held
    };
    Stats stats() const {
        Stats s = stats_;
        s.in_flight = queue_.size() + held_.size();
        return s;
    }
    const LinkConfig& config() const { return cfg_; }

private:
    struct Scheduled {
        Frame frame;
        SimTime deliver_at;
        uint64_t order; // stable tiebreak
    };
    struct Held {
        Frame frame;
        uint32_t release_after; // pass this many later frames first
        SimTime held_at;
    };

    void enqueue(Frame f, SimTime deliver_at);
    void corrupt(std::vector<std::byte>& bytes);
    SimTime delivery_time(size_t frame_len, SimTime now);
    void release_held(SimTime now, bool force);

    SimClock& clock_;
    LinkConfig cfg_;
    std::mt19937_64 rng_;
    std::deque<Scheduled> queue_; // kept sorted by (deliver_at, order)
    std::vector<Held> held_;
    SimTime busy_until_ = 0.0;
    uint64_t next_order_ = 0;
    Stats stats_;
};

} // namespace pno::net
