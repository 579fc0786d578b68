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
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "pno/sim/clock.hpp"

namespace pno::tcp {

enum class TimerKind : uint8_t { rto = 0, delayed_ack = 1, time_wait = 2, persist = 3 };
inline constexpr size_t kTimerKinds = 4;

// Hashed timer wheel keyed by (conn, kind).  Re-arming or cancelling bumps
// a generation counter, so a stale bucket entry never fires.
class TimerWheel {
public:
    struct Fired {
        uint32_t conn;
        TimerKind kind;
        SimTime deadline;
    };

    explicit TimerWheel(double granularity_us = 100.0, size_t buckets = 512);

    void arm(uint32_t conn, TimerKind kind, SimTime deadline);
    void cancel(uint32_t conn, TimerKind kind);
    bool armed(uint32_t conn, TimerKind kind) const;
    SimTime deadline(uint32_t conn, TimerKind kind) const;

    // Collect timers due at `now` (deadline <= now), in deadline order.
    std::vector<Fired> advance(SimTime now);

    SimTime next_deadline() const; // +inf when nothing armed

private:
    struct Slot {
        uint32_t conn;
        TimerKind kind;
        SimTime deadline;
        uint64_t generation;
    };
    struct Key {
        uint32_t conn;
        TimerKind kind;
        bool operator<(const Key& o) const {
            return conn != o.conn ? conn < o.conn : kind < o.kind;
        }
    };
    struct Active {
        SimTime deadline;
        uint64_t generation;
    };

    size_t bucket_of(SimTime deadline) const;

    double granularity_us_;
    std::vector<std::vector<Slot>> buckets_;
    std::map<Key, Active> active_;
    std::multiset<SimTime> deadlines_;
    SimTime last_advance_ = 0.0;
    uint64_t next_generation_ = 1;
};

} // namespace pno::tcp
