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

#include "pno/tcp/timer_wheel.hpp"

#include <algorithm>
#include <cmath>

namespace pno::tcp {

TimerWheel::TimerWheel(double granularity_us, size_t buckets)
    : granularity_us_(granularity_us), buckets_(buckets) {}

size_t TimerWheel::bucket_of(SimTime deadline) const {
    auto tick = static_cast<uint64_t>(deadline / granularity_us_);
    return static_cast<size_t>(tick % buckets_.size());
}

void TimerWheel::arm(uint32_t conn, TimerKind kind, SimTime deadline) {
    cancel(conn, kind);
    uint64_t gen = next_generation_++;
    active_[Key{conn, kind}] = Active{deadline, gen};
    deadlines_.insert(deadline);
    buckets_[bucket_of(deadline)].push_back(Slot{conn, kind, deadline, gen});
}

void TimerWheel::cancel(uint32_t conn, TimerKind kind) {
    auto it = active_.find(Key{conn, kind});
    if (it == active_.end()) {
        return;
    }
    auto d = deadlines_.find(it->second.deadline);
    if (d != deadlines_.end()) {
        deadlines_.erase(d);
    }
    active_.erase(it); // bucket slot goes stale; generation check skips it
}

bool TimerWheel::armed(uint32_t conn, TimerKind kind) const {
    return active_.count(Key{conn, kind}) != 0;
}

SimTime TimerWheel::deadline(uint32_t conn, TimerKind kind) const {
    auto it = active_.find(Key{conn, kind});
    return it == active_.end() ? std::numeric_limits<SimTime>::infinity() : it->second.deadline;
}

std::vector<TimerWheel::Fired> TimerWheel::advance(SimTime now) {
    std::vector<Fired> fired;
    if (deadlines_.empty() || *deadlines_.begin() > now) {
        last_advance_ = std::max(last_advance_, now);
        return fired;
    }
    // Walk every bucket the window [last_advance_, now] touches; cheap
    // because buckets are sparse at our connection counts.
    size_t span = static_cast<size_t>((now - last_advance_) / granularity_us_) + 2;
    span = std::min(span, buckets_.size());
    size_t start = bucket_of(last_advance_);
    for (size_t i = 0; i < span; i++) {
        auto& bucket = buckets_[(start + i) % buckets_.size()];
        for (size_t j = 0; j < bucket.size();) {
            Slot& s = bucket[j];
            auto it = active_.find(Key{s.conn, s.kind});
            bool live = it != active_.end() && it->second.generation == s.generation;
            if (!live) {
                bucket[j] = bucket.back();
                bucket.pop_back();
                continue;
            }
            if (s.deadline <= now) {
                fired.push_back(Fired{s.conn, s.kind, s.deadline});
                auto d = deadlines_.find(s.deadline);
                if (d != deadlines_.end()) {
                    deadlines_.erase(d);
                }
                active_.erase(it);
                bucket[j] = bucket.back();
                bucket.pop_back();
                continue;
            }
            j++;
        }
    }
    last_advance_ = std::max(last_advance_, now);
    std::sort(fired.begin(), fired.end(), [](const Fired& a, const Fired& b) {
        if (a.deadline != b.deadline) return a.deadline < b.deadline;
        if (a.conn != b.conn) return a.conn < b.conn;
        return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    });
    return fired;
}

SimTime TimerWheel::next_deadline() const {
    return deadlines_.empty() ? std::numeric_limits<SimTime>::infinity() : *deadlines_.begin();
}

} // namespace pno::tcp
