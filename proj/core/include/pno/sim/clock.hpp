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

#include <cassert>
#include <cstdint>

namespace pno {

// Simulated time in microseconds.  Every timestamp in the system (DMA
// completions, TCP timers, link deliveries, benchmark latencies) derives
// from one SimClock instance, which never goes backwards.
using SimTime = double; // microseconds

class SimClock {
public:
    SimTime now() const noexcept { return now_us_; }

    SimTime advance(SimTime dt_us) noexcept {
        assert(dt_us >= 0.0);
        now_us_ += dt_us;
        return now_us_;
    }

    // Jump forward to an absolute time; no-op if already past it.
    void advance_to(SimTime t_us) noexcept {
        if (t_us > now_us_) {
            now_us_ = t_us;
        }
    }

private:
    SimTime now_us_ = 0.0;
};

} // namespace pno
