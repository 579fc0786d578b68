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

#include <functional>
#include <string>
#include <vector>

#include "pno/sim/clock.hpp"

namespace pno::sim {

// Deterministic round-robin driver over cooperative step tasks: each tick
// advances the clock by tick_us, runs a post-advance hook (DMA settle),
// then steps every task once in registration order.
//
// Synchronous host calls re-enter the driver through pump_until(); the
// caller's own task is skipped while it waits, which is how a busy-wait
// behaves without stalling the rest of the world.
class Driver {
public:
    using StepFn = std::function<bool(SimTime)>; // true = made progress

    explicit Driver(SimClock& clock, double tick_us = 0.5)
        : clock_(clock), tick_us_(tick_us) {}

    size_t add_task(std::string name, StepFn fn) {
        tasks_.push_back(Task{std::move(name), std::move(fn), false});
        return tasks_.size() - 1;
    }

    void set_advance_hook(std::function<void()> hook) { advance_hook_ = std::move(hook); }

    double tick_us() const { return tick_us_; }
    SimClock& clock() { return clock_; }

    // One tick: advance, settle, step everyone runnable.
    bool step_once() {
        clock_.advance(tick_us_);
        if (advance_hook_) {
            advance_hook_();
        }
        bool progress = false;
        for (auto& t : tasks_) {
            if (t.waiting) {
                continue;
            }
            progress |= t.fn(clock_.now());
        }
        return progress;
    }

    void run_for(double us) {
        SimTime end = clock_.now() + us;
        while (clock_.now() < end) {
            step_once();
        }
    }

    // Drive the world until pred() holds or timeout elapses; `self` (the
    // calling task, if any) is parked meanwhile.  Returns pred() result.
    bool pump_until(const std::function<bool()>& pred, double timeout_us, size_t self = npos) {
        if (pred()) {
            return true;
        }
        bool restore = false;
        if (self != npos && self < tasks_.size()) {
            restore = !tasks_[self].waiting;
            tasks_[self].waiting = true;
        }
        SimTime deadline = clock_.now() + timeout_us;
        bool ok = false;
        while (clock_.now() < deadline) {
            step_once();
            if (pred()) {
                ok = true;
                break;
            }
        }
        if (restore) {
            tasks_[self].waiting = false;
        }
        return ok || pred();
    }

    static constexpr size_t npos = static_cast<size_t>(-1);

private:
    struct Task {
        std::string name;
        StepFn fn;
        bool waiting;
    };

    SimClock& clock_;
    double tick_us_;
    std::vector<Task> tasks_;
    std::function<void()> advance_hook_;
};

} // namespace pno::sim
