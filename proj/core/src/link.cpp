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

#include "pno/net/link.hpp"

#include <algorithm>
#include <limits>

namespace pno::net {

LinkConfig LinkConfig::from(const Config& cfg) {
    LinkConfig c;
    c.loss_prob = cfg.get_f64("link.loss_prob", c.loss_prob);
    c.reorder_prob = cfg.get_f64("link.reorder_prob", c.reorder_prob);
    c.reorder_window =
        static_cast<uint32_t>(cfg.get_u64("link.reorder_window", c.reorder_window));
    c.dup_prob = cfg.get_f64("link.dup_prob", c.dup_prob);
    c.corrupt_prob = cfg.get_f64("link.corrupt_prob", c.corrupt_prob);
    c.one_way_delay_us = cfg.get_f64("link.one_way_delay_us", c.one_way_delay_us);
    c.bandwidth_bps = cfg.get_u64("link.bandwidth_bps", c.bandwidth_bps);
    c.seed = cfg.get_u64("link.seed", c.seed);
    return c;
}

SimLink::SimLink(SimClock& clock, LinkConfig cfg) : clock_(clock), cfg_(cfg), rng_(cfg.seed) {}

SimTime SimLink::delivery_time(size_t frame_len, SimTime now) {
    SimTime start = now;
    if (cfg_.bandwidth_bps > 0) {
        double ser_us =
            static_cast<double>(frame_len) * 8.0 * 1e6 / static_cast<double>(cfg_.bandwidth_bps);
        start = std::max(now, busy_until_);
        busy_until_ = start + ser_us;
        start = busy_until_;
    }
    return start + cfg_.one_way_delay_us;
}

void SimLink::enqueue(Frame f, SimTime deliver_at) {
    Scheduled s{std::move(f), deliver_at, next_order_++};
    auto it = std::upper_bound(queue_.begin(), queue_.end(), s,
                               [](const Scheduled& a, const Scheduled& b) {
                                   if (a.deliver_at != b.deliver_at) {
                                       return a.deliver_at < b.deliver_at;
                                   }
                                   return a.order < b.order;
                               });
    queue_.insert(it, std::move(s));
}

void SimLink::corrupt(std::vector<std::byte>& bytes) {
    // Flip 1-8 bits inside one 16-bit-aligned word past the Ethernet
    // header; a <=8-bit change of a checksummed word can never fold back
    // to the same ones-complement sum, so the receiver always notices.
    if (bytes.size() < 16) {
        return;
    }
    size_t words = (bytes.size() - 14) / 2;
    size_t word = 7 + static_cast<size_t>(rng_() % words); // skip 14-byte eth
    uint32_t nbits = 1 + static_cast<uint32_t>(rng_() % 8);
    for (uint32_t i = 0; i < nbits; i++) {
        size_t bit = rng_() % 16;
        size_t off = word * 2 + bit / 8;
        if (off < bytes.size()) {
            bytes[off] ^= static_cast<std::byte>(1u << (bit % 8));
        }
    }
    stats_.corrupted++;
}

void SimLink::release_held(SimTime now, bool force) {
    for (size_t i = 0; i < held_.size();) {
        bool timeout = now - held_[i].held_at >
                       std::max(10.0 * cfg_.one_way_delay_us, 1000.0);
        if (force || held_[i].release_after == 0 || timeout) {
            Frame f = std::move(held_[i].frame);
            held_.erase(held_.begin() + static_cast<ptrdiff_t>(i));
            SimTime at = delivery_time(f.bytes.size(), now);
            enqueue(std::move(f), at);
        } else {
            i++;
        }
    }
}

void SimLink::send(std::span<const std::byte> frame, SimTime now) {
    stats_.sent++;

    // Each frame that passes decrements the holdback counters.
    for (auto& h : held_) {
        if (h.release_after > 0) {
            h.release_after--;
        }
    }

    std::uniform_real_distribution<double> u(0.0, 1.0);
    bool drop = u(rng_) < cfg_.loss_prob;
    bool dup = u(rng_) < cfg_.dup_prob;
    bool corrupted = u(rng_) < cfg_.corrupt_prob;
    bool reorder = u(rng_) < cfg_.reorder_prob;

    if (drop) {
        stats_.dropped++;
        // Losing the original still lets an independent duplicate through.
        if (!dup) {
            release_held(now, false);
            return;
        }
        dup = false;
    }

    Frame f;
    f.bytes.assign(frame.begin(), frame.end());
    f.ingress_time_us = now;
    if (corrupted) {
        corrupt(f.bytes);
    }

    if (dup) {
        Frame copy = f;
        stats_.duplicated++;
        enqueue(std::move(copy), delivery_time(frame.size(), now));
    }

    if (reorder && cfg_.reorder_window >= 1) {
        stats_.reordered++;
        uint32_t k = 1 + static_cast<uint32_t>(rng_() % cfg_.reorder_window);
        held_.push_back(Held{std::move(f), k, now});
    } else {
        enqueue(std::move(f), delivery_time(frame.size(), now));
    }
    release_held(now, false);
}

std::vector<Frame> SimLink::poll(SimTime now) {
    release_held(now, false);
    std::vector<Frame> out;
    while (!queue_.empty() && queue_.front().deliver_at <= now) {
        out.push_back(std::move(queue_.front().frame));
        queue_.pop_front();
        stats_.delivered++;
    }
    return out;
}

SimTime SimLink::next_delivery() const {
    if (queue_.empty()) {
        return held_.empty() ? std::numeric_limits<SimTime>::infinity()
                             : held_.front().held_at + std::max(10.0 * cfg_.one_way_delay_us, 1000.0);
    }
    return queue_.front().deliver_at;
}

} // namespace pno::net
