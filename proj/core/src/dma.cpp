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

#include "pno/dma/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <limits>

namespace pno::dma {

DmaConfig DmaConfig::from(const Config& cfg) {
    DmaConfig c;
    c.base_latency_us = cfg.get_f64("dma.base_latency_us", c.base_latency_us);
    c.marginal_us = cfg.get_f64("dma.marginal_us", c.marginal_us);
    c.per_byte_ns = cfg.get_f64("dma.per_byte_ns", c.per_byte_ns);
    c.submit_cost_us = cfg.get_f64("dma.submit_cost_us", c.submit_cost_us);
    c.max_inflight = static_cast<uint32_t>(cfg.get_u64("dma.max_inflight", c.max_inflight));
    c.ordering = cfg.get_str("dma.ordering", "ordered") == "unordered" ? Ordering::unordered
                                                                       : Ordering::ordered;
    c.seed = cfg.get_u64("dma.seed", c.seed);
    return c;
}

void MemoryDomain::write(uint64_t off, std::span<const std::byte> src, Domain writer) {
    audit(off, static_cast<uint32_t>(src.size()), writer);
    std::memcpy(mem_.data() + off, src.data(), src.size());
}

void MemoryDomain::store_u32(uint64_t off, uint32_t v, Domain writer) {
    audit(off, 4, writer);
    std::memcpy(mem_.data() + off, &v, 4);
}

void MemoryDomain::store_u64(uint64_t off, uint64_t v, Domain writer) {
    audit(off, 8, writer);
    std::memcpy(mem_.data() + off, &v, 8);
}

uint32_t MemoryDomain::load_u32(uint64_t off) const {
    uint32_t v;
    std::memcpy(&v, mem_.data() + off, 4);
    return v;
}

uint64_t MemoryDomain::load_u64(uint64_t off) const {
    uint64_t v;
    std::memcpy(&v, mem_.data() + off, 8);
    return v;
}

uint32_t MemoryDomain::load_u32_acquire(uint64_t off) const {
    auto* p = reinterpret_cast<const uint32_t*>(mem_.data() + off);
    return std::atomic_ref<const uint32_t>(*p).load(std::memory_order_acquire);
}

void MemoryDomain::store_u32_release(uint64_t off, uint32_t v, Domain writer) {
    audit(off, 4, writer);
    auto* p = reinterpret_cast<uint32_t*>(mem_.data() + off);
    std::atomic_ref<uint32_t>(*p).store(v, std::memory_order_release);
}

uint64_t MemoryDomain::load_u64_acquire(uint64_t off) const {
    auto* p = reinterpret_cast<const uint64_t*>(mem_.data() + off);
    return std::atomic_ref<const uint64_t>(*p).load(std::memory_order_acquire);
}

void MemoryDomain::store_u64_release(uint64_t off, uint64_t v, Domain writer) {
    audit(off, 8, writer);
    auto* p = reinterpret_cast<uint64_t*>(mem_.data() + off);
    std::atomic_ref<uint64_t>(*p).store(v, std::memory_order_release);
}

SimDmaEngine::SimDmaEngine(SimClock& clock, MemoryDomain& host, MemoryDomain& nic, DmaConfig cfg)
    : clock_(clock), host_(host), nic_(nic), cfg_(cfg), rng_(cfg.seed) {}

Status SimDmaEngine::validate(const DmaDescriptor& desc) const {
    if (desc.len == 0) {
        return Errc::range_error;
    }
    const MemoryDomain& src = desc.src_domain == Domain::host ? host_ : nic_;
    const MemoryDomain& dst = desc.src_domain == Domain::host ? nic_ : host_;
    if (desc.src_offset + desc.len > src.size() || desc.dst_offset + desc.len > dst.size()) {
        return Errc::range_error;
    }
    return {};
}

void SimDmaEngine::stage(const DmaDescriptor& desc, SimTime complete_at) {
    MemoryDomain& src = desc.src_domain == Domain::host ? host_ : nic_;
    Pending p;
    p.token = next_token_++;
    p.dst = desc.src_domain == Domain::host ? Domain::nic : Domain::host;
    p.dst_offset = desc.dst_offset;
    auto bytes = src.view(desc.src_offset, desc.len);
    p.staged.assign(bytes.begin(), bytes.end());
    p.complete_at = complete_at;
    inflight_.push_back(std::move(p));
    stats_.descriptors++;
    stats_.bytes += desc.len;
}

Result<uint64_t> SimDmaEngine::submit(const DmaDescriptor& desc) {
    DmaDescriptor one[1] = {desc};
    return submit_batch(one);
}

Result<uint64_t> SimDmaEngine::submit_batch(std::span<const DmaDescriptor> descs) {
    settle();
    if (descs.empty()) {
        return Errc::empty_batch;
    }
    if (inflight_.size() + descs.size() > cfg_.max_inflight) {
        stats_.rejected++;
        return Errc::queue_full;
    }
    uint64_t total_bytes = 0;
    for (const auto& d : descs) {
        if (Status s = validate(d); !s) {
            stats_.rejected++;
            return s.error();
        }
        total_bytes += d.len;
    }
    SimTime complete_at = clock_.now() + cfg_.batch_latency_us(descs.size(), total_bytes);
    uint64_t first_token = next_token_;
    for (const auto& d : descs) {
        stage(d, complete_at);
    }
    stats_.transactions++;
    return first_token;
}

void SimDmaEngine::apply(Pending& p) {
    MemoryDomain& dst = p.dst == Domain::host ? host_ : nic_;
    // A landing transfer writes on behalf of the submitting (source) domain.
    dst.write(p.dst_offset, p.staged, p.dst == Domain::host ? Domain::nic : Domain::host);
    DmaCompletion c{p.token, p.complete_at};
    ready_.push_back(c);
    if (apply_observer_) {
        apply_observer_(c, p.dst, p.dst_offset, static_cast<uint32_t>(p.staged.size()));
    }
}

void SimDmaEngine::settle() {
    const SimTime now = clock_.now();
    if (cfg_.ordering == Ordering::ordered) {
        // FIFO visibility: a due transfer waits for every earlier one.
        while (!inflight_.empty() && inflight_.front().complete_at <= now) {
            apply(inflight_.front());
            inflight_.pop_front();
        }
        return;
    }
    // Unordered: land all due transfers in a seeded shuffle of their
    // submission order.
    std::vector<size_t> due;
    for (size_t i = 0; i < inflight_.size(); i++) {
        if (inflight_[i].complete_at <= now) {
            due.push_back(i);
        }
    }
    if (due.empty()) {
        return;
    }
    std::shuffle(due.begin(), due.end(), rng_);
    for (size_t idx : due) {
        apply(inflight_[idx]);
    }
    std::sort(due.begin(), due.end());
    for (size_t k = due.size(); k-- > 0;) {
        inflight_.erase(inflight_.begin() + static_cast<ptrdiff_t>(due[k]));
    }
}

std::vector<DmaCompletion> SimDmaEngine::poll_completions(size_t max) {
    settle();
    std::vector<DmaCompletion> out;
    while (!ready_.empty() && out.size() < max) {
        out.push_back(ready_.front());
        ready_.pop_front();
    }
    return out;
}

SimTime SimDmaEngine::clock_advance(double dt_us) {
    SimTime t = clock_.advance(dt_us);
    settle();
    return t;
}

SimTime SimDmaEngine::next_complete_at() const {
    SimTime best = std::numeric_limits<SimTime>::infinity();
    for (const auto& p : inflight_) {
        best = std::min(best, p.complete_at);
    }
    return best;
}

} // namespace pno::dma
