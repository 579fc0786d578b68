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

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "pno/config.hpp"
#include "pno/errors.hpp"
#include "pno/sim/clock.hpp"

namespace pno::dma {

enum class Domain : uint8_t { host = 0, nic = 1 };

inline const char* domain_name(Domain d) { return d == Domain::host ? "host" : "nic"; }

enum class Ordering : uint8_t { ordered = 0, unordered = 1 };

struct DmaConfig {
    double base_latency_us = 2.1;  // one DMA transaction over PCIe
    double marginal_us = 0.23;     // cost per extra descriptor in a batch
    double per_byte_ns = 0.0;      // size term; 0 below the ~4KB knee
    double submit_cost_us = 0.23;  // submitter-side cost per transaction
    uint32_t max_inflight = 256;
    Ordering ordering = Ordering::ordered;
    uint64_t seed = 1;

    static DmaConfig from(const Config& cfg);

    // Latency of one transaction carrying n descriptors / total_bytes.
    double batch_latency_us(size_t n, uint64_t total_bytes) const {
        return base_latency_us + static_cast<double>(n - 1) * marginal_us +
               per_byte_ns * static_cast<double>(total_bytes) / 1000.0;
    }
};

struct DmaDescriptor {
    Domain src_domain = Domain::host; // destination is the opposite domain
    uint64_t src_offset = 0;
    uint64_t dst_offset = 0;
    uint32_t len = 0;
};

struct DmaCompletion {
    uint64_t token = 0;
    SimTime complete_at = 0.0;
};

// One side of the mirrored shared region.  All writes are funneled through
// the writer-tagged accessors so tests can install an audit hook and check
// the single-writer discipline byte by byte.
class MemoryDomain {
public:
    using WriteAudit = std::function<void(uint64_t off, uint32_t len, Domain writer)>;

    MemoryDomain(Domain which, size_t size) : id_(which), mem_(size) {}

    Domain id() const noexcept { return id_; }
    size_t size() const noexcept { return mem_.size(); }

    const std::byte* data() const noexcept { return mem_.data(); }
    std::byte* raw() noexcept { return mem_.data(); }

    std::span<const std::byte> view(uint64_t off, uint64_t len) const {
        return {mem_.data() + off, len};
    }

    void write(uint64_t off, std::span<const std::byte> src, Domain writer);
    void store_u32(uint64_t off, uint32_t v, Domain writer);
    void store_u64(uint64_t off, uint64_t v, Domain writer);
    uint32_t load_u32(uint64_t off) const;
    uint64_t load_u64(uint64_t off) const;

    // Atomic accesses for real-thread producers (S-ring flag protocol and
    // cursor slots).
    uint32_t load_u32_acquire(uint64_t off) const;
    void store_u32_release(uint64_t off, uint32_t v, Domain writer);
    uint64_t load_u64_acquire(uint64_t off) const;
    void store_u64_release(uint64_t off, uint64_t v, Domain writer);

    void set_write_audit(WriteAudit audit) { audit_ = std::move(audit); }
    void audit(uint64_t off, uint32_t len, Domain writer) {
        if (audit_) {
            audit_(off, len, writer);
        }
    }

private:
    Domain id_;
    std::vector<std::byte> mem_;
    WriteAudit audit_;
};

// Simulated DOCA-style DMA engine between the two domains.
//
// - a descriptor's source bytes are snapshotted at submission, so ring
//   producers may reuse space immediately after submit;
// - the copy lands in the destination domain exactly when simulated time
//   reaches the transaction's complete_at;
// - in unordered mode the order in which due transfers land (and in which
//   completions are reported) is a seeded permutation of submission order.
class SimDmaEngine {
public:
    SimDmaEngine(SimClock& clock, MemoryDomain& host, MemoryDomain& nic, DmaConfig cfg);

    Result<uint64_t> submit(const DmaDescriptor& desc);
    Result<uint64_t> submit_batch(std::span<const DmaDescriptor> descs);

    // Completions whose complete_at <= now, in visibility order.
    std::vector<DmaCompletion> poll_completions(size_t max);

    // Advance the shared clock and land due transfers.
    SimTime clock_advance(double dt_us);

    // Land due transfers at the current clock; driver calls this after
    // advancing time.  Safe to call repeatedly.
    void settle();

    // Called after each individual descriptor lands in its destination,
    // with the landing site.  Test hazard detectors hang off this.
    using ApplyObserver =
        std::function<void(const DmaCompletion&, Domain dst, uint64_t dst_off, uint32_t len)>;
    void set_apply_observer(ApplyObserver obs) { apply_observer_ = std::move(obs); }

    size_t inflight() const noexcept { return inflight_.size(); }
    SimTime next_complete_at() const; // +inf when idle
    const DmaConfig& config() const noexcept { return cfg_; }
    SimClock& clock() noexcept { return clock_; }

    MemoryDomain& domain(Domain d) noexcept { return d == Domain::host ? host_ : nic_; }

    struct Stats {
        uint64_t transactions = 0;
        uint64_t descriptors = 0;
        uint64_t bytes = 0;
        uint64_t rejected = 0;
    };
    const Stats& stats() const noexcept { return stats_; }

private:
    struct Pending {
        uint64_t token;
        Domain dst;
        uint64_t dst_offset;
        std::vector<std::byte> staged;
        SimTime complete_at;
    };

    Status validate(const DmaDescriptor& desc) const;
    void stage(const DmaDescriptor& desc, SimTime complete_at);
    void apply(Pending& p);

    SimClock& clock_;
    MemoryDomain& host_;
    MemoryDomain& nic_;
    DmaConfig cfg_;
    std::deque<Pending> inflight_; // submission order
    std::deque<DmaCompletion> ready_;
    ApplyObserver apply_observer_;
    std::mt19937_64 rng_;
    uint64_t next_token_ = 1;
    Stats stats_;
};

} // namespace pno::dma
