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
#include <unordered_map>
#include <vector>

#include "pno/errors.hpp"
#include "pno/sim/clock.hpp"
#include "pno/tcp/packet_block.hpp"

namespace pno::tcp {

// Ring of in-flight (and not-yet-sent) segments plus a sequence-number
// hash for O(1) selective retransmission.
class SendWindow {
public:
    struct Entry {
        BlockPtr block;
        uint32_t seq = 0;
        uint32_t len = 0;     // payload bytes
        uint8_t flags = 0;    // SYN/FIN occupy sequence space
        bool transmitted = false;
        bool retransmitted = false; // Karn: disqualifies RTT sampling
        SimTime last_tx = 0.0;
    };

    explicit SendWindow(size_t slot_count);

    bool full() const { return count_ == slots_.size(); }
    bool empty() const { return count_ == 0; }
    size_t size() const { return count_; }
    size_t slot_count() const { return slots_.size(); }

    // Append a segment; fails with WindowFull on slot exhaustion.
    Status push(BlockPtr block, uint32_t seq, uint32_t len, uint8_t flags);

    Entry* find(uint32_t seq); // O(1) expected via the seq hash

    // Release every entry whose end sequence is <= ack.  Returns freed count.
    size_t release_upto(uint32_t ack);

    // Oldest unacked entry (retransmission target), nullptr when empty.
    Entry* front();

    // Entries not yet transmitted, in order; emission walks these.
    Entry* next_unsent();

    template <typename F>
    void for_each(F&& f) {
        for (size_t i = 0; i < count_; i++) {
            f(slots_[(head_ + i) % slots_.size()]);
        }
    }

    const std::unordered_map<uint32_t, size_t>& seq_index() const { return seq_index_; }

private:
    std::vector<Entry> slots_;
    std::unordered_map<uint32_t, size_t> seq_index_; // seq -> absolute slot no
    size_t head_ = 0;      // ring position of oldest entry
    size_t count_ = 0;
    uint64_t head_abs_ = 0; // absolute number of the oldest entry
};

} // namespace pno::tcp
