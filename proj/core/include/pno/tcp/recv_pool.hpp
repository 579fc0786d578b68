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
#include <map>
#include <vector>

#include "pno/tcp/packet_block.hpp"
#include "pno/tcp/seq.hpp"

namespace pno::tcp {

// Out-of-order reassembly pool: a sequence-ordered queue of retained
// segments, normalized so no retained byte is duplicated (the earlier
// arrival wins; newcomers are trimmed, splitting into sub-views when an
// older segment sits in their middle).  Contiguous runs from rcv_nxt move
// into the assembled FIFO, where they stay until the bridge reads them.
class RecvPool {
public:
    struct Counters {
        uint64_t duplicates_discarded = 0;
        uint64_t bytes_trimmed = 0;
        uint64_t segments_split = 0;
    };

    void init(uint32_t rcv_nxt) { rcv_nxt_ = rcv_nxt; }
    uint32_t rcv_nxt() const { return rcv_nxt_; }

    // Insert a received segment view.  Returns bytes newly assembled
    // (moved in order past rcv_nxt).
    size_t insert(BlockView view);

    // Pop up to max assembled views (zero-copy references).
    std::vector<BlockView> read(size_t max);

    size_t assembled_views() const { return assembled_.size(); }
    uint64_t assembled_bytes() const { return assembled_bytes_; }
    uint64_t pooled_bytes() const { return pooled_bytes_; }
    size_t pooled_segments() const { return segments_.size(); }

    const Counters& counters() const { return counters_; }

    // Retained out-of-order segments in sequence order (tests).
    std::vector<BlockView> snapshot() const;

private:
    void drain_in_order();

    std::map<uint32_t, BlockView, SeqLess> segments_; // keyed by seq
    std::deque<BlockView> assembled_;
    uint32_t rcv_nxt_ = 0;
    uint64_t pooled_bytes_ = 0;
    uint64_t assembled_bytes_ = 0;
    Counters counters_;
};

} // namespace pno::tcp
