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

#include "pno/tcp/recv_pool.hpp"

namespace pno::tcp {

namespace {

// Clip `v` to sequence range [lo, hi); empty result -> len 0.
BlockView clip(const BlockView& v, uint32_t lo, uint32_t hi) {
    uint32_t begin = seq_max(v.seq, lo);
    uint32_t end = seq_min(v.seq + v.len, hi);
    if (!seq_lt(begin, end)) {
        return BlockView{nullptr, 0, 0, begin};
    }
    BlockView out = v;
    out.offset += begin - v.seq;
    out.len = end - begin;
    out.seq = begin;
    return out;
}

} // namespace

size_t RecvPool::insert(BlockView view) {
    if (view.len == 0) {
        return 0;
    }
    uint32_t end = view.seq + view.len;

    // Entirely old data: discard.
    if (seq_le(end, rcv_nxt_)) {
        counters_.duplicates_discarded++;
        return 0;
    }
    // Trim below rcv_nxt.
    if (seq_lt(view.seq, rcv_nxt_)) {
        counters_.bytes_trimmed += rcv_nxt_ - view.seq;
        view = clip(view, rcv_nxt_, end);
    }

    // Earlier arrivals win: carve the newcomer around every retained
    // overlap, keeping the uncovered pieces.
    std::vector<BlockView> pieces{view};
    for (auto it = segments_.begin(); it != segments_.end() && !pieces.empty(); ++it) {
        uint32_t r_begin = it->second.seq;
        uint32_t r_end = it->second.seq + it->second.len;
        if (seq_ge(r_begin, end)) {
            break; // segments_ is seq-sorted; nothing further overlaps
        }
        std::vector<BlockView> next;
        for (const auto& p : pieces) {
            uint32_t p_end = p.seq + p.len;
            if (seq_ge(p.seq, r_end) || seq_le(p_end, r_begin)) {
                next.push_back(p); // no overlap
                continue;
            }
            counters_.bytes_trimmed +=
                seq_min(p_end, r_end) - seq_max(p.seq, r_begin);
            BlockView left = clip(p, p.seq, r_begin);
            BlockView right = clip(p, r_end, p_end);
            if (left.len > 0) {
                next.push_back(left);
            }
            if (right.len > 0) {
                next.push_back(right);
            }
            if (left.len > 0 && right.len > 0) {
                counters_.segments_split++;
            }
        }
        pieces.swap(next);
    }

    if (pieces.empty()) {
        // Fully covered by retained data: an exact or subsumed duplicate.
        counters_.duplicates_discarded++;
        return 0;
    }

    for (auto& p : pieces) {
        pooled_bytes_ += p.len;
        segments_.emplace(p.seq, std::move(p));
    }

    uint64_t before = assembled_bytes_;
    drain_in_order();
    return static_cast<size_t>(assembled_bytes_ - before);
}

void RecvPool::drain_in_order() {
    while (true) {
        auto it = segments_.find(rcv_nxt_);
        if (it == segments_.end()) {
            return;
        }
        BlockView v = std::move(it->second);
        segments_.erase(it);
        pooled_bytes_ -= v.len;
        rcv_nxt_ += v.len;
        assembled_bytes_ += v.len;
        assembled_.push_back(std::move(v));
    }
}

std::vector<BlockView> RecvPool::read(size_t max) {
    std::vector<BlockView> out;
    while (!assembled_.empty() && out.size() < max) {
        assembled_bytes_ -= assembled_.front().len;
        out.push_back(std::move(assembled_.front()));
        assembled_.pop_front();
    }
    return out;
}

std::vector<BlockView> RecvPool::snapshot() const {
    std::vector<BlockView> out;
    for (const auto& [seq, v] : segments_) {
        out.push_back(v);
    }
    return out;
}

} // namespace pno::tcp
