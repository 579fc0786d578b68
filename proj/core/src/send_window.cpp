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

#include "pno/tcp/send_window.hpp"

#include "pno/tcp/headers.hpp"
#include "pno/tcp/seq.hpp"

namespace pno::tcp {

SendWindow::SendWindow(size_t slot_count) : slots_(slot_count) {}

Status SendWindow::push(BlockPtr block, uint32_t seq, uint32_t len, uint8_t flags) {
    if (full()) {
        return Errc::window_full;
    }
    size_t pos = (head_ + count_) % slots_.size();
    uint64_t abs = head_abs_ + count_;
    slots_[pos] = Entry{std::move(block), seq, len, flags, false, false, 0.0};
    seq_index_[seq] = abs;
    count_++;
    return {};
}

SendWindow::Entry* SendWindow::find(uint32_t seq) {
    auto it = seq_index_.find(seq);
    if (it == seq_index_.end()) {
        return nullptr;
    }
    uint64_t abs = it->second;
    if (abs < head_abs_ || abs >= head_abs_ + count_) {
        return nullptr;
    }
    return &slots_[(head_ + (abs - head_abs_)) % slots_.size()];
}

size_t SendWindow::release_upto(uint32_t ack) {
    size_t freed = 0;
    while (count_ > 0) {
        Entry& e = slots_[head_];
        uint32_t seq_len = e.len + ((e.flags & (kTcpSyn | kTcpFin)) ? 1 : 0);
        uint32_t end = e.seq + seq_len;
        if (!seq_le(end, ack)) {
            break;
        }
        seq_index_.erase(e.seq);
        e.block.reset();
        head_ = (head_ + 1) % slots_.size();
        head_abs_++;
        count_--;
        freed++;
    }
    return freed;
}

SendWindow::Entry* SendWindow::front() {
    return count_ == 0 ? nullptr : &slots_[head_];
}

SendWindow::Entry* SendWindow::next_unsent() {
    for (size_t i = 0; i < count_; i++) {
        Entry& e = slots_[(head_ + i) % slots_.size()];
        if (!e.transmitted) {
            return &e;
        }
    }
    return nullptr;
}

} // namespace pno::tcp
