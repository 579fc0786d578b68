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

#include "pno/config.hpp"

namespace pno::rings {

inline constexpr uint64_t round8(uint64_t n) { return (n + 7) & ~uint64_t{7}; }

inline constexpr bool is_pow2(uint64_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Byte map of the mirrored shared region.  Offsets are identical in the
// host and NIC domains; the DMA engine shuttles spans between the copies.
//
//   host_ctrl:  written by the host.  +0 s_alloc_cursor, +8 data_head,
//               +16 event_head (all u64).
//   nic_ctrl:   written by the NIC.   +0 s_scan_cursor (u64).
//   sring:      S-type message ring (host-written bodies; NIC writes only
//               flag words and return-value slots).
//   data:       stream payload records (NIC-written).
//   event:      {fd, events} records (NIC-written).
//   info_n2h:   64-byte tail header + StreamInfoBlock slots, NIC-written.
//   info_h2n:   64-byte header + StreamInfoBlock slots, host-written.
struct SharedLayout {
    uint64_t host_ctrl = 0;
    uint64_t nic_ctrl = 0;
    uint64_t sring = 0;
    uint64_t sring_cap = 0;
    uint64_t data = 0;
    uint64_t data_cap = 0;
    uint64_t event = 0;
    uint64_t event_cap = 0;
    uint64_t info_n2h = 0; // header base; slots start 64 bytes in
    uint64_t info_h2n = 0;
    uint64_t info_slots = 0;
    uint64_t total = 0;

    static constexpr uint64_t kCtrlSize = 64;
    static constexpr uint64_t kInfoHeaderSize = 64;
    static constexpr uint64_t kInfoBlockSize = 64;

    static SharedLayout make(uint64_t sring_cap, uint64_t data_cap, uint64_t event_cap,
                             uint64_t info_slots);
    static SharedLayout from(const Config& cfg);

    uint64_t info_n2h_end() const { return info_n2h + kInfoHeaderSize + info_slots * kInfoBlockSize; }
    uint64_t info_h2n_end() const { return info_h2n + kInfoHeaderSize + info_slots * kInfoBlockSize; }
};

// Control slot offsets, relative to host_ctrl / nic_ctrl.
inline constexpr uint64_t kHostCtrlAllocCursor = 0;
inline constexpr uint64_t kHostCtrlDataHead = 8;
inline constexpr uint64_t kHostCtrlEventHead = 16;
inline constexpr uint64_t kNicCtrlScanCursor = 0;

// Info header offsets, relative to info_n2h.
inline constexpr uint64_t kInfoHdrDataTail = 0;
inline constexpr uint64_t kInfoHdrEventTail = 8;

} // namespace pno::rings
