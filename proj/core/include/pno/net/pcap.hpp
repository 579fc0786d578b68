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

#include <span>
#include <string>
#include <vector>

#include "pno/errors.hpp"
#include "pno/sim/clock.hpp"

namespace pno::net {

// Classic pcap trace recorder: magic 0xa1b2c3d4, version 2.4,
// LINKTYPE_ETHERNET(1), microsecond timestamps from the simulated clock.
class PcapTrace {
public:
    void record(std::span<const std::byte> frame, SimTime at_us);
    Status dump(const std::string& path) const;
    std::vector<std::byte> serialize() const;
    size_t frame_count() const { return frames_.size(); }

private:
    struct Rec {
        std::vector<std::byte> bytes;
        SimTime at_us;
    };
    std::vector<Rec> frames_;
};

} // namespace pno::net
