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

#include "pno/tcp/checksum.hpp"

namespace pno::tcp {

uint32_t inet_partial(std::span<const std::byte> data, uint32_t acc) {
    size_t i = 0;
    for (; i + 1 < data.size(); i += 2) {
        acc += static_cast<uint32_t>(std::to_integer<uint8_t>(data[i])) << 8 |
               std::to_integer<uint8_t>(data[i + 1]);
    }
    if (i < data.size()) {
        acc += static_cast<uint32_t>(std::to_integer<uint8_t>(data[i])) << 8;
    }
    return acc;
}

uint16_t inet_fold(uint32_t acc) {
    while (acc >> 16) {
        acc = (acc & 0xFFFF) + (acc >> 16);
    }
    return static_cast<uint16_t>(~acc & 0xFFFF);
}

uint16_t inet_checksum(std::span<const std::byte> data) {
    return inet_fold(inet_partial(data, 0));
}

uint16_t tcp_checksum(uint32_t src_ip, uint32_t dst_ip, std::span<const std::byte> segment) {
    uint32_t acc = 0;
    acc += (src_ip >> 16) + (src_ip & 0xFFFF);
    acc += (dst_ip >> 16) + (dst_ip & 0xFFFF);
    acc += 6; // protocol
    acc += static_cast<uint32_t>(segment.size());
    acc = inet_partial(segment, acc);
    return inet_fold(acc);
}

} // namespace pno::tcp
