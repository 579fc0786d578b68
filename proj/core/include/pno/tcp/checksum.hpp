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
#include <span>

namespace pno::tcp {

// RFC 1071 internet checksum.
uint16_t inet_checksum(std::span<const std::byte> data);

// Continuable variant: fold partial sums over discontiguous pieces.
uint32_t inet_partial(std::span<const std::byte> data, uint32_t acc);
uint16_t inet_fold(uint32_t acc);

// TCP checksum with the IPv4 pseudo header.  `segment` covers the TCP
// header (checksum field zeroed by the caller or included as-is for
// verification) plus payload.  Addresses in host byte order.
uint16_t tcp_checksum(uint32_t src_ip, uint32_t dst_ip, std::span<const std::byte> segment);

} // namespace pno::tcp
