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

#include <cassert>
#include <cstdint>
#include <string_view>
#include <utility>

namespace pno {

enum class Errc : uint8_t {
    ok = 0,

    // dma
    queue_full,
    range_error,
    empty_batch,

    // rings
    ring_full,
    invalid_flag,
    already_committed,
    not_synchronous_kind,
    data_ring_full,
    empty_payload,
    would_block,
    ordering_violation,

    // tcp
    addr_in_use,
    no_route,
    window_full,
    conn_closed,
    conn_refused,
    unknown_seq,

    // proxy
    bad_fd,
    bad_epfd,

    // config / io
    parse_error,
    io_error,
};

std::string_view errc_name(Errc e) noexcept;

// Small value-or-error wrapper.  Expected errors (ring full, would-block,
// duplicate ack noise) are normal control flow here, so no exceptions on
// these paths.
template <typename T>
class Result {
public:
    Result(T value) : value_(std::move(value)), errc_(Errc::ok) {}
    Result(Errc e) : value_{}, errc_(e) { assert(e != Errc::ok); }

    explicit operator bool() const noexcept { return errc_ == Errc::ok; }
    Errc error() const noexcept { return errc_; }

    T& operator*() noexcept {
        assert(errc_ == Errc::ok);
        return value_;
    }
    const T& operator*() const noexcept {
        assert(errc_ == Errc::ok);
        return value_;
    }
    T* operator->() noexcept { return &**this; }
    const T* operator->() const noexcept { return &**this; }

    T value_or(T fallback) const {
        return errc_ == Errc::ok ? value_ : std::move(fallback);
    }

private:
    T value_;
    Errc errc_;
};

// void specialization: just a status.
class Status {
public:
    Status() : errc_(Errc::ok) {}
    Status(Errc e) : errc_(e) {}
    explicit operator bool() const noexcept { return errc_ == Errc::ok; }
    Errc error() const noexcept { return errc_; }

private:
    Errc errc_;
};

} // namespace pno
