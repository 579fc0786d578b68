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
#include <map>
#include <string>
#include <string_view>

#include "pno/errors.hpp"

namespace pno {

// INI-style configuration.  Keys are flattened to "section.key"
// ("dma.base_latency_us", "link.loss_prob", ...).  Both of these forms
// parse to the same key:
//
//   [dma]
//   base_latency_us = 2.1
//
//   dma.base_latency_us = 2.1
//
// '#' and ';' start comments.  Later assignments win.
class Config {
public:
    Config() = default;

    static Result<Config> parse_file(const std::string& path);
    static Result<Config> parse_string(std::string_view text);

    bool has(const std::string& key) const;

    std::string get_str(const std::string& key, std::string fallback) const;
    double get_f64(const std::string& key, double fallback) const;
    int64_t get_i64(const std::string& key, int64_t fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    void set(const std::string& key, std::string value);

    // Deterministic "key=value" dump, sorted by key; used for the config
    // echo section of benchmark reports.
    std::string dump() const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

} // namespace pno
