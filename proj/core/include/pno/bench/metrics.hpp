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

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pno/config.hpp"
#include "pno/errors.hpp"

namespace pno::bench {

// Latency aggregate over simulated microseconds.
struct LatencySummary {
    double p50 = 0, p99 = 0, max = 0, mean = 0, stddev = 0;
    size_t samples = 0;

    static LatencySummary of(std::vector<double> samples);
};

struct MetricsReport {
    std::string workload;
    double duration_us = 0;
    uint64_t messages = 0;
    uint64_t bytes = 0;
    double msgs_per_sec = 0;  // simulated-time rate
    double bytes_per_sec = 0;
    LatencySummary latency;
    std::map<std::string, std::string> counters;
    Config config_echo;

    struct DmaCell {
        uint32_t qd = 0;
        uint32_t size = 0;
        double amortized_us = 0;
        double rps = 0;
    };
    std::vector<DmaCell> dma_cells;

    // Deterministic serializations: same (config, seed) -> identical bytes.
    std::string to_text() const;
    std::string to_json_lines() const;

    static Result<MetricsReport> parse_text(const std::string& text);
};

Status emit_report(const MetricsReport& report, const std::string& format, std::ostream& os);

} // namespace pno::bench
