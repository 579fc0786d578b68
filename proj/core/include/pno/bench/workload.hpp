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

#include <string>
#include <vector>

#include "pno/bench/metrics.hpp"
#include "pno/config.hpp"

namespace pno::bench {

struct WorkloadConfig {
    std::string workload = "echo"; // echo | stream | dma_micro
    uint32_t connections = 120;
    uint32_t msg_size = 64;
    uint32_t cores = 1;
    uint64_t message_budget = 0; // 0: run for duration_us
    double duration_us = 50'000;
    std::vector<uint32_t> qd_list{1, 2, 4, 8, 10, 16};
    std::vector<uint32_t> size_list{64, 512, 4096};
    uint64_t dma_iters = 64;
    std::string report_path;
    std::string report_format = "text";
    Config raw;

    static Result<WorkloadConfig> from(const Config& cfg);
};

Result<MetricsReport> run_echo(const WorkloadConfig& cfg);
Result<MetricsReport> run_stream(const WorkloadConfig& cfg);
Result<MetricsReport> run_dma_micro(const WorkloadConfig& cfg);
Result<MetricsReport> run_workload(const WorkloadConfig& cfg);

// Canned short exchange (handshake + a few echoes) recorded to a pcap file.
Status dump_pcap(const Config& cfg, const std::string& path);

} // namespace pno::bench
