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

#include "pno/bench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

namespace pno::bench {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

} // namespace

LatencySummary LatencySummary::of(std::vector<double> samples) {
    LatencySummary s;
    s.samples = samples.size();
    if (samples.empty()) {
        return s;
    }
    std::sort(samples.begin(), samples.end());
    auto q = [&](double p) {
        size_t idx = static_cast<size_t>(p * static_cast<double>(samples.size() - 1));
        return samples[idx];
    };
    s.p50 = q(0.50);
    s.p99 = q(0.99);
    s.max = samples.back();
    double sum = 0;
    for (double v : samples) {
        sum += v;
    }
    s.mean = sum / static_cast<double>(samples.size());
    double var = 0;
    for (double v : samples) {
        var += (v - s.mean) * (v - s.mean);
    }
    s.stddev = std::sqrt(var / static_cast<double>(samples.size()));
    return s;
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os << "report.workload=" << workload << "\n";
    os << "report.duration_us=" << fmt(duration_us) << "\n";
    os << "report.messages=" << messages << "\n";
    os << "report.bytes=" << bytes << "\n";
    os << "report.msgs_per_sec=" << fmt(msgs_per_sec) << "\n";
    os << "report.bytes_per_sec=" << fmt(bytes_per_sec) << "\n";
    os << "latency.samples=" << latency.samples << "\n";
    os << "latency.p50_us=" << fmt(latency.p50) << "\n";
    os << "latency.p99_us=" << fmt(latency.p99) << "\n";
    os << "latency.max_us=" << fmt(latency.max) << "\n";
    os << "latency.mean_us=" << fmt(latency.mean) << "\n";
    os << "latency.stddev_us=" << fmt(latency.stddev) << "\n";
    for (const auto& c : dma_cells) {
        os << "dma.qd" << c.qd << ".size" << c.size << ".amortized_us=" << fmt(c.amortized_us)
           << "\n";
        os << "dma.qd" << c.qd << ".size" << c.size << ".rps=" << fmt(c.rps) << "\n";
    }
    for (const auto& [k, v] : counters) {
        os << "counter." << k << "=" << v << "\n";
    }
    for (const auto& [k, v] : config_echo.entries()) {
        os << "config." << k << "=" << v << "\n";
    }
    return os.str();
}

std::string MetricsReport::to_json_lines() const {
    nlohmann::json summary;
    summary["type"] = "summary";
    summary["workload"] = workload;
    summary["duration_us"] = fmt(duration_us);
    summary["messages"] = messages;
    summary["bytes"] = bytes;
    summary["msgs_per_sec"] = fmt(msgs_per_sec);
    summary["bytes_per_sec"] = fmt(bytes_per_sec);
    summary["latency_p50_us"] = fmt(latency.p50);
    summary["latency_p99_us"] = fmt(latency.p99);
    summary["latency_max_us"] = fmt(latency.max);
    summary["latency_stddev_us"] = fmt(latency.stddev);

    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : dma_cells) {
        cells.push_back({{"qd", c.qd},
                         {"size", c.size},
                         {"amortized_us", fmt(c.amortized_us)},
                         {"rps", fmt(c.rps)}});
    }
    nlohmann::json counter_obj;
    counter_obj["type"] = "counters";
    for (const auto& [k, v] : counters) {
        counter_obj[k] = v;
    }
    nlohmann::json config_obj;
    config_obj["type"] = "config";
    for (const auto& [k, v] : config_echo.entries()) {
        config_obj[k] = v;
    }

    std::string out = summary.dump() + "\n";
    if (!cells.empty()) {
        out += nlohmann::json{{"type", "dma_cells"}, {"cells", cells}}.dump() + "\n";
    }
    out += counter_obj.dump() + "\n";
    out += config_obj.dump() + "\n";
    return out;
}

Result<MetricsReport> MetricsReport::parse_text(const std::string& text) {
    auto cfg = Config::parse_string(text);
    if (!cfg) {
        return cfg.error();
    }
    MetricsReport r;
    r.workload = cfg->get_str("report.workload", "");
    r.duration_us = cfg->get_f64("report.duration_us", 0);
    r.messages = cfg->get_u64("report.messages", 0);
    r.bytes = cfg->get_u64("report.bytes", 0);
    r.msgs_per_sec = cfg->get_f64("report.msgs_per_sec", 0);
    r.bytes_per_sec = cfg->get_f64("report.bytes_per_sec", 0);
    r.latency.samples = cfg->get_u64("latency.samples", 0);
    r.latency.p50 = cfg->get_f64("latency.p50_us", 0);
    r.latency.p99 = cfg->get_f64("latency.p99_us", 0);
    r.latency.max = cfg->get_f64("latency.max_us", 0);
    r.latency.mean = cfg->get_f64("latency.mean_us", 0);
    r.latency.stddev = cfg->get_f64("latency.stddev_us", 0);
    for (const auto& [k, v] : cfg->entries()) {
        if (k.rfind("counter.", 0) == 0) {
            r.counters[k.substr(8)] = v;
        } else if (k.rfind("config.", 0) == 0) {
            r.config_echo.set(k.substr(7), v);
        } else if (k.rfind("dma.qd", 0) == 0) {
            // dma.qd<QD>.size<SZ>.<field>
            size_t size_pos = k.find(".size");
            size_t field_pos = k.find('.', size_pos + 1);
            if (size_pos == std::string::npos || field_pos == std::string::npos) {
                continue;
            }
            uint32_t qd = static_cast<uint32_t>(std::stoul(k.substr(6, size_pos - 6)));
            uint32_t sz = static_cast<uint32_t>(
                std::stoul(k.substr(size_pos + 5, field_pos - size_pos - 5)));
            DmaCell* cell = nullptr;
            for (auto& c : r.dma_cells) {
                if (c.qd == qd && c.size == sz) {
                    cell = &c;
                }
            }
            if (!cell) {
                r.dma_cells.push_back(DmaCell{qd, sz, 0, 0});
                cell = &r.dma_cells.back();
            }
            if (k.substr(field_pos + 1) == "amortized_us") {
                cell->amortized_us = std::stod(v);
            } else if (k.substr(field_pos + 1) == "rps") {
                cell->rps = std::stod(v);
            }
        }
    }
    return r;
}

Status emit_report(const MetricsReport& report, const std::string& format, std::ostream& os) {
    if (format == "text") {
        os << report.to_text();
    } else if (format == "json-lines" || format == "jsonl") {
        os << report.to_json_lines();
    } else {
        return Errc::parse_error;
    }
    return os.good() ? Status{} : Status{Errc::io_error};
}

} // namespace pno::bench
