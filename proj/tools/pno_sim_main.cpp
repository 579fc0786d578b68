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

#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "pno/bench/workload.hpp"
#include "pno/bench/world.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitFault = 2;

int run_cmd(const std::string& config_path, const std::string& workload, int connections,
            int msg_size, int cores, const std::string& qd, const std::string& sizes,
            double duration_us, long message_budget, const std::string& report_path,
            const std::string& format, bool sync_per_call, double batch_window_us,
            const std::string& pcap_path) {
    pno::Config cfg;
    if (!config_path.empty()) {
        auto parsed = pno::Config::parse_file(config_path);
        if (!parsed) {
            std::cerr << "error: cannot parse config " << config_path << " ("
                      << pno::errc_name(parsed.error()) << ")\n";
            return kExitConfig;
        }
        cfg = *parsed;
    }
    cfg.set("run.workload", workload);
    if (connections > 0) cfg.set("run.connections", std::to_string(connections));
    if (msg_size > 0) cfg.set("run.msg_size", std::to_string(msg_size));
    if (cores > 0) cfg.set("run.cores", std::to_string(cores));
    if (!qd.empty()) cfg.set("run.qd", qd);
    if (!sizes.empty()) cfg.set("run.sizes", sizes);
    if (duration_us > 0) cfg.set("run.duration_us", std::to_string(duration_us));
    if (message_budget > 0) cfg.set("run.message_budget", std::to_string(message_budget));
    if (!report_path.empty()) cfg.set("run.report", report_path);
    if (!format.empty()) cfg.set("run.format", format);
    if (sync_per_call) cfg.set("proxy.sync_per_call", "1");
    if (batch_window_us >= 0) cfg.set("bridge.batch_window_us", std::to_string(batch_window_us));
    if (!pcap_path.empty()) cfg.set("sim.trace", "1");

    auto wc = pno::bench::WorkloadConfig::from(cfg);
    if (!wc) {
        std::cerr << "error: invalid workload configuration\n";
        return kExitConfig;
    }

    auto wall0 = std::chrono::steady_clock::now();
    auto report = pno::bench::run_workload(*wc);
    auto wall1 = std::chrono::steady_clock::now();
    if (!report) {
        std::cerr << "error: simulation fault (" << pno::errc_name(report.error()) << ")\n";
        return kExitFault;
    }

    // Wall-clock speed is informational only; it never enters the report
    // so identical (config, seed) runs stay byte-identical.
    double wall_ms =
        std::chrono::duration_cast<std::chrono::microseconds>(wall1 - wall0).count() / 1000.0;
    std::cerr << "# wall_ms=" << wall_ms << "\n";

    if (!wc->report_path.empty()) {
        std::ofstream out(wc->report_path);
        if (!out || !pno::bench::emit_report(*report, wc->report_format, out)) {
            std::cerr << "error: cannot write report to " << wc->report_path << "\n";
            return kExitFault;
        }
    } else {
        pno::bench::emit_report(*report, wc->report_format, std::cout);
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pno-sim: desk-scale simulation of a host/NIC split TCP stack"};
    app.require_subcommand(1);

    // run
    std::string config_path, workload = "echo", qd, sizes, report_path, format = "text";
    std::string pcap_path;
    int connections = 0, msg_size = 0, cores = 0;
    double duration_us = 0, batch_window_us = -1;
    long message_budget = 0;
    bool sync_per_call = false;

    auto* run = app.add_subcommand("run", "run a workload and emit a metrics report");
    run->add_option("--workload", workload, "echo | stream | dma_micro")->required();
    run->add_option("--config", config_path, "INI config file");
    run->add_option("--connections", connections, "client connection count");
    run->add_option("--msg-size", msg_size, "message size in bytes");
    run->add_option("--cores", cores, "simulated NIC cores");
    run->add_option("--qd", qd, "dma_micro queue depths, comma separated");
    run->add_option("--sizes", sizes, "dma_micro request sizes, comma separated");
    run->add_option("--duration-us", duration_us, "measurement window, simulated us");
    run->add_option("--messages", message_budget, "stop after this many messages");
    run->add_option("--report", report_path, "report output path (default stdout)");
    run->add_option("--format", format, "text | json-lines");
    run->add_flag("--sync-per-call", sync_per_call,
                  "baseline mode: one DMA round trip per socket call");
    run->add_option("--batch-window-us", batch_window_us, "bridge DMA batching window");

    // dump-pcap
    std::string pcap_out = "trace.pcap", pcap_config;
    auto* dump = app.add_subcommand("dump-pcap", "record a canned exchange to a pcap file");
    dump->add_option("--out", pcap_out, "output pcap path");
    dump->add_option("--config", pcap_config, "INI config file");

    // dump-layout
    auto* layout = app.add_subcommand("dump-layout", "print the shared-region byte map");
    std::string layout_config;
    layout->add_option("--config", layout_config, "INI config file");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        return run_cmd(config_path, workload, connections, msg_size, cores, qd, sizes, duration_us,
                       message_budget, report_path, format, sync_per_call, batch_window_us,
                       pcap_path);
    }
    if (dump->parsed()) {
        pno::Config cfg;
        if (!pcap_config.empty()) {
            auto parsed = pno::Config::parse_file(pcap_config);
            if (!parsed) {
                std::cerr << "error: cannot parse config\n";
                return kExitConfig;
            }
            cfg = *parsed;
        }
        if (!pno::bench::dump_pcap(cfg, pcap_out)) {
            std::cerr << "error: pcap dump failed\n";
            return kExitFault;
        }
        std::cout << "wrote " << pcap_out << "\n";
        return kExitOk;
    }
    if (layout->parsed()) {
        pno::Config cfg;
        if (!layout_config.empty()) {
            auto parsed = pno::Config::parse_file(layout_config);
            if (parsed) {
                cfg = *parsed;
            }
        }
        auto lay = pno::rings::SharedLayout::from(cfg);
        auto hex = [](uint64_t v) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "0x%08llx", static_cast<unsigned long long>(v));
            return std::string(buf);
        };
        std::cout << "host_ctrl  " << hex(lay.host_ctrl) << "  +64\n";
        std::cout << "  +0  s_alloc_cursor (u64, host-written)\n";
        std::cout << "  +8  data_head      (u64, host-written)\n";
        std::cout << "  +16 event_head     (u64, host-written)\n";
        std::cout << "nic_ctrl   " << hex(lay.nic_ctrl) << "  +64\n";
        std::cout << "  +0  s_scan_cursor  (u64, nic-written)\n";
        std::cout << "sring      " << hex(lay.sring) << "  +" << lay.sring_cap
                  << "  blocks: {flag u32, length u32}[, retval u64][, payload...] 8B aligned\n";
        std::cout << "data ring  " << hex(lay.data) << "  +" << lay.data_cap
                  << "  records: {fd u32, len u32, payload..., pad8}\n";
        std::cout << "event ring " << hex(lay.event) << "  +" << lay.event_cap
                  << "  records: {fd u32, events u32}\n";
        std::cout << "info n2h   " << hex(lay.info_n2h) << "  header 64B {data_tail u64, "
                  << "event_tail u64} + " << lay.info_slots << " x 64B slots\n";
        std::cout << "info h2n   " << hex(lay.info_h2n) << "  header 64B + " << lay.info_slots
                  << " x 64B slots\n";
        std::cout << "total      " << lay.total << " bytes per domain\n";
        return kExitOk;
    }
    return kExitConfig;
}
