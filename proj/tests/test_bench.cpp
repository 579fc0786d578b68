#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "pno/bench/workload.hpp"

using namespace pno;
using namespace pno::bench;

namespace {

WorkloadConfig small_echo(uint64_t seed = 1) {
    Config c;
    c.set("run.workload", "echo");
    c.set("run.connections", "4");
    c.set("run.msg_size", "64");
    c.set("run.duration_us", "4000");
    c.set("dma.seed", std::to_string(seed));
    c.set("link.seed", std::to_string(seed + 1));
    c.set("tcp.seed", std::to_string(seed + 2));
    auto wc = WorkloadConfig::from(c);
    REQUIRE(wc);
    return *wc;
}

} // namespace

TEST_CASE("workload config validation") {
    Config c;
    c.set("run.workload", "nonsense");
    CHECK_FALSE(WorkloadConfig::from(c));
    c.set("run.workload", "echo");
    c.set("run.connections", "0");
    CHECK_FALSE(WorkloadConfig::from(c));
    c.set("run.connections", "2");
    CHECK(WorkloadConfig::from(c));
}

TEST_CASE("dma_micro reports the anchored curve") {
    Config c;
    c.set("run.workload", "dma_micro");
    auto wc = WorkloadConfig::from(c);
    REQUIRE(wc);
    auto rep = run_dma_micro(*wc);
    REQUIRE(rep);
    bool saw_qd1 = false, saw_qd10 = false;
    for (auto& cell : rep->dma_cells) {
        if (cell.qd == 1) {
            CHECK(cell.amortized_us == doctest::Approx(2.1).epsilon(0.001));
            saw_qd1 = true;
        }
        if (cell.qd == 10 && cell.size == 4096) {
            CHECK(cell.amortized_us <= 0.45);
            saw_qd10 = true;
        }
    }
    CHECK(saw_qd1);
    CHECK(saw_qd10);
}

TEST_CASE("dma_micro RPS is nearly flat across small request sizes") {
    Config c;
    c.set("run.workload", "dma_micro");
    c.set("run.qd", "8");
    c.set("run.sizes", "64,512,4096");
    auto wc = WorkloadConfig::from(c);
    REQUIRE(wc);
    auto rep = run_dma_micro(*wc);
    REQUIRE(rep);
    REQUIRE(rep->dma_cells.size() == 3);
    double lo = rep->dma_cells[0].rps, hi = lo;
    for (auto& cell : rep->dma_cells) {
        lo = std::min(lo, cell.rps);
        hi = std::max(hi, cell.rps);
    }
    CHECK((hi - lo) / hi < 1e-9); // per_byte_ns defaults to zero
}

TEST_CASE("echo run: every request echoed byte-identically on a clean link") {
    auto rep = run_echo(small_echo());
    REQUIRE(rep);
    CHECK(rep->messages > 50);
    CHECK(rep->counters.at("client.echo_mismatches") == "0");
    CHECK(rep->counters.at("bridge.ordering_violations") == "0");
    CHECK(rep->latency.p50 > 0);
    CHECK(rep->latency.p50 <= rep->latency.p99);
    CHECK(rep->latency.p99 <= rep->latency.max);
}

TEST_CASE("echo run completes with zero corruption over a 5% lossy link") {
    auto wc = small_echo(33);
    wc.raw.set("link.loss_prob", "0.05");
    wc.raw.set("run.duration_us", "20000");
    wc.raw.set("run.connections", "2");
    wc.duration_us = 20000;
    wc.connections = 2;
    auto rep = run_echo(wc);
    REQUIRE(rep);
    CHECK(rep->messages > 10);
    CHECK(rep->counters.at("client.echo_mismatches") == "0");
    bool retransmitted = rep->counters.at("tcp.core0.retransmits") != "0";
    CHECK(retransmitted);
}

TEST_CASE("reports are deterministic: same config and seed, identical bytes") {
    auto r1 = run_echo(small_echo(7));
    auto r2 = run_echo(small_echo(7));
    auto r3 = run_echo(small_echo(8));
    REQUIRE(r1);
    REQUIRE(r2);
    REQUIRE(r3);
    CHECK(r1->to_text() == r2->to_text());
    CHECK(r1->to_json_lines() == r2->to_json_lines());
    CHECK(r1->to_text() != r3->to_text());

    auto d1 = run_dma_micro(small_echo(7));
    auto d2 = run_dma_micro(small_echo(7));
    REQUIRE(d1);
    REQUIRE(d2);
    CHECK(d1->to_text() == d2->to_text());
}

TEST_CASE("report text round-trips through the parser") {
    auto rep = run_echo(small_echo(9));
    REQUIRE(rep);
    auto parsed = MetricsReport::parse_text(rep->to_text());
    REQUIRE(parsed);
    CHECK(parsed->workload == rep->workload);
    CHECK(parsed->messages == rep->messages);
    CHECK(parsed->latency.samples == rep->latency.samples);
    CHECK(parsed->latency.p99 == doctest::Approx(rep->latency.p99).epsilon(1e-3));
    CHECK(parsed->counters == rep->counters);

    auto dma = run_dma_micro(small_echo(9));
    REQUIRE(dma);
    auto dparsed = MetricsReport::parse_text(dma->to_text());
    REQUIRE(dparsed);
    REQUIRE(dparsed->dma_cells.size() == dma->dma_cells.size());
    for (size_t i = 0; i < dma->dma_cells.size(); i++) {
        bool found = false;
        for (auto& cell : dparsed->dma_cells) {
            if (cell.qd == dma->dma_cells[i].qd && cell.size == dma->dma_cells[i].size) {
                CHECK(cell.amortized_us ==
                      doctest::Approx(dma->dma_cells[i].amortized_us).epsilon(1e-3));
                found = true;
            }
        }
        CHECK(found);
    }
}

TEST_CASE("emit_report writes both formats; empty run emits a header-only report") {
    MetricsReport empty;
    empty.workload = "echo";
    std::ostringstream text, jsonl;
    CHECK(emit_report(empty, "text", text));
    CHECK(emit_report(empty, "json-lines", jsonl));
    CHECK(text.str().find("report.workload=echo") != std::string::npos);
    CHECK(text.str().find("report.messages=0") != std::string::npos);
    CHECK(jsonl.str().find("\"type\":\"summary\"") != std::string::npos);
    std::ostringstream bad;
    CHECK_FALSE(emit_report(empty, "csv", bad));
}

TEST_CASE("stream workload moves the full byte budget") {
    Config c;
    c.set("run.workload", "stream");
    c.set("run.connections", "2");
    c.set("run.msg_size", "1024");
    c.set("run.message_budget", "65536"); // bytes per connection
    auto wc = WorkloadConfig::from(c);
    REQUIRE(wc);
    auto rep = run_stream(*wc);
    REQUIRE(rep);
    CHECK(rep->counters.at("stream.completed") == "1");
    CHECK(rep->bytes == 2 * 65536);
    CHECK(rep->bytes_per_sec > 0);
}

TEST_CASE("multi-core echo: flows shard across engines and still echo cleanly") {
    auto wc = small_echo(21);
    wc.raw.set("run.cores", "2");
    wc.cores = 2;
    wc.raw.set("run.connections", "8");
    wc.connections = 8;
    auto rep = run_echo(wc);
    REQUIRE(rep);
    CHECK(rep->counters.at("client.echo_mismatches") == "0");
    // Both engines carried traffic.
    CHECK(rep->counters.at("tcp.core0.segs_in") != "0");
    CHECK(rep->counters.at("tcp.core1.segs_in") != "0");
}
