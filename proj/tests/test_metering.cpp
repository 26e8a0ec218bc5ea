#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "lightmem/metering.hpp"

using namespace lightmem;

TEST_CASE("record accumulates tokens, calls, and time") {
    UsageMeter meter;
    meter.record(Phase::Summary, 100, 20, 1000);
    const auto s = meter.snapshot();
    REQUIRE(s.of(Phase::Summary).input_tokens == 100);
    REQUIRE(s.of(Phase::Summary).output_tokens == 20);
    REQUIRE(s.of(Phase::Summary).total_tokens() == 120);
    REQUIRE(s.of(Phase::Summary).calls == 1);
    REQUIRE(s.of(Phase::Summary).wall_ms == 1000);
}

TEST_CASE("records sum componentwise") {
    UsageMeter meter;
    meter.record(Phase::Summary, 100, 20, 5);
    meter.record(Phase::Summary, 50, 10, 7);
    const auto s = meter.snapshot();
    REQUIRE(s.of(Phase::Summary).input_tokens == 150);
    REQUIRE(s.of(Phase::Summary).output_tokens == 30);
    REQUIRE(s.of(Phase::Summary).calls == 2);
    REQUIRE(s.of(Phase::Summary).wall_ms == 12);
}

TEST_CASE("reference row renders with totals in thousands") {
    UsageMeter meter;
    meter.record(Phase::Summary, 20800, 10010, 302690);
    const auto s = meter.snapshot();
    REQUIRE(s.of(Phase::Summary).total_tokens() == 30810);
    const std::string table = meter_report_text(s);
    REQUIRE(table.find("20.800") != std::string::npos);
    REQUIRE(table.find("10.010") != std::string::npos);
    REQUIRE(table.find("30.810") != std::string::npos);
    REQUIRE(table.find("302.690") != std::string::npos);
}

TEST_CASE("empty meter renders an all-zero total and -- phases") {
    const auto s = UsageMeter().snapshot();
    const std::string table = meter_report_text(s);
    REQUIRE(table.find("--") != std::string::npos);
    REQUIRE(table.find("0.000") != std::string::npos);
    const auto j = meter_report_json(s);
    REQUIRE(j["totals"]["calls"] == 0);
}

TEST_CASE("phases without records render as --") {
    UsageMeter meter;
    meter.record(Phase::Summary, 10, 5, 1);
    const std::string table = meter_report_text(meter.snapshot());
    // the Update row is entirely --
    const auto update_row = table.find("Update");
    REQUIRE(update_row != std::string::npos);
    const auto line_end = table.find('\n', update_row);
    const std::string row = table.substr(update_row, line_end - update_row);
    REQUIRE(row.find("--") != std::string::npos);
    REQUIRE(row.find("0.000") == std::string::npos);
}

TEST_CASE("json and text reports agree field for field") {
    UsageMeter meter;
    meter.record(Phase::Summary, 1234, 567, 89);
    meter.record(Phase::QA, 22, 11, 3);
    const auto s = meter.snapshot();
    const auto j = meter_report_json(s);
    const std::string table = meter_report_text(s);
    for (Phase p : {Phase::Summary, Phase::QA}) {
        const auto& pj = j["phases"][phase_name(p)];
        REQUIRE(table.find(detail::thousands(pj["input_tokens"].get<std::uint64_t>())) != std::string::npos);
        REQUIRE(table.find(detail::thousands(pj["output_tokens"].get<std::uint64_t>())) != std::string::npos);
        REQUIRE(table.find(std::to_string(pj["calls"].get<std::uint64_t>())) != std::string::npos);
    }
    REQUIRE(j["totals"]["input_tokens"] == 1256);
    REQUIRE(j["totals"]["output_tokens"] == 578);
}

TEST_CASE("grand totals equal phase sums") {
    UsageMeter meter;
    meter.record(Phase::Summary, 10, 1, 2);
    meter.record(Phase::Update, 20, 2, 3);
    meter.record(Phase::QA, 30, 3, 4);
    meter.record(Phase::Judge, 40, 4, 5);
    const auto s = meter.snapshot();
    const auto g = s.grand();
    REQUIRE(g.input_tokens == 100);
    REQUIRE(g.output_tokens == 10);
    REQUIRE(g.total_tokens() == 110);
    REQUIRE(g.calls == 4);
    // runtime covers the memory-management phases only
    REQUIRE(s.runtime_ms() == 5);
}

TEST_CASE("N concurrent recorders yield exactly N calls") {
    UsageMeter meter;
    constexpr int n = 64;
    std::vector<std::thread> threads;
    for (int i = 0; i < n; ++i)
        threads.emplace_back([&meter] { meter.record(Phase::Update, 1, 1, 1); });
    for (auto& t : threads) t.join();
    const auto s = meter.snapshot();
    REQUIRE(s.of(Phase::Update).calls == n);
    REQUIRE(s.of(Phase::Update).input_tokens == n);
}

TEST_CASE("merge adds meters componentwise") {
    UsageMeter a, b;
    a.record(Phase::Summary, 5, 2, 1);
    b.record(Phase::Summary, 7, 3, 2);
    b.record(Phase::Judge, 1, 1, 1);
    a.merge(b);
    const auto s = a.snapshot();
    REQUIRE(s.of(Phase::Summary).input_tokens == 12);
    REQUIRE(s.of(Phase::Summary).calls == 2);
    REQUIRE(s.of(Phase::Judge).calls == 1);
}
