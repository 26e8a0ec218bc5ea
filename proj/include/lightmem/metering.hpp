#pragma once
// Phase-tagged accounting of tokens, calls, and wall time.

#include <array>
#include <cstdint>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lightmem/core.hpp"

namespace lightmem {

struct PhaseTotals {
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    std::uint64_t calls = 0;
    std::uint64_t wall_ms = 0;

    std::uint64_t total_tokens() const { return input_tokens + output_tokens; }
};

struct MeterSnapshot {
    std::array<PhaseTotals, 4> phases{};

    const PhaseTotals& of(Phase p) const { return phases[static_cast<std::size_t>(p)]; }

    PhaseTotals grand() const {
        PhaseTotals g;
        for (const auto& a : phases) {
            g.input_tokens += a.input_tokens;
            g.output_tokens += a.output_tokens;
            g.calls += a.calls;
            g.wall_ms += a.wall_ms;
        }
        return g;
    }

    // Wall time of the memory-management phases only; retrieval/QA excluded.
    std::uint64_t runtime_ms() const {
        return of(Phase::Summary).wall_ms + of(Phase::Update).wall_ms;
    }
};

class UsageMeter {
public:
    void record(Phase phase, std::uint64_t in_tokens, std::uint64_t out_tokens, std::uint64_t wall_ms = 0) {
        std::lock_guard<std::mutex> lock(mu_);
        auto& a = snap_.phases[static_cast<std::size_t>(phase)];
        a.input_tokens += in_tokens;
        a.output_tokens += out_tokens;
        a.calls += 1;
        a.wall_ms += wall_ms;
    }

    void record(const UsageRecord& r) { record(r.phase, r.input_tokens, r.output_tokens, r.wall_ms); }

    void merge(const UsageMeter& other) {
        MeterSnapshot o = other.snapshot();
        std::lock_guard<std::mutex> lock(mu_);
        for (std::size_t i = 0; i < o.phases.size(); ++i) {
            snap_.phases[i].input_tokens += o.phases[i].input_tokens;
            snap_.phases[i].output_tokens += o.phases[i].output_tokens;
            snap_.phases[i].calls += o.phases[i].calls;
            snap_.phases[i].wall_ms += o.phases[i].wall_ms;
        }
    }

    MeterSnapshot snapshot() const {
        std::lock_guard<std::mutex> lock(mu_);
        return snap_;
    }

    std::uint64_t calls(Phase p) const { return snapshot().of(p).calls; }

private:
    mutable std::mutex mu_;
    MeterSnapshot snap_;
};

namespace detail {

// Tokens rendered in thousands with 3 decimals, per the report layout.
inline std::string thousands(std::uint64_t tokens) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << (static_cast<double>(tokens) / 1000.0);
    return os.str();
}

inline std::string seconds(std::uint64_t ms) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << (static_cast<double>(ms) / 1000.0);
    return os.str();
}

} // namespace detail

inline nlohmann::json meter_report_json(const MeterSnapshot& s) {
    nlohmann::json phases = nlohmann::json::object();
    for (Phase p : {Phase::Summary, Phase::Update, Phase::QA, Phase::Judge}) {
        const auto& a = s.of(p);
        phases[phase_name(p)] = {
            {"input_tokens", a.input_tokens},
            {"output_tokens", a.output_tokens},
            {"total_tokens", a.total_tokens()},
            {"calls", a.calls},
            {"time_s", detail::seconds(a.wall_ms)},
        };
    }
    const auto g = s.grand();
    return nlohmann::json{
        {"schema_version", 1},
        {"phases", phases},
        {"totals",
         {{"input_tokens", g.input_tokens},
          {"output_tokens", g.output_tokens},
          {"total_tokens", g.total_tokens()},
          {"calls", g.calls},
          {"time_s", detail::seconds(g.wall_ms)}}},
        {"runtime_s", detail::seconds(s.runtime_ms())},
    };
}

// Aligned-text table mirroring the usual efficiency columns; phases without
// any recorded call render as "--".
inline std::string meter_report_text(const MeterSnapshot& s) {
    std::ostringstream os;
    os << std::left << std::setw(10) << "Phase" << std::right << std::setw(12) << "In (k)" << std::setw(12)
       << "Out (k)" << std::setw(12) << "Total (k)" << std::setw(10) << "Calls" << std::setw(12) << "Time (s)"
       << '\n';
    auto row = [&os](const std::string& name, const PhaseTotals& a, bool absent) {
        os << std::left << std::setw(10) << name << std::right;
        if (absent) {
            for (int w : {12, 12, 12, 10, 12}) os << std::setw(w) << "--";
        } else {
            os << std::setw(12) << detail::thousands(a.input_tokens) << std::setw(12)
               << detail::thousands(a.output_tokens) << std::setw(12) << detail::thousands(a.total_tokens())
               << std::setw(10) << a.calls << std::setw(12) << detail::seconds(a.wall_ms);
        }
        os << '\n';
    };
    for (Phase p : {Phase::Summary, Phase::Update, Phase::QA, Phase::Judge}) {
        const auto& a = s.of(p);
        std::string name = phase_name(p);
        name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
        row(name, a, a.calls == 0);
    }
    const auto g = s.grand();
    row("Total", g, false);
    os << "Runtime (memory management): " << detail::seconds(s.runtime_ms()) << " s\n";
    return os.str();
}

} // namespace lightmem
