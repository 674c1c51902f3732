// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "checks.hpp"

using namespace seqpack;
using namespace seqpack::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double budget_seconds, const std::function<Outcome()>& body)
{
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.ok && budget_seconds > 0 && secs > budget_seconds) {
        o = {false, o.detail + "; took " + std::to_string(secs) + " s, budget " + std::to_string(budget_seconds) + " s"};
    }
    std::ostringstream t;
    t << std::fixed << std::setprecision(2) << secs;
    std::cout << (o.ok ? "PASS " : "FAIL ") << name << " [" << t.str() << " s] " << o.detail << std::endl;
    if (!o.ok) ++failures;
}

Outcome from_check(const std::string& failure, const std::string& ok_detail)
{
    return failure.empty() ? Outcome{true, ok_detail} : Outcome{false, failure};
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(SEQPACK_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

int main()
{
    criterion("greedy_oracle_equivalence", 10.0, [] {
        return from_check(check_greedy_trace(1, 1000), "1000 instances, next_fit equals literal trace");
    });

    criterion("no_split_property", 10.0, [] {
        return from_check(check_no_split(2, 1000), "1000 corpora, greedy rows whole; split_count equals straddle oracle");
    });

    criterion("conservation", 0, [] {
        return from_check(check_conservation(3, 1000), "1000 corpora x 3 strategies, content + truncated = input");
    });

    criterion("bin_bounds", 0, [] {
        return from_check(check_bin_bounds(4, 1000), "1000 corpora, ceil(total/max) <= rows <= N, first_fit <= next_fit");
    });

    criterion("padding_to_greedy_ratio", 60.0, [] {
        // Long-tailed chat lengths: log-normal, median 350, clamped to [8, 4096].
        const auto lengths = lognormal_lengths(69000, 350.0, 1.5, 8, 4096, derive_seed(kDefaultSeed, SeedStream::synthetic));
        CompareOptions o;
        o.greedy_mode = FitMode::next_fit;
        std::size_t total = 0;
        for (auto l : lengths) total += l;
        const auto cmp = compare_strategies(lengths, CorpusTotals{lengths.size(), total, 0}, HardwareProfile{}, o);
        const double rows_ratio = static_cast<double>(cmp.reports[0].row_count) / static_cast<double>(cmp.reports[2].row_count);
        const double steps_ratio = static_cast<double>(cmp.reports[0].total_steps) / static_cast<double>(cmp.reports[2].total_steps);
        std::ostringstream d;
        d << std::fixed << std::setprecision(3) << "padding/greedy rows " << cmp.reports[0].row_count << "/"
          << cmp.reports[2].row_count << " = " << rows_ratio << " (steps " << steps_ratio << "; reference 1964/492 = "
          << 1964.0 / 492.0 << ")";
        return Outcome{rows_ratio >= 3.0 && rows_ratio <= 5.0, d.str()};
    });

    criterion("step_arithmetic", 0, [] {
        HardwareProfile p; // 32 devices, 2 per device, 2 accumulation steps, 4 epochs
        const auto s = estimate_steps(62848, p);
        const std::size_t eb = 32 * 2 * 2;
        const std::size_t per_epoch = 62848 / eb + (62848 % eb != 0 ? 1 : 0);
        const bool ok = s.steps_per_epoch == 491 && s.total_steps == 1964 && per_epoch == 491 && per_epoch * 4 == 1964;
        return Outcome{ok, "62848 rows -> (" + std::to_string(s.steps_per_epoch) + ", " + std::to_string(s.total_steps) + ")"};
    });

    criterion("cli_determinism", 0, [] {
        const fs::path dir = fs::temp_directory_path() / ("seqpack-accept-" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
        Rng rng(7);
        write_text(dir / "in.jsonl", random_chat_jsonl(rng, 1500, 4, 60));
        std::string detail;
        bool ok = true;
        for (const char* strategy : {"padding", "random_packing", "greedy_packing"}) {
            for (const char* format : {"jsonl", "binary"}) {
                std::string outputs[2];
                for (int r = 0; r < 2; ++r) {
                    const auto out = dir / (std::string(strategy) + "-" + format + "-" + std::to_string(r));
                    const int code = run_cli(std::string("pack --strategy ") + strategy + " --format " + format +
                                             " --max-len 512 --seed 7 --threads 4 " + (dir / "in.jsonl").string() + " -o " + out.string());
                    if (code != 0) {
                        ok = false;
                        detail += std::string(strategy) + "/" + format + " exit " + std::to_string(code) + "; ";
                    }
                    outputs[r] = read_bytes(out / (std::string(format) == "binary" ? "rows.bin" : "rows.jsonl")) +
                                 read_bytes(out / "report.json");
                }
                if (outputs[0] != outputs[1] || outputs[0].empty()) {
                    ok = false;
                    detail += std::string(strategy) + "/" + format + " differs; ";
                }
            }
        }
        fs::remove_all(dir);
        return Outcome{ok, ok ? "3 strategies x {jsonl, binary}, byte-identical across two runs" : detail};
    });

    criterion("loss_mask_correctness", 0, [] {
        return from_check(check_loss_masks(8, 500), "500 conversations, all strategies' rows match label oracle; all-PAD rows zero");
    });

    criterion("diagnostics_lint", 0, [] {
        const std::size_t n = 400;
        const std::vector<std::size_t> lengths(n, 100);
        const std::vector<std::size_t> single(n, 1);
        bool ok = true;
        std::string detail;
        for (auto s : {Strategy::random_packing, Strategy::greedy_packing}) {
            const auto d = corpus_diagnostics(single, lengths, 4096, s);
            if (!d.has(DiagnosticLevel::strong_warning)) {
                ok = false;
                detail += "single-turn corpus not flagged under " + std::string(to_string(s)) + "; ";
            }
        }
        auto with_multi = [&](std::size_t multi) {
            std::vector<std::size_t> turns(n, 1);
            for (std::size_t i = 0; i < multi; ++i) turns[i] = 2;
            return corpus_diagnostics(turns, lengths, 4096, Strategy::greedy_packing);
        };
        // 1/20 exactly: no strong warning (and no warning at all).
        const auto twentieth = with_multi(n / 20);
        if (twentieth.has(DiagnosticLevel::strong_warning) || twentieth.has(DiagnosticLevel::warning)) {
            ok = false;
            detail += "1/20 flagged; ";
        }
        // Just below 1/20 warns; 1/40 exactly is not strong; just below 1/40 is strong.
        if (!with_multi(n / 20 - 1).has(DiagnosticLevel::warning)) ok = false, detail += "below 1/20 not warned; ";
        if (with_multi(n / 40).has(DiagnosticLevel::strong_warning)) ok = false, detail += "1/40 strong; ";
        if (!with_multi(n / 40 - 1).has(DiagnosticLevel::strong_warning)) ok = false, detail += "below 1/40 not strong; ";
        if (corpus_diagnostics(single, lengths, 4096, Strategy::padding).has(DiagnosticLevel::warning)) {
            ok = false;
            detail += "padding warned; ";
        }
        return Outcome{ok, ok ? "single-turn strong warning; thresholds exact at 1/40 and 1/20" : detail};
    });

    criterion("serialization_round_trip", 0, [] {
        return from_check(check_round_trip(10, 100), "100 runs, jsonl and binary reload to identical batches");
    });

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
