#pragma once

// Step and time accounting per strategy, side-by-side comparison against
// padding, and corpus diagnostics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqpack/errors.hpp"
#include "seqpack/greedy_packing.hpp"
#include "seqpack/padding.hpp"
#include "seqpack/random_packing.hpp"
#include "seqpack/rows.hpp"

namespace seqpack {

enum class Strategy { padding, random_packing, greedy_packing };

inline std::string_view to_string(Strategy s)
{
    switch (s) {
    case Strategy::padding: return "padding";
    case Strategy::random_packing: return "random_packing";
    case Strategy::greedy_packing: return "greedy_packing";
    }
    return "unknown";
}

inline Strategy parse_strategy(std::string_view s)
{
    if (s == "padding") return Strategy::padding;
    if (s == "random_packing") return Strategy::random_packing;
    if (s == "greedy_packing") return Strategy::greedy_packing;
    throw Error(ErrorKind::InvalidArgument, "unknown strategy '" + std::string(s) + "'");
}

inline FitMode parse_fit_mode(std::string_view s)
{
    if (s == "next_fit") return FitMode::next_fit;
    if (s == "first_fit") return FitMode::first_fit;
    throw Error(ErrorKind::InvalidArgument, "unknown greedy mode '" + std::string(s) + "'");
}

/// Per-strategy override or one value for all strategies.
struct PerStrategyValue {
    std::optional<double> all;
    std::map<std::string, double> by_strategy;

    std::optional<double> get(Strategy s) const
    {
        if (auto it = by_strategy.find(std::string(to_string(s))); it != by_strategy.end()) return it->second;
        return all;
    }
    bool empty() const { return !all && by_strategy.empty(); }
};

struct HardwareProfile {
    std::size_t devices = 32;
    std::size_t per_device_batch = 2;
    std::size_t grad_accumulation = 2;
    std::size_t epochs = 4;
    PerStrategyValue measured_steps_per_second;
    // A wall-clock figure to set the projection against, e.g. a previously measured run.
    PerStrategyValue reference_seconds;

    std::size_t effective_batch() const { return devices * per_device_batch * grad_accumulation; }

    void validate() const
    {
        if (devices < 1 || per_device_batch < 1 || grad_accumulation < 1 || epochs < 1) {
            throw Error(ErrorKind::InvalidArgument, "profile integers must all be >= 1");
        }
        auto positive = [](const PerStrategyValue& v) {
            if (v.all && !(*v.all > 0)) return false;
            return std::all_of(v.by_strategy.begin(), v.by_strategy.end(), [](const auto& kv) { return kv.second > 0; });
        };
        if (!positive(measured_steps_per_second)) {
            throw Error(ErrorKind::InvalidArgument, "steps per second must be > 0");
        }
        if (!positive(reference_seconds)) {
            throw Error(ErrorKind::InvalidArgument, "reference seconds must be > 0");
        }
    }
};

namespace detail {

inline PerStrategyValue per_strategy_from_json(const nlohmann::json& j)
{
    PerStrategyValue v;
    if (j.is_number()) {
        v.all = j.get<double>();
    } else if (j.is_object()) {
        for (const auto& [key, value] : j.items()) {
            parse_strategy(key);
            v.by_strategy[key] = value.get<double>();
        }
    } else if (!j.is_null()) {
        throw Error(ErrorKind::InvalidArgument, "expected a number or a per-strategy object");
    }
    return v;
}

inline nlohmann::json per_strategy_to_json(const PerStrategyValue& v)
{
    if (v.by_strategy.empty()) return v.all ? nlohmann::json(*v.all) : nlohmann::json();
    nlohmann::json j(v.by_strategy);
    return j;
}

} // namespace detail

inline HardwareProfile profile_from_json(const nlohmann::json& j)
{
    HardwareProfile p;
    if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "profile must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "devices") p.devices = value.get<std::size_t>();
        else if (key == "per_device_batch") p.per_device_batch = value.get<std::size_t>();
        else if (key == "grad_accumulation") p.grad_accumulation = value.get<std::size_t>();
        else if (key == "epochs") p.epochs = value.get<std::size_t>();
        else if (key == "measured_steps_per_second") p.measured_steps_per_second = detail::per_strategy_from_json(value);
        else if (key == "reference_seconds") p.reference_seconds = detail::per_strategy_from_json(value);
        else throw Error(ErrorKind::InvalidArgument, "unknown profile key '" + key + "'");
    }
    p.validate();
    return p;
}

inline nlohmann::json to_json(const HardwareProfile& p)
{
    nlohmann::json j{{"devices", p.devices},
                     {"per_device_batch", p.per_device_batch},
                     {"grad_accumulation", p.grad_accumulation},
                     {"epochs", p.epochs},
                     {"effective_batch", p.effective_batch()}};
    if (!p.measured_steps_per_second.empty()) j["measured_steps_per_second"] = detail::per_strategy_to_json(p.measured_steps_per_second);
    if (!p.reference_seconds.empty()) j["reference_seconds"] = detail::per_strategy_to_json(p.reference_seconds);
    return j;
}

struct StepEstimate {
    std::size_t steps_per_epoch = 0;
    std::size_t total_steps = 0;

    bool operator==(const StepEstimate&) const = default;
};

inline StepEstimate estimate_steps(std::size_t row_count, const HardwareProfile& profile, bool drop_last = false)
{
    profile.validate();
    const std::size_t eb = profile.effective_batch();
    StepEstimate s;
    s.steps_per_epoch = drop_last ? row_count / eb : (row_count + eb - 1) / eb;
    s.total_steps = s.steps_per_epoch * profile.epochs;
    return s;
}

inline double estimate_time(std::size_t total_steps, double steps_per_second)
{
    if (!(steps_per_second > 0)) {
        throw Error(ErrorKind::InvalidArgument, "steps per second must be > 0");
    }
    return static_cast<double>(total_steps) / steps_per_second;
}

struct PackingReport {
    std::string strategy;
    std::size_t conversation_count = 0;
    std::size_t input_tokens = 0;
    std::size_t input_text_tokens = 0; // message bodies only, no template tokens
    std::size_t batch_count = 0;
    std::size_t row_count = 0;
    std::size_t total_tokens = 0;
    std::size_t content_tokens = 0;
    std::size_t pad_tokens = 0;
    double utilization = 0.0;
    std::size_t truncation_count = 0;
    std::size_t truncated_tokens = 0;
    std::size_t split_count = 0;
    std::size_t dropped_rows = 0;
    std::size_t dropped_tokens = 0;
    std::size_t epochs = 0;
    std::size_t effective_batch = 0;
    std::size_t steps_per_epoch = 0;
    std::size_t total_steps = 0;
    std::optional<double> steps_per_second;
    std::optional<double> projected_seconds;
    std::optional<double> samples_per_second;
    std::optional<double> reference_seconds;
    // projected / reference
    std::optional<double> reference_ratio;
    std::vector<std::string> notes;
};

/// Corpus-level totals the report needs besides the plan.
struct CorpusTotals {
    std::size_t conversations = 0;
    std::size_t tokens = 0;
    std::size_t text_tokens = 0;
};

inline PackingReport make_report(Strategy strategy, const Plan& plan, const CorpusTotals& corpus,
                                 const HardwareProfile& profile, bool drop_last)
{
    PackingReport r;
    r.strategy = std::string(to_string(strategy));
    r.conversation_count = corpus.conversations;
    r.input_tokens = corpus.tokens;
    r.input_text_tokens = corpus.text_tokens;
    r.batch_count = plan.batches.size();
    for (const auto& batch : plan.batches) {
        r.row_count += batch.rows.size();
        r.total_tokens += batch.rows.size() * batch.row_length;
        for (const auto& row : batch.rows) {
            r.content_tokens += row.content_length();
            if (row.truncated_tokens > 0) {
                ++r.truncation_count;
                r.truncated_tokens += row.truncated_tokens;
            }
        }
    }
    r.pad_tokens = r.total_tokens - r.content_tokens;
    r.utilization = r.total_tokens == 0 ? 0.0 : static_cast<double>(r.content_tokens) / static_cast<double>(r.total_tokens);
    r.split_count = plan.split_count;
    r.dropped_rows = plan.dropped_rows;
    r.dropped_tokens = plan.dropped_tokens;

    r.epochs = profile.epochs;
    r.effective_batch = profile.effective_batch();
    const auto steps = estimate_steps(r.row_count + r.dropped_rows, profile, drop_last);
    r.steps_per_epoch = steps.steps_per_epoch;
    r.total_steps = steps.total_steps;

    r.steps_per_second = profile.measured_steps_per_second.get(strategy);
    if (r.steps_per_second) {
        r.projected_seconds = estimate_time(r.total_steps, *r.steps_per_second);
        r.samples_per_second = *r.steps_per_second * static_cast<double>(r.effective_batch);
    }
    r.reference_seconds = profile.reference_seconds.get(strategy);
    if (r.projected_seconds && r.reference_seconds) {
        r.reference_ratio = *r.projected_seconds / *r.reference_seconds;
        if (std::abs(*r.reference_ratio - 1.0) > 0.05) {
            std::ostringstream note;
            note << std::fixed << std::setprecision(2) << "projected time (total_steps / steps_per_second) is "
                 << *r.reference_ratio << "x the reference time";
            r.notes.push_back(note.str());
        }
    }
    return r;
}

inline nlohmann::json to_json(const PackingReport& r)
{
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
    return nlohmann::json{{"strategy", r.strategy},
                          {"conversation_count", r.conversation_count},
                          {"input_tokens", r.input_tokens},
                          {"input_text_tokens", r.input_text_tokens},
                          {"batch_count", r.batch_count},
                          {"row_count", r.row_count},
                          {"total_tokens", r.total_tokens},
                          {"content_tokens", r.content_tokens},
                          {"pad_tokens", r.pad_tokens},
                          {"utilization", r.utilization},
                          {"truncation_count", r.truncation_count},
                          {"truncated_tokens", r.truncated_tokens},
                          {"split_count", r.split_count},
                          {"dropped_rows", r.dropped_rows},
                          {"dropped_tokens", r.dropped_tokens},
                          {"epochs", r.epochs},
                          {"effective_batch", r.effective_batch},
                          {"steps_per_epoch", r.steps_per_epoch},
                          {"total_steps", r.total_steps},
                          {"steps_per_second", opt(r.steps_per_second)},
                          {"projected_seconds", opt(r.projected_seconds)},
                          {"samples_per_second", opt(r.samples_per_second)},
                          {"reference_seconds", opt(r.reference_seconds)},
                          {"reference_ratio", opt(r.reference_ratio)},
                          {"notes", r.notes}};
}

struct CompareOptions {
    std::size_t model_max = kDefaultModelMax;
    std::size_t batch_size = 2;
    std::uint64_t seed = kDefaultSeed;
    FitMode greedy_mode = FitMode::next_fit;
    bool shuffle_stream = true;
    bool dynamic_pad = false;
    bool drop_last = false;
};

inline Plan plan_strategy(Strategy strategy, const std::vector<std::size_t>& lengths, const CompareOptions& o)
{
    switch (strategy) {
    case Strategy::padding:
        return plan_padding(lengths, PaddingOptions{o.batch_size, o.model_max, o.seed, true, o.drop_last});
    case Strategy::random_packing:
        return plan_random_packing(lengths, RandomPackingOptions{o.batch_size, o.model_max, o.seed, o.shuffle_stream, o.drop_last});
    case Strategy::greedy_packing:
        return plan_greedy_packing(lengths,
                                   GreedyPackingOptions{o.batch_size, o.model_max, o.seed, o.greedy_mode, o.dynamic_pad, o.drop_last});
    }
    throw Error(ErrorKind::InvalidArgument, "unknown strategy");
}

struct StrategyDelta {
    std::string strategy;
    long long row_count = 0;
    long long total_steps = 0;
    double utilization = 0.0;
    // padding steps / this strategy's steps
    std::optional<double> step_ratio;
    std::optional<double> projected_seconds;
};

struct Comparison {
    HardwareProfile profile;
    std::size_t model_max = 0;
    std::uint64_t seed = 0;
    std::vector<PackingReport> reports; // padding, random_packing, greedy_packing
    std::vector<StrategyDelta> deltas;  // vs padding
};

inline Comparison compare_strategies(const std::vector<std::size_t>& lengths, const CorpusTotals& totals,
                                     const HardwareProfile& profile, const CompareOptions& options)
{
    profile.validate();
    Comparison c;
    c.profile = profile;
    c.model_max = options.model_max;
    c.seed = options.seed;
    for (auto s : {Strategy::padding, Strategy::random_packing, Strategy::greedy_packing}) {
        c.reports.push_back(make_report(s, plan_strategy(s, lengths, options), totals, profile, options.drop_last));
    }
    const auto& base = c.reports.front();
    for (const auto& r : c.reports) {
        StrategyDelta d;
        d.strategy = r.strategy;
        d.row_count = static_cast<long long>(r.row_count) - static_cast<long long>(base.row_count);
        d.total_steps = static_cast<long long>(r.total_steps) - static_cast<long long>(base.total_steps);
        d.utilization = r.utilization - base.utilization;
        if (r.total_steps > 0) d.step_ratio = static_cast<double>(base.total_steps) / static_cast<double>(r.total_steps);
        if (r.projected_seconds && base.projected_seconds) d.projected_seconds = *r.projected_seconds - *base.projected_seconds;
        c.deltas.push_back(d);
    }
    return c;
}

inline CorpusTotals totals_of(const std::vector<TokenizedConversation>& seqs)
{
    CorpusTotals t;
    t.conversations = seqs.size();
    for (const auto& s : seqs) {
        t.tokens += s.length();
        t.text_tokens += s.text_tokens;
    }
    return t;
}

inline Comparison compare_strategies(const std::vector<TokenizedConversation>& corpus, const HardwareProfile& profile,
                                     const CompareOptions& options)
{
    return compare_strategies(lengths_of(corpus), totals_of(corpus), profile, options);
}

inline nlohmann::json to_json(const Comparison& c)
{
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& r : c.reports) reports.push_back(to_json(r));
    nlohmann::json deltas = nlohmann::json::array();
    for (const auto& d : c.deltas) {
        deltas.push_back(nlohmann::json{{"strategy", d.strategy},
                                        {"row_count", d.row_count},
                                        {"total_steps", d.total_steps},
                                        {"utilization", d.utilization},
                                        {"step_ratio", d.step_ratio ? nlohmann::json(*d.step_ratio) : nlohmann::json()},
                                        {"projected_seconds", d.projected_seconds ? nlohmann::json(*d.projected_seconds) : nlohmann::json()}});
    }
    return nlohmann::json{{"profile", to_json(c.profile)},
                          {"model_max", c.model_max},
                          {"seed", c.seed},
                          {"reports", reports},
                          {"deltas_vs_padding", deltas}};
}

namespace detail {

inline std::string fmt_fixed(double v, int precision)
{
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

inline std::string fmt_signed(long long v)
{
    return (v > 0 ? "+" : "") + std::to_string(v);
}

inline std::string fmt_signed(double v, int precision)
{
    return (v > 0 ? "+" : "") + fmt_fixed(v, precision);
}

inline std::string pad_cell(const std::string& s, std::size_t width)
{
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

} // namespace detail

/// Text table with the columns of a training-time comparison; deltas against
/// padding in parentheses.
inline std::string render_table(const Comparison& c)
{
    const std::vector<std::string> header{"Strategy", "Rows",  "Utilization", "Splits", "Truncated",
                                          "Epoch",    "Total Steps", "Total Training Time (s)", "Steps per Second",
                                          "Samples per Second"};
    std::vector<std::vector<std::string>> cells;
    for (std::size_t i = 0; i < c.reports.size(); ++i) {
        const auto& r = c.reports[i];
        const auto& d = c.deltas[i];
        const bool base = i == 0;
        std::vector<std::string> row;
        row.push_back(r.strategy);
        row.push_back(std::to_string(r.row_count) + (base ? "" : " (" + detail::fmt_signed(d.row_count) + ")"));
        row.push_back(detail::fmt_fixed(r.utilization, 4));
        row.push_back(std::to_string(r.split_count));
        row.push_back(std::to_string(r.truncation_count));
        row.push_back(std::to_string(r.epochs));
        row.push_back(std::to_string(r.total_steps) + (base ? "" : " (" + detail::fmt_signed(d.total_steps) + ")"));
        std::string time = r.projected_seconds ? detail::fmt_fixed(*r.projected_seconds, 2) : "-";
        if (!base && d.projected_seconds) time += " (" + detail::fmt_signed(*d.projected_seconds, 2) + ")";
        row.push_back(time);
        row.push_back(r.steps_per_second ? detail::fmt_fixed(*r.steps_per_second, 3) : "-");
        row.push_back(r.samples_per_second ? detail::fmt_fixed(*r.samples_per_second, 3) : "-");
        cells.push_back(std::move(row));
    }
    std::vector<std::size_t> widths(header.size());
    for (std::size_t k = 0; k < header.size(); ++k) {
        widths[k] = header[k].size();
        for (const auto& row : cells) widths[k] = std::max(widths[k], row[k].size());
    }
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& row) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            os << (k == 0 ? "" : " | ") << detail::pad_cell(row[k], widths[k]);
        }
        os << '\n';
    };
    os << "model_max=" << c.model_max << " seed=" << c.seed << " effective_batch=" << c.profile.effective_batch()
       << " (" << c.profile.devices << " devices x " << c.profile.per_device_batch << " x "
       << c.profile.grad_accumulation << " grad acc)\n";
    line(header);
    std::size_t total_width = 0;
    for (auto w : widths) total_width += w + 3;
    os << std::string(total_width - 3, '-') << '\n';
    for (const auto& row : cells) line(row);
    for (const auto& r : c.reports) {
        if (r.reference_seconds) {
            os << r.strategy << ": reference time " << detail::fmt_fixed(*r.reference_seconds, 2) << " s";
            if (r.reference_ratio) os << ", projection/reference = " << detail::fmt_fixed(*r.reference_ratio, 3);
            os << '\n';
        }
        for (const auto& n : r.notes) os << r.strategy << ": NOTE " << n << '\n';
    }
    return os.str();
}

enum class DiagnosticLevel { info, warning, strong_warning };

inline std::string_view to_string(DiagnosticLevel l)
{
    switch (l) {
    case DiagnosticLevel::info: return "info";
    case DiagnosticLevel::warning: return "warning";
    case DiagnosticLevel::strong_warning: return "strong_warning";
    }
    return "unknown";
}

struct Diagnostic {
    DiagnosticLevel level = DiagnosticLevel::info;
    std::string code;
    std::string message;
};

struct HistogramBucket {
    std::size_t upper = 0; // inclusive; 0 marks the oversize bucket
    std::size_t count = 0;
};

struct CorpusDiagnostics {
    std::size_t conversation_count = 0;
    std::size_t multi_turn_count = 0;
    double multi_turn_fraction = 0.0;
    std::size_t oversize_count = 0;
    std::size_t dropped_trailing_user = 0;
    std::size_t min_length = 0;
    std::size_t max_length = 0;
    std::size_t median_length = 0;
    std::vector<HistogramBucket> histogram;
    std::vector<Diagnostic> diagnostics;

    bool has(DiagnosticLevel level) const
    {
        return std::any_of(diagnostics.begin(), diagnostics.end(), [&](const Diagnostic& d) { return d.level == level; });
    }
};

/// Multi-turn share of the corpus checked against 1/20 (warning) and 1/40
/// (strong warning) when a packing strategy is selected; padding gets an
/// informational note instead.
inline CorpusDiagnostics corpus_diagnostics(const std::vector<std::size_t>& turn_counts,
                                            const std::vector<std::size_t>& lengths, std::size_t model_max,
                                            Strategy strategy)
{
    if (turn_counts.size() != lengths.size()) {
        throw Error(ErrorKind::LengthMismatch, "turn counts and lengths differ in size");
    }
    CorpusDiagnostics d;
    const std::size_t n = turn_counts.size();
    d.conversation_count = n;
    d.multi_turn_count = static_cast<std::size_t>(std::count_if(turn_counts.begin(), turn_counts.end(), [](std::size_t m) { return m >= 2; }));
    d.multi_turn_fraction = n == 0 ? 0.0 : static_cast<double>(d.multi_turn_count) / static_cast<double>(n);

    for (std::size_t upper = 64;; upper *= 2) {
        d.histogram.push_back(HistogramBucket{std::min(upper, model_max), 0});
        if (upper >= model_max) break;
    }
    d.histogram.push_back(HistogramBucket{0, 0});
    for (auto len : lengths) {
        if (len > model_max) {
            ++d.oversize_count;
            ++d.histogram.back().count;
            continue;
        }
        for (auto& b : d.histogram) {
            if (len <= b.upper) {
                ++b.count;
                break;
            }
        }
    }
    if (!lengths.empty()) {
        auto sorted = lengths;
        std::sort(sorted.begin(), sorted.end());
        d.min_length = sorted.front();
        d.max_length = sorted.back();
        d.median_length = sorted[(sorted.size() - 1) / 2];
    }
    if (d.oversize_count > 0) {
        d.diagnostics.push_back({DiagnosticLevel::info, "oversize",
                                 std::to_string(d.oversize_count) + " conversation(s) exceed model_max=" +
                                     std::to_string(model_max) + " and will be truncated"});
    }
    if (n == 0) return d;

    // Exact rational comparisons: multi/n < 1/40 and multi/n < 1/20.
    const bool below_strong = d.multi_turn_count * 40 < n;
    const bool below_weak = d.multi_turn_count * 20 < n;
    const std::string share = std::to_string(d.multi_turn_count) + "/" + std::to_string(n) + " conversations are multi-turn";
    if (strategy == Strategy::padding) {
        if (below_weak) {
            d.diagnostics.push_back({DiagnosticLevel::info, "single_turn_corpus",
                                     share + "; packing this corpus would risk few-shot degradation (not applicable to padding)"});
        }
    } else if (below_strong) {
        d.diagnostics.push_back({DiagnosticLevel::strong_warning, "single_turn_corpus",
                                 share + " (below 1/40); packing a (nearly) single-turn corpus can degrade few-shot "
                                         "performance; mix in multi-turn conversations up to at least 1/20"});
    } else if (below_weak) {
        d.diagnostics.push_back({DiagnosticLevel::warning, "single_turn_corpus",
                                 share + " (below 1/20); packing may degrade few-shot performance; consider raising "
                                         "the multi-turn share to 1/20"});
    }
    return d;
}

inline nlohmann::json to_json(const CorpusDiagnostics& d)
{
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& b : d.histogram) {
        if (b.upper == 0) hist.push_back(nlohmann::json{{"bucket", "oversize"}, {"count", b.count}});
        else hist.push_back(nlohmann::json{{"bucket", "<=" + std::to_string(b.upper)}, {"count", b.count}});
    }
    nlohmann::json diags = nlohmann::json::array();
    for (const auto& x : d.diagnostics) {
        diags.push_back(nlohmann::json{{"level", to_string(x.level)}, {"code", x.code}, {"message", x.message}});
    }
    return nlohmann::json{{"conversation_count", d.conversation_count},
                          {"multi_turn_count", d.multi_turn_count},
                          {"multi_turn_fraction", d.multi_turn_fraction},
                          {"oversize_count", d.oversize_count},
                          {"dropped_trailing_user", d.dropped_trailing_user},
                          {"min_length", d.min_length},
                          {"median_length", d.median_length},
                          {"max_length", d.max_length},
                          {"length_histogram", hist},
                          {"diagnostics", diags}};
}

} // namespace seqpack
