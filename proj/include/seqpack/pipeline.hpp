#pragma once

// End-to-end runs: ingest -> tokenize -> plan -> materialize -> emit -> report.

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqpack/corpus.hpp"
#include "seqpack/emit.hpp"
#include "seqpack/greedy_packing.hpp"
#include "seqpack/padding.hpp"
#include "seqpack/random_packing.hpp"
#include "seqpack/stats.hpp"
#include "seqpack/subprocess_tokenizer.hpp"
#include "seqpack/tokenizer.hpp"

namespace seqpack {

enum class TokenizerKind { reference, subprocess, pretokenized };

inline TokenizerKind parse_tokenizer_kind(std::string_view s)
{
    if (s == "reference") return TokenizerKind::reference;
    if (s == "subprocess") return TokenizerKind::subprocess;
    if (s == "pretokenized") return TokenizerKind::pretokenized;
    throw Error(ErrorKind::InvalidArgument, "unknown tokenizer '" + std::string(s) + "'");
}

inline std::string_view to_string(TokenizerKind k)
{
    switch (k) {
    case TokenizerKind::reference: return "reference";
    case TokenizerKind::subprocess: return "subprocess";
    case TokenizerKind::pretokenized: return "pretokenized";
    }
    return "unknown";
}

struct TokenizerConfig {
    TokenizerKind kind = TokenizerKind::reference;
    std::string command; // subprocess only
    std::uint32_t vocab_size = kDefaultVocabSize;
    std::uint64_t hash_seed = 0;
    SpecialTokens special;
};

struct RunConfig {
    std::vector<std::string> inputs;
    Strategy strategy = Strategy::greedy_packing;
    // Only meaningful with greedy_packing; unset means next_fit.
    std::optional<FitMode> greedy_mode;
    std::size_t model_max = kDefaultModelMax;
    std::size_t batch_size = 2;
    std::uint64_t seed = kDefaultSeed;
    std::string template_preset = "llama3";
    TokenizerConfig tokenizer;
    OutputFormat format = OutputFormat::jsonl;
    std::string out; // directory, or "-" for stdout
    bool drop_last = false;
    bool eos_per_pair = false;
    bool pad_then_eos = false;
    bool no_shuffle = false;
    bool mask_orphan_answers = false;
    bool position_ids = false;
    bool dynamic_pad = false;
    bool fold_system_into_first_user = false;
    HardwareProfile profile;
    std::size_t threads = 1;

    FitMode fit_mode() const { return greedy_mode.value_or(FitMode::next_fit); }
};

namespace detail {

inline void conflict_unless(bool ok, const std::string& what)
{
    if (!ok) throw Error(ErrorKind::ConfigConflict, what);
}

} // namespace detail

/// Checks that apply to every subcommand.
inline void validate_common(const RunConfig& c)
{
    if (c.model_max < 1) throw Error(ErrorKind::InvalidArgument, "model_max must be >= 1");
    if (c.batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch size must be >= 1");
    c.profile.validate();
    const bool pretok = c.tokenizer.kind == TokenizerKind::pretokenized;
    detail::conflict_unless(!(pretok && c.eos_per_pair), "--eos-per-pair has no effect on pre-tokenized input");
    detail::conflict_unless(!(pretok && c.fold_system_into_first_user),
                            "--fold-system-into-first-user has no effect on pre-tokenized input");
    detail::conflict_unless(c.tokenizer.kind != TokenizerKind::subprocess || !c.tokenizer.command.empty(),
                            "subprocess tokenizer needs --tokenizer-cmd");
    detail::conflict_unless(c.tokenizer.kind == TokenizerKind::subprocess || c.tokenizer.command.empty(),
                            "--tokenizer-cmd needs --tokenizer subprocess");
    detail::conflict_unless(c.tokenizer.special.pad != c.tokenizer.special.eos, "PAD and EOS ids must differ");
    detail::conflict_unless(c.tokenizer.special.pad < c.tokenizer.vocab_size && c.tokenizer.special.eos < c.tokenizer.vocab_size,
                            "PAD/EOS ids must lie inside the vocabulary");
}

/// Strategy-specific flags must match the selected strategy.
inline void validate_for_pack(const RunConfig& c)
{
    validate_common(c);
    const auto s = c.strategy;
    detail::conflict_unless(!c.greedy_mode || s == Strategy::greedy_packing, "--greedy-mode requires --strategy greedy_packing");
    detail::conflict_unless(!c.dynamic_pad || s == Strategy::greedy_packing, "--dynamic-pad requires --strategy greedy_packing");
    detail::conflict_unless(!c.pad_then_eos || s == Strategy::padding, "--pad-then-eos requires --strategy padding");
    detail::conflict_unless(!c.no_shuffle || s == Strategy::random_packing, "--no-shuffle requires --strategy random_packing");
    detail::conflict_unless(!c.mask_orphan_answers || s == Strategy::random_packing,
                            "--mask-orphan-answers requires --strategy random_packing");
}

inline ChatTemplate chat_template_of(const RunConfig& c)
{
    return ChatTemplate::preset(c.template_preset);
}

inline std::unique_ptr<Tokenizer> make_tokenizer(const RunConfig& c)
{
    switch (c.tokenizer.kind) {
    case TokenizerKind::reference:
    case TokenizerKind::pretokenized: {
        if (c.tokenizer.special.pad != 0 || c.tokenizer.special.eos != 1) {
            if (c.tokenizer.kind == TokenizerKind::reference) {
                throw Error(ErrorKind::ConfigConflict, "the reference tokenizer fixes PAD=0 and EOS=1");
            }
        }
        if (c.tokenizer.kind == TokenizerKind::pretokenized) {
            // Pre-tokenized data brings its own ids; only the special ids and vocabulary bound matter.
            struct Passthrough final : Tokenizer {
                TokenizerConfig cfg;
                explicit Passthrough(TokenizerConfig c) : cfg(std::move(c)) {}
                std::vector<TokenId> encode(std::string_view) override
                {
                    throw Error(ErrorKind::TokenizerFailure, "pre-tokenized input cannot encode text");
                }
                SpecialTokens special_tokens() const override { return cfg.special; }
                std::uint32_t vocab_size() const override { return cfg.vocab_size; }
                bool concurrent() const override { return true; }
            };
            return std::make_unique<Passthrough>(c.tokenizer);
        }
        auto tmpl = chat_template_of(c);
        return std::make_unique<ReferenceTokenizer>(
            ReferenceTokenizer::for_template(tmpl, ReferenceTokenizerConfig{c.tokenizer.vocab_size, c.tokenizer.hash_seed}));
    }
    case TokenizerKind::subprocess:
        return std::make_unique<SubprocessTokenizer>(
            SubprocessTokenizerConfig{c.tokenizer.command, c.tokenizer.vocab_size, c.tokenizer.special});
    }
    throw Error(ErrorKind::InvalidArgument, "unknown tokenizer");
}

inline RecordSettings record_settings_of(const RunConfig& c)
{
    RecordSettings s;
    s.kind = c.tokenizer.kind == TokenizerKind::pretokenized ? InputKind::pretokenized : InputKind::conversations;
    s.chat_template = chat_template_of(c);
    s.encode.eos_per_pair = c.eos_per_pair;
    s.fold_system_into_first_user = c.fold_system_into_first_user;
    return s;
}

inline RowOptions row_options_of(const RunConfig& c)
{
    RowOptions o;
    o.special = c.tokenizer.special;
    o.pad_then_eos = c.pad_then_eos;
    o.mask_orphan_answers = c.mask_orphan_answers;
    o.position_ids = c.position_ids;
    return o;
}

inline CompareOptions compare_options_of(const RunConfig& c)
{
    CompareOptions o;
    o.model_max = c.model_max;
    o.batch_size = c.batch_size;
    o.seed = c.seed;
    o.greedy_mode = c.fit_mode();
    o.shuffle_stream = !c.no_shuffle;
    o.dynamic_pad = c.dynamic_pad;
    o.drop_last = c.drop_last;
    return o;
}

inline Plan plan_for(const RunConfig& c, const std::vector<std::size_t>& lengths)
{
    return plan_strategy(c.strategy, lengths, compare_options_of(c));
}

/// Materializes and writes one batch at a time.
template <typename Source>
std::size_t emit_plan(const Plan& plan, Source& source, const RowOptions& options, RowSink& sink)
{
    std::size_t rows = 0;
    for (const auto& batch : plan.batches) {
        const auto b = materialize_batch(batch, source, options);
        rows += b.rows.size();
        sink.write(b);
    }
    sink.finish();
    return rows;
}

struct PackResult {
    PackingReport report;
    CorpusDiagnostics diagnostics;
};

/// Packs an in-memory corpus, with the same plan and emission as run_pack.
inline PackResult pack_in_memory(const std::vector<TokenizedConversation>& corpus, const RunConfig& config, RowSink& sink)
{
    validate_for_pack(config);
    const auto lengths = lengths_of(corpus);
    const auto plan = plan_for(config, lengths);
    VectorSource source(corpus);
    emit_plan(plan, source, row_options_of(config), sink);
    PackResult result;
    result.report = make_report(config.strategy, plan, totals_of(corpus), config.profile, config.drop_last);
    std::vector<std::size_t> turns;
    for (const auto& c : corpus) turns.push_back(c.turn_count);
    result.diagnostics = corpus_diagnostics(turns, lengths, config.model_max, config.strategy);
    return result;
}

/// Collects emitted batches in memory.
class CollectingSink final : public RowSink {
public:
    void write(const Batch& batch) override { batches.push_back(batch); }
    std::vector<Batch> batches;
};

inline PackResult run_pack(const RunConfig& config, RowSink& sink)
{
    validate_for_pack(config);
    auto tokenizer = make_tokenizer(config);
    const auto settings = record_settings_of(config);
    const auto index = scan_corpus(config.inputs, settings, *tokenizer, config.threads);
    const auto lengths = index.lengths();
    const auto plan = plan_for(config, lengths);
    FileSource source(index, settings, *tokenizer);
    emit_plan(plan, source, row_options_of(config), sink);

    PackResult result;
    result.report = make_report(config.strategy, plan, index.totals(), config.profile, config.drop_last);
    result.diagnostics = corpus_diagnostics(index.turn_counts(), lengths, config.model_max, config.strategy);
    result.diagnostics.dropped_trailing_user = index.dropped_trailing_user;
    return result;
}

inline Comparison run_compare(const RunConfig& config)
{
    validate_common(config);
    auto tokenizer = make_tokenizer(config);
    const auto index = scan_corpus(config.inputs, record_settings_of(config), *tokenizer, config.threads);
    return compare_strategies(index.lengths(), index.totals(), config.profile, compare_options_of(config));
}

inline CorpusDiagnostics run_diagnose(const RunConfig& config)
{
    validate_common(config);
    auto tokenizer = make_tokenizer(config);
    const auto index = scan_corpus(config.inputs, record_settings_of(config), *tokenizer, config.threads);
    auto d = corpus_diagnostics(index.turn_counts(), index.lengths(), config.model_max, config.strategy);
    d.dropped_trailing_user = index.dropped_trailing_user;
    return d;
}

/// Applies a JSON config file on top of `base`. Keys mirror the long CLI flag
/// names with '-' replaced by '_'.
inline RunConfig apply_config_json(RunConfig base, const nlohmann::json& j)
{
    if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "inputs") base.inputs = v.get<std::vector<std::string>>();
        else if (key == "strategy") base.strategy = parse_strategy(v.get<std::string>());
        else if (key == "greedy_mode") base.greedy_mode = parse_fit_mode(v.get<std::string>());
        else if (key == "max_len") base.model_max = v.get<std::size_t>();
        else if (key == "batch_size") base.batch_size = v.get<std::size_t>();
        else if (key == "seed") base.seed = v.get<std::uint64_t>();
        else if (key == "template") base.template_preset = v.get<std::string>();
        else if (key == "tokenizer") base.tokenizer.kind = parse_tokenizer_kind(v.get<std::string>());
        else if (key == "tokenizer_cmd") base.tokenizer.command = v.get<std::string>();
        else if (key == "vocab_size") base.tokenizer.vocab_size = v.get<std::uint32_t>();
        else if (key == "hash_seed") base.tokenizer.hash_seed = v.get<std::uint64_t>();
        else if (key == "pad_id") base.tokenizer.special.pad = v.get<TokenId>();
        else if (key == "eos_id") base.tokenizer.special.eos = v.get<TokenId>();
        else if (key == "format") base.format = parse_output_format(v.get<std::string>());
        else if (key == "out") base.out = v.get<std::string>();
        else if (key == "drop_last") base.drop_last = v.get<bool>();
        else if (key == "eos_per_pair") base.eos_per_pair = v.get<bool>();
        else if (key == "pad_then_eos") base.pad_then_eos = v.get<bool>();
        else if (key == "no_shuffle") base.no_shuffle = v.get<bool>();
        else if (key == "mask_orphan_answers") base.mask_orphan_answers = v.get<bool>();
        else if (key == "position_ids") base.position_ids = v.get<bool>();
        else if (key == "dynamic_pad") base.dynamic_pad = v.get<bool>();
        else if (key == "fold_system_into_first_user") base.fold_system_into_first_user = v.get<bool>();
        else if (key == "threads") base.threads = v.get<std::size_t>();
        else if (key == "profile") base.profile = profile_from_json(v);
        else throw Error(ErrorKind::InvalidArgument, "unknown config key '" + key + "'");
    }
    return base;
}

} // namespace seqpack
