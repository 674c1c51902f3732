// seqpack: pack chat SFT corpora into training batches.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqpack/seqpack.hpp"

namespace fs = std::filesystem;
using namespace seqpack;

namespace {

int exit_code_for(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::InputNotFound: return 2;
    case ErrorKind::ConfigConflict:
    case ErrorKind::InvalidArgument: return 4;
    case ErrorKind::IoFailure: return 1;
    default: return 3;
    }
}

nlohmann::json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InputNotFound, "cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::ParseError, path + ": " + e.what());
    }
}

std::uint64_t parse_seed(const std::string& text, const std::string& where)
{
    try {
        std::size_t used = 0;
        const auto v = std::stoull(text, &used, 10);
        if (used != text.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidArgument, where + ": not a seed: '" + text + "'");
    }
}

// Raw CLI values. Each is applied only when given, so config file values
// survive unless overridden.
struct Flags {
    std::vector<std::string> inputs;
    std::string config;
    std::string profile;
    std::string strategy;
    std::string greedy_mode;
    std::size_t max_len = 0;
    std::size_t batch_size = 0;
    std::string seed;
    std::string template_preset;
    std::string tokenizer;
    std::string tokenizer_cmd;
    std::uint32_t vocab_size = 0;
    std::uint64_t hash_seed = 0;
    TokenId pad_id = 0;
    TokenId eos_id = 0;
    std::string format;
    std::string out;
    std::size_t threads = 0;
    bool drop_last = false;
    bool eos_per_pair = false;
    bool pad_then_eos = false;
    bool no_shuffle = false;
    bool mask_orphan_answers = false;
    bool position_ids = false;
    bool dynamic_pad = false;
    bool fold_system = false;
    bool single_threaded = false;
};

struct Options {
    CLI::Option* max_len = nullptr;
    CLI::Option* batch_size = nullptr;
    CLI::Option* seed = nullptr;
    CLI::Option* vocab_size = nullptr;
    CLI::Option* hash_seed = nullptr;
    CLI::Option* pad_id = nullptr;
    CLI::Option* eos_id = nullptr;
    CLI::Option* threads = nullptr;
};

void add_input_options(CLI::App& cmd, Flags& f, Options& o)
{
    cmd.add_option("inputs", f.inputs, "JSON Lines input files");
    cmd.add_option("--config", f.config, "JSON config file (CLI flags take precedence)");
    cmd.add_option("--max-len", f.max_len, "model maximum sequence length (default 4096)");
    o.max_len = cmd.get_option("--max-len");
    cmd.add_option("--seed", f.seed, "random seed (default $SEQPACK_SEED, then 42)");
    o.seed = cmd.get_option("--seed");
    cmd.add_option("--template", f.template_preset, "chat template preset (default llama3)");
    cmd.add_option("--tokenizer", f.tokenizer, "reference | subprocess | pretokenized");
    cmd.add_option("--tokenizer-cmd", f.tokenizer_cmd, "shell command for the subprocess tokenizer");
    cmd.add_option("--vocab-size", f.vocab_size, "vocabulary size (default 32000)");
    o.vocab_size = cmd.get_option("--vocab-size");
    cmd.add_option("--hash-seed", f.hash_seed, "reference tokenizer hash seed");
    o.hash_seed = cmd.get_option("--hash-seed");
    cmd.add_option("--pad-id", f.pad_id, "PAD token id (default 0)");
    o.pad_id = cmd.get_option("--pad-id");
    cmd.add_option("--eos-id", f.eos_id, "EOS token id (default 1)");
    o.eos_id = cmd.get_option("--eos-id");
    cmd.add_flag("--eos-per-pair", f.eos_per_pair, "EOS after every answer instead of once per conversation");
    cmd.add_flag("--fold-system-into-first-user", f.fold_system, "prepend a leading system message to the first user turn");
    cmd.add_option("--threads", f.threads, "tokenizer threads for the scan pass");
    o.threads = cmd.get_option("--threads");
    cmd.add_flag("--single-threaded", f.single_threaded, "force one thread");
}

void add_strategy_options(CLI::App& cmd, Flags& f, Options& o)
{
    cmd.add_option("--strategy", f.strategy, "padding | random_packing | greedy_packing (default greedy_packing)");
    cmd.add_option("--greedy-mode", f.greedy_mode, "next_fit | first_fit (greedy_packing only)");
    cmd.add_option("--batch-size", f.batch_size, "rows per batch (default 2)");
    o.batch_size = cmd.get_option("--batch-size");
    cmd.add_option("--profile", f.profile, "hardware profile JSON");
    cmd.add_flag("--drop-last", f.drop_last, "drop the final short batch");
    cmd.add_flag("--dynamic-pad", f.dynamic_pad, "greedy: pad each batch to its longest row");
    cmd.add_flag("--no-shuffle", f.no_shuffle, "random packing: keep input order in the stream");
}

RunConfig build_config(const Flags& f, const Options& o)
{
    RunConfig c;
    if (const char* env = std::getenv("SEQPACK_SEED"); env != nullptr && *env != '\0') {
        c.seed = parse_seed(env, "SEQPACK_SEED");
    }
    if (!f.config.empty()) c = apply_config_json(c, read_json_file(f.config));

    if (!f.inputs.empty()) c.inputs = f.inputs;
    if (!f.strategy.empty()) c.strategy = parse_strategy(f.strategy);
    if (!f.greedy_mode.empty()) c.greedy_mode = parse_fit_mode(f.greedy_mode);
    if (o.max_len && o.max_len->count()) c.model_max = f.max_len;
    if (o.batch_size && o.batch_size->count()) c.batch_size = f.batch_size;
    if (o.seed && o.seed->count()) c.seed = parse_seed(f.seed, "--seed");
    if (!f.template_preset.empty()) c.template_preset = f.template_preset;
    if (!f.tokenizer.empty()) c.tokenizer.kind = parse_tokenizer_kind(f.tokenizer);
    if (!f.tokenizer_cmd.empty()) c.tokenizer.command = f.tokenizer_cmd;
    if (o.vocab_size && o.vocab_size->count()) c.tokenizer.vocab_size = f.vocab_size;
    if (o.hash_seed && o.hash_seed->count()) c.tokenizer.hash_seed = f.hash_seed;
    if (o.pad_id && o.pad_id->count()) c.tokenizer.special.pad = f.pad_id;
    if (o.eos_id && o.eos_id->count()) c.tokenizer.special.eos = f.eos_id;
    if (!f.format.empty()) c.format = parse_output_format(f.format);
    if (!f.out.empty()) c.out = f.out;
    if (o.threads && o.threads->count()) c.threads = f.threads;
    if (f.single_threaded) c.threads = 1;
    if (!f.profile.empty()) c.profile = profile_from_json(read_json_file(f.profile));

    c.drop_last = c.drop_last || f.drop_last;
    c.eos_per_pair = c.eos_per_pair || f.eos_per_pair;
    c.pad_then_eos = c.pad_then_eos || f.pad_then_eos;
    c.no_shuffle = c.no_shuffle || f.no_shuffle;
    c.mask_orphan_answers = c.mask_orphan_answers || f.mask_orphan_answers;
    c.position_ids = c.position_ids || f.position_ids;
    c.dynamic_pad = c.dynamic_pad || f.dynamic_pad;
    c.fold_system_into_first_user = c.fold_system_into_first_user || f.fold_system;

    if (c.inputs.empty()) throw Error(ErrorKind::InvalidArgument, "no input files");
    return c;
}

std::string opt_text(const std::optional<double>& v, int precision)
{
    if (!v) return "-";
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << *v;
    return s.str();
}

std::string render_pack_report(const PackingReport& r, const CorpusDiagnostics& d)
{
    std::ostringstream s;
    s << "strategy            " << r.strategy << '\n'
      << "conversations       " << r.conversation_count << '\n'
      << "input tokens        " << r.input_tokens << '\n'
      << "batches             " << r.batch_count << '\n'
      << "rows                " << r.row_count << '\n'
      << "total tokens        " << r.total_tokens << '\n'
      << "content tokens      " << r.content_tokens << '\n'
      << "pad tokens          " << r.pad_tokens << '\n'
      << "utilization         " << opt_text(r.utilization, 4) << '\n'
      << "truncated rows      " << r.truncation_count << " (" << r.truncated_tokens << " tokens)\n"
      << "splits              " << r.split_count << '\n';
    if (r.dropped_rows > 0) s << "dropped rows        " << r.dropped_rows << " (" << r.dropped_tokens << " tokens)\n";
    s << "steps per epoch     " << r.steps_per_epoch << " (effective batch " << r.effective_batch << ")\n"
      << "total steps         " << r.total_steps << " (" << r.epochs << " epochs)\n"
      << "steps/s             " << opt_text(r.steps_per_second, 3) << '\n'
      << "samples/s           " << opt_text(r.samples_per_second, 2) << '\n'
      << "projected seconds   " << opt_text(r.projected_seconds, 2) << '\n';
    if (r.reference_seconds) {
        s << "reference seconds   " << opt_text(r.reference_seconds, 2) << " (ratio " << opt_text(r.reference_ratio, 3) << ")\n";
    }
    for (const auto& n : r.notes) s << "note: " << n << '\n';
    for (const auto& x : d.diagnostics) s << to_string(x.level) << ": " << x.message << '\n';
    return s.str();
}

void write_file(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
}

std::unique_ptr<RowSink> make_sink(OutputFormat format, std::ostream& out)
{
    if (format == OutputFormat::binary) return std::make_unique<BinaryWriter>(out);
    return std::make_unique<JsonlWriter>(out);
}

void print_diagnostics(const CorpusDiagnostics& d)
{
    for (const auto& x : d.diagnostics) {
        if (x.level != DiagnosticLevel::info) std::cerr << to_string(x.level) << ": " << x.message << '\n';
    }
}

int cmd_pack(const RunConfig& c)
{
    if (c.out.empty()) throw Error(ErrorKind::InvalidArgument, "pack needs -o DIR (or -o - for stdout)");
    validate_for_pack(c);
    if (c.out == "-") {
        auto sink = make_sink(c.format, std::cout);
        const auto result = run_pack(c, *sink);
        print_diagnostics(result.diagnostics);
        return 0;
    }
    const fs::path dir(c.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
    const auto rows_path = dir / (c.format == OutputFormat::binary ? "rows.bin" : "rows.jsonl");
    std::ofstream rows(rows_path, std::ios::binary);
    if (!rows) throw Error(ErrorKind::IoFailure, "cannot write " + rows_path.string());
    auto sink = make_sink(c.format, rows);
    const auto result = run_pack(c, *sink);
    rows.close();

    nlohmann::json report = to_json(result.report);
    report["diagnostics"] = to_json(result.diagnostics);
    write_file(dir / "report.json", report.dump(2) + "\n");
    write_file(dir / "report.txt", render_pack_report(result.report, result.diagnostics));
    print_diagnostics(result.diagnostics);
    return 0;
}

int cmd_compare(const RunConfig& c, bool json)
{
    const auto cmp = run_compare(c);
    const auto j = to_json(cmp).dump(2) + "\n";
    const auto table = render_table(cmp);
    if (!c.out.empty() && c.out != "-") {
        const fs::path dir(c.out);
        fs::create_directories(dir);
        write_file(dir / "report.json", j);
        write_file(dir / "report.txt", table);
    }
    std::cout << (json ? j : table);
    return 0;
}

int cmd_diagnose(const RunConfig& c, bool json)
{
    const auto d = run_diagnose(c);
    if (json) {
        std::cout << to_json(d).dump(2) << '\n';
        return 0;
    }
    std::cout << "conversations   " << d.conversation_count << '\n'
              << "multi-turn      " << d.multi_turn_count << " (" << opt_text(d.multi_turn_fraction, 4) << ")\n"
              << "length min/med/max " << d.min_length << " / " << d.median_length << " / " << d.max_length << '\n'
              << "oversize        " << d.oversize_count << '\n';
    if (d.dropped_trailing_user > 0) std::cout << "dropped trailing user turns " << d.dropped_trailing_user << '\n';
    std::cout << "length histogram\n";
    for (const auto& b : d.histogram) {
        std::cout << "  " << std::setw(10) << (b.upper == 0 ? std::string("oversize") : "<=" + std::to_string(b.upper))
                  << "  " << b.count << '\n';
    }
    for (const auto& x : d.diagnostics) std::cout << to_string(x.level) << ": " << x.message << '\n';
    return 0;
}

bool looks_binary(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::InputNotFound, "input not found: " + path);
    char magic[3] = {};
    in.read(magic, 3);
    return in.gcount() == 3 && magic[0] == 'S' && magic[1] == 'P' && magic[2] == 'K';
}

int cmd_inspect(const std::string& path, std::size_t batch_index, std::size_t row_index, bool all_tokens)
{
    std::ifstream in(path, std::ios::binary);
    const auto batches = looks_binary(path) ? read_binary(in) : read_jsonl(in);
    std::size_t rows_total = 0;
    for (const auto& b : batches) rows_total += b.rows.size();
    if (batch_index >= batches.size() || row_index >= batches[batch_index].rows.size()) {
        throw Error(ErrorKind::InvalidArgument, "no row " + std::to_string(row_index) + " in batch " +
                                                    std::to_string(batch_index) + " (" + std::to_string(batches.size()) +
                                                    " batches, " + std::to_string(rows_total) + " rows)");
    }
    const auto& row = batches[batch_index].rows[row_index];
    std::size_t loss = 0;
    for (auto m : row.loss_mask) loss += m;
    std::cout << "batch " << batch_index << " row " << row_index << ": length " << row.tokens.size() << ", pad "
              << row.pad_count << ", loss tokens " << loss << '\n';
    if (row.sources.empty()) {
        std::cout << "(no provenance stored in this format)\n";
    }
    for (std::size_t k = 0; k < row.sources.size(); ++k) {
        const auto& s = row.sources[k];
        std::cout << "segment " << (k + 1) << ": " << s.conversation_id << " row[" << s.row_begin << ", " << s.row_end
                  << ") conv[" << s.source_begin << ", " << s.source_end << ")";
        if (s.partial_head) std::cout << " partial_head";
        if (s.partial_tail) std::cout << " partial_tail";
        if (s.truncated) std::cout << " truncated";
        std::cout << '\n';
    }
    const std::size_t shown = all_tokens ? row.tokens.size() : std::min<std::size_t>(row.tokens.size(), 64);
    std::cout << "pos    token  seg  loss\n";
    for (std::size_t i = 0; i < shown; ++i) {
        std::cout << std::setw(5) << i << std::setw(8) << row.tokens[i] << std::setw(5) << row.segment_ids[i]
                  << std::setw(6) << static_cast<int>(row.loss_mask[i]) << '\n';
    }
    if (shown < row.tokens.size()) std::cout << "... " << (row.tokens.size() - shown) << " more (use --all)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Pack chat SFT corpora into training batches"};
    app.require_subcommand(1);

    Flags pack_flags, compare_flags, diagnose_flags;
    Options pack_opts, compare_opts, diagnose_opts;
    bool compare_json = false, diagnose_json = false;

    auto* pack = app.add_subcommand("pack", "pack a corpus and write rows plus a report");
    add_input_options(*pack, pack_flags, pack_opts);
    add_strategy_options(*pack, pack_flags, pack_opts);
    pack->add_option("-o,--out", pack_flags.out, "output directory, or - to stream rows to stdout");
    pack->add_option("--format", pack_flags.format, "jsonl | binary (default jsonl)");
    pack->add_flag("--pad-then-eos", pack_flags.pad_then_eos, "padding: place PAD before the final EOS");
    pack->add_flag("--mask-orphan-answers", pack_flags.mask_orphan_answers,
                   "random packing: no loss on answers cut off from their instruction");
    pack->add_flag("--position-ids", pack_flags.position_ids, "emit position ids that restart per segment");

    auto* compare = app.add_subcommand("compare", "compare all three strategies side by side");
    add_input_options(*compare, compare_flags, compare_opts);
    add_strategy_options(*compare, compare_flags, compare_opts);
    compare->add_option("-o,--out", compare_flags.out, "also write report.json and report.txt here");
    compare->add_flag("--json", compare_json, "print JSON instead of the table");

    auto* diagnose = app.add_subcommand("diagnose", "corpus statistics and lints");
    add_input_options(*diagnose, diagnose_flags, diagnose_opts);
    diagnose->add_option("--strategy", diagnose_flags.strategy, "strategy the lints should assume (default greedy_packing)");
    diagnose->add_flag("--json", diagnose_json, "print JSON");

    std::string inspect_path;
    std::size_t inspect_batch = 0, inspect_row = 0;
    bool inspect_all = false;
    auto* inspect = app.add_subcommand("inspect", "pretty-print one packed row with provenance");
    inspect->add_option("file", inspect_path, "rows.jsonl or rows.bin")->required();
    inspect->add_option("--batch", inspect_batch, "batch index (default 0)");
    inspect->add_option("--row", inspect_row, "row index within the batch (default 0)");
    inspect->add_flag("--all", inspect_all, "print every token");

    CLI11_PARSE(app, argc, argv);

    try {
        if (pack->parsed()) return cmd_pack(build_config(pack_flags, pack_opts));
        if (compare->parsed()) return cmd_compare(build_config(compare_flags, compare_opts), compare_json);
        if (diagnose->parsed()) return cmd_diagnose(build_config(diagnose_flags, diagnose_opts), diagnose_json);
        if (inspect->parsed()) return cmd_inspect(inspect_path, inspect_batch, inspect_row, inspect_all);
    } catch (const Error& e) {
        std::cerr << "seqpack: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "seqpack: ParseError: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "seqpack: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
