#pragma once

// Two-pass corpus access. The scan pass tokenizes every record once and keeps
// only its byte offset and lengths; FileSource re-reads records on demand when
// rows are materialized, so memory stays bounded by one batch.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "seqpack/conversation.hpp"
#include "seqpack/errors.hpp"
#include "seqpack/stats.hpp"
#include "seqpack/tokenizer.hpp"

namespace seqpack {

enum class InputKind { conversations, pretokenized };

struct RecordSettings {
    InputKind kind = InputKind::conversations;
    ChatTemplate chat_template = ChatTemplate::llama3();
    EncodeOptions encode;
    bool fold_system_into_first_user = false;
};

struct RecordResult {
    TokenizedConversation conversation;
    bool dropped_trailing_user = false;
};

/// Parses and tokenizes one JSON Lines record.
inline RecordResult tokenize_record(std::string_view line, std::size_t ordinal, const std::string& id_prefix,
                                    const RecordSettings& settings, Tokenizer& tokenizer)
{
    nlohmann::json record;
    try {
        record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::ParseError, e.what());
    }
    RecordResult out;
    if (settings.kind == InputKind::pretokenized) {
        out.conversation = ingest_pretokenized(record, ordinal, tokenizer.special_tokens(), tokenizer.vocab_size(), id_prefix);
        return out;
    }
    IngestOptions ingest;
    ingest.id_prefix = id_prefix;
    ingest.fold_system_into_first_user = settings.fold_system_into_first_user;
    auto validated = validate_conversation(record, ordinal, ingest);
    out.dropped_trailing_user = validated.dropped_trailing_user;
    out.conversation = encode_conversation(validated.conversation, settings.chat_template, tokenizer, settings.encode);
    return out;
}

struct CorpusEntry {
    std::size_t file = 0;
    std::uint64_t offset = 0;
    std::size_t line = 0; // 1-based
    std::size_t ordinal = 0;
    std::size_t length = 0;
    std::size_t text_tokens = 0;
    std::size_t turn_count = 0;
};

struct CorpusIndex {
    std::vector<std::string> files;
    std::vector<CorpusEntry> entries;
    std::size_t dropped_trailing_user = 0;

    std::vector<std::size_t> lengths() const
    {
        std::vector<std::size_t> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(e.length);
        return out;
    }

    std::vector<std::size_t> turn_counts() const
    {
        std::vector<std::size_t> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(e.turn_count);
        return out;
    }

    CorpusTotals totals() const
    {
        CorpusTotals t;
        t.conversations = entries.size();
        for (const auto& e : entries) {
            t.tokens += e.length;
            t.text_tokens += e.text_tokens;
        }
        return t;
    }
};

inline std::string file_stem(const std::string& path)
{
    return std::filesystem::path(path).stem().string();
}

inline std::string located(const std::string& path, std::size_t line, const std::string& what)
{
    return path + ":" + std::to_string(line) + ": " + what;
}

/// First pass: tokenizes every record to learn its length. With `threads` > 1
/// and a concurrent tokenizer, blocks of records are tokenized in parallel;
/// results do not depend on the thread count.
inline CorpusIndex scan_corpus(const std::vector<std::string>& files, const RecordSettings& settings, Tokenizer& tokenizer,
                               std::size_t threads = 1)
{
    for (const auto& f : files) {
        if (!std::filesystem::is_regular_file(f)) {
            throw Error(ErrorKind::InputNotFound, "input not found: " + f);
        }
    }
    if (!tokenizer.concurrent()) threads = 1;
    threads = std::max<std::size_t>(threads, 1);

    CorpusIndex index;
    index.files = files;
    constexpr std::size_t kBlock = 4096;

    for (std::size_t f = 0; f < files.size(); ++f) {
        std::ifstream in(files[f], std::ios::binary);
        if (!in) throw Error(ErrorKind::InputNotFound, "cannot open " + files[f]);
        const auto stem = file_stem(files[f]);
        std::size_t line_no = 0;
        std::size_t ordinal = 0;
        std::uint64_t offset = 0;

        struct Pending {
            std::string text;
            CorpusEntry entry;
        };
        std::vector<Pending> block;
        auto flush = [&] {
            std::vector<std::exception_ptr> errors(block.size());
            std::vector<RecordResult> results(block.size());
            auto work = [&](std::size_t begin, std::size_t end) {
                for (std::size_t i = begin; i < end; ++i) {
                    try {
                        results[i] = tokenize_record(block[i].text, block[i].entry.ordinal, stem, settings, tokenizer);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            };
            if (threads == 1 || block.size() < 2 * threads) {
                work(0, block.size());
            } else {
                std::vector<std::thread> pool;
                const std::size_t per = (block.size() + threads - 1) / threads;
                for (std::size_t t = 0; t < threads; ++t) {
                    const std::size_t b = std::min(block.size(), t * per);
                    const std::size_t e = std::min(block.size(), b + per);
                    pool.emplace_back(work, b, e);
                }
                for (auto& th : pool) th.join();
            }
            for (std::size_t i = 0; i < block.size(); ++i) {
                if (errors[i]) {
                    try {
                        std::rethrow_exception(errors[i]);
                    } catch (const Error& e) {
                        throw Error(e.kind(), located(files[f], block[i].entry.line, e.what()), block[i].entry.line);
                    }
                }
                auto entry = block[i].entry;
                entry.length = results[i].conversation.length();
                entry.text_tokens = results[i].conversation.text_tokens;
                entry.turn_count = results[i].conversation.turn_count;
                if (results[i].dropped_trailing_user) ++index.dropped_trailing_user;
                index.entries.push_back(entry);
            }
            block.clear();
        };

        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            const std::uint64_t this_offset = offset;
            offset += line.size() + 1;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (detail::is_blank(line)) continue;
            CorpusEntry entry;
            entry.file = f;
            entry.offset = this_offset;
            entry.line = line_no;
            entry.ordinal = ordinal++;
            block.push_back(Pending{std::move(line), entry});
            if (block.size() == kBlock) flush();
        }
        flush();
    }
    return index;
}

/// Second pass: re-reads and re-tokenizes records by index.
class FileSource {
public:
    FileSource(const CorpusIndex& index, const RecordSettings& settings, Tokenizer& tokenizer)
        : index_(&index), settings_(&settings), tokenizer_(&tokenizer), streams_(index.files.size())
    {
    }

    TokenizedConversation fetch(std::size_t i)
    {
        if (cached_ && *cached_ == i) return cache_;
        const auto& entry = index_->entries.at(i);
        auto& stream = streams_[entry.file];
        if (!stream) {
            stream = std::make_unique<std::ifstream>(index_->files[entry.file], std::ios::binary);
            if (!*stream) throw Error(ErrorKind::IoFailure, "cannot reopen " + index_->files[entry.file]);
        }
        stream->clear();
        stream->seekg(static_cast<std::streamoff>(entry.offset));
        std::string line;
        if (!std::getline(*stream, line)) {
            throw Error(ErrorKind::IoFailure, located(index_->files[entry.file], entry.line, "input changed during run"));
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto result = tokenize_record(line, entry.ordinal, file_stem(index_->files[entry.file]), *settings_, *tokenizer_);
        if (result.conversation.length() != entry.length) {
            throw Error(ErrorKind::IoFailure, located(index_->files[entry.file], entry.line, "input changed during run"));
        }
        cached_ = i;
        cache_ = std::move(result.conversation);
        return cache_;
    }

private:
    const CorpusIndex* index_;
    const RecordSettings* settings_;
    Tokenizer* tokenizer_;
    std::vector<std::unique_ptr<std::ifstream>> streams_;
    std::optional<std::size_t> cached_;
    TokenizedConversation cache_;
};

/// Loads a whole corpus into memory.
inline std::vector<TokenizedConversation> load_corpus(const std::vector<std::string>& files, const RecordSettings& settings,
                                                      Tokenizer& tokenizer)
{
    const auto index = scan_corpus(files, settings, tokenizer);
    FileSource source(index, settings, tokenizer);
    std::vector<TokenizedConversation> out;
    out.reserve(index.entries.size());
    for (std::size_t i = 0; i < index.entries.size(); ++i) out.push_back(source.fetch(i));
    return out;
}

} // namespace seqpack
