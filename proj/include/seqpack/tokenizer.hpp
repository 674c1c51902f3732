#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "seqpack/conversation.hpp"
#include "seqpack/errors.hpp"
#include "seqpack/random.hpp"
#include "seqpack/types.hpp"

namespace seqpack {

class Tokenizer {
public:
    virtual ~Tokenizer() = default;

    virtual std::vector<TokenId> encode(std::string_view text) = 0;
    virtual SpecialTokens special_tokens() const = 0;
    virtual std::uint32_t vocab_size() const = 0;
    // Whether encode() may be called from several threads at once.
    virtual bool concurrent() const { return false; }
};

struct ReferenceTokenizerConfig {
    std::uint32_t vocab_size = kDefaultVocabSize;
    std::uint64_t hash_seed = 0;
};

/// Deterministic whitespace tokenizer. Each word maps to a seeded FNV-1a/64
/// hash folded into [2, vocab_size); ids 0 and 1 stay reserved for PAD and EOS.
/// Registered special strings are split out atomically, even when glued to a
/// neighbouring word.
class ReferenceTokenizer final : public Tokenizer {
public:
    explicit ReferenceTokenizer(ReferenceTokenizerConfig config = {}, std::vector<std::string> specials = {})
        : config_(config), specials_(std::move(specials))
    {
        if (config_.vocab_size < 3) {
            throw Error(ErrorKind::InvalidArgument, "vocabulary must hold PAD, EOS and at least one word");
        }
        specials_.erase(std::remove(specials_.begin(), specials_.end(), std::string()), specials_.end());
        // Longest match first.
        std::sort(specials_.begin(), specials_.end(),
                  [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
    }

    static ReferenceTokenizer for_template(const ChatTemplate& tmpl, ReferenceTokenizerConfig config = {})
    {
        return ReferenceTokenizer(config, {tmpl.user_header(), tmpl.assistant_header(), tmpl.turn_terminator()});
    }

    TokenId id_for(std::string_view word) const
    {
        std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(config_.hash_seed);
        for (unsigned char c : word) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        h = splitmix64(h);
        return static_cast<TokenId>(2 + h % (config_.vocab_size - 2));
    }

    std::vector<TokenId> encode(std::string_view text) override
    {
        return tokenize(text);
    }

    std::vector<TokenId> tokenize(std::string_view text) const
    {
        std::vector<TokenId> out;
        std::size_t word_start = std::string_view::npos;
        auto flush = [&](std::size_t end) {
            if (word_start != std::string_view::npos) {
                out.push_back(id_for(text.substr(word_start, end - word_start)));
                word_start = std::string_view::npos;
            }
        };
        std::size_t i = 0;
        while (i < text.size()) {
            if (const auto* special = special_at(text, i)) {
                flush(i);
                out.push_back(id_for(*special));
                i += special->size();
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(text[i])) != 0) {
                flush(i);
            } else if (word_start == std::string_view::npos) {
                word_start = i;
            }
            ++i;
        }
        flush(text.size());
        return out;
    }

    SpecialTokens special_tokens() const override { return SpecialTokens{0, 1}; }
    std::uint32_t vocab_size() const override { return config_.vocab_size; }
    bool concurrent() const override { return true; }

private:
    const std::string* special_at(std::string_view text, std::size_t pos) const
    {
        for (const auto& s : specials_) {
            if (text.compare(pos, s.size(), s) == 0) return &s;
        }
        return nullptr;
    }

    ReferenceTokenizerConfig config_;
    std::vector<std::string> specials_;
};

/// One conversation as a token stream with a role label per token. Ends with
/// exactly one sequence-level EOS (more under eos_per_pair).
struct TokenizedConversation {
    std::string conversation_id;
    std::vector<TokenId> tokens;
    std::vector<TokenRole> labels;
    // Tokens of message bodies only, without headers, terminators or EOS.
    std::size_t text_tokens = 0;
    std::size_t turn_count = 0;

    std::size_t length() const { return tokens.size(); }
    bool operator==(const TokenizedConversation&) const = default;
};

struct EncodeOptions {
    // Append EOS after every (instruction, answer) pair rather than once per conversation.
    bool eos_per_pair = false;
};

inline TokenizedConversation encode_conversation(const Conversation& conv, const ChatTemplate& tmpl, Tokenizer& tokenizer,
                                                 const EncodeOptions& options = {})
{
    TokenizedConversation out;
    out.conversation_id = conv.id;
    out.turn_count = conv.turn_count();
    const TokenId eos = tokenizer.special_tokens().eos;

    auto append = [&](std::string_view text, TokenRole role) {
        const auto ids = tokenizer.encode(text);
        out.tokens.insert(out.tokens.end(), ids.begin(), ids.end());
        out.labels.insert(out.labels.end(), ids.size(), role);
        return ids.size();
    };

    const std::string user_head = tmpl.user_header() + tmpl.body_separator();
    const std::string assistant_head = tmpl.assistant_header() + tmpl.body_separator();
    for (std::size_t i = 0; i < conv.messages.size(); ++i) {
        const auto& msg = conv.messages[i];
        const bool is_user = msg.role == Role::user;
        // Assistant headers stay on the masked side: loss starts after them.
        append(is_user ? user_head : assistant_head, TokenRole::instruction);
        out.text_tokens += append(msg.content, is_user ? TokenRole::instruction : TokenRole::answer);
        append(tmpl.turn_terminator(), TokenRole::separator);
        const bool last = i + 1 == conv.messages.size();
        if (!is_user && (options.eos_per_pair || last)) {
            out.tokens.push_back(eos);
            out.labels.push_back(TokenRole::separator);
        }
    }
    return out;
}

/// Enforces the TokenizedConversation invariants.
inline void check_tokenized(const TokenizedConversation& tc, const SpecialTokens& special, std::uint32_t vocab_size)
{
    if (tc.tokens.size() != tc.labels.size()) {
        throw Error(ErrorKind::LengthMismatch, "tokens and role_labels differ in length");
    }
    if (tc.tokens.empty() || tc.tokens.back() != special.eos || tc.labels.back() != TokenRole::separator) {
        throw Error(ErrorKind::MissingFinalEos, "sequence must end with EOS labelled separator");
    }
    bool seen_instruction = false;
    for (std::size_t i = 0; i < tc.tokens.size(); ++i) {
        if (tc.tokens[i] >= vocab_size) {
            throw Error(ErrorKind::InvalidToken, "token id " + std::to_string(tc.tokens[i]) + " outside vocabulary", i);
        }
        switch (tc.labels[i]) {
        case TokenRole::instruction: seen_instruction = true; break;
        case TokenRole::answer:
            if (!seen_instruction) {
                throw Error(ErrorKind::MalformedRecord, "answer token before any instruction token", i);
            }
            break;
        case TokenRole::separator: break;
        case TokenRole::padding: throw Error(ErrorKind::UnknownLabel, "padding label inside a conversation", i);
        }
    }
}

/// Number of maximal answer runs; the turn count of pre-tokenized data.
inline std::size_t count_answer_spans(const std::vector<TokenRole>& labels)
{
    std::size_t spans = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == TokenRole::answer && (i == 0 || labels[i - 1] != TokenRole::answer)) ++spans;
    }
    return spans;
}

/// Accepts an externally tokenized record {tokens, role_labels[, id]}.
inline TokenizedConversation ingest_pretokenized(const nlohmann::json& record, std::size_t ordinal,
                                                 const SpecialTokens& special, std::uint32_t vocab_size,
                                                 const std::string& id_prefix = "record")
{
    if (!record.is_object()) {
        throw Error(ErrorKind::MalformedRecord, "record is not a JSON object");
    }
    auto tokens_it = record.find("tokens");
    auto labels_it = record.find("role_labels");
    if (tokens_it == record.end() || !tokens_it->is_array() || labels_it == record.end() || !labels_it->is_array()) {
        throw Error(ErrorKind::MalformedRecord, "record needs 'tokens' and 'role_labels' lists");
    }

    TokenizedConversation tc;
    if (auto id = record.find("id"); id != record.end() && !id->is_null()) {
        tc.conversation_id = id->is_string() ? id->get<std::string>() : id->dump();
    } else {
        tc.conversation_id = id_prefix + ":" + std::to_string(ordinal);
    }

    tc.tokens.reserve(tokens_it->size());
    for (std::size_t i = 0; i < tokens_it->size(); ++i) {
        const auto& t = (*tokens_it)[i];
        if (!t.is_number_unsigned() && !(t.is_number_integer() && t.get<std::int64_t>() >= 0)) {
            throw Error(ErrorKind::InvalidToken, "token " + std::to_string(i) + " is not a non-negative integer", i);
        }
        const auto v = t.get<std::uint64_t>();
        if (v >= vocab_size) {
            throw Error(ErrorKind::InvalidToken, "token id " + std::to_string(v) + " outside vocabulary", i);
        }
        tc.tokens.push_back(static_cast<TokenId>(v));
    }
    tc.labels.reserve(labels_it->size());
    for (std::size_t i = 0; i < labels_it->size(); ++i) {
        const auto& l = (*labels_it)[i];
        const auto role = l.is_string() ? parse_token_role(l.get<std::string>()) : std::nullopt;
        if (!role) {
            throw Error(ErrorKind::UnknownLabel, "label " + std::to_string(i) + " is not instruction/answer/separator", i);
        }
        tc.labels.push_back(*role);
    }
    check_tokenized(tc, special, vocab_size);
    tc.turn_count = count_answer_spans(tc.labels);
    tc.text_tokens = static_cast<std::size_t>(
        std::count_if(tc.labels.begin(), tc.labels.end(), [](TokenRole r) { return r != TokenRole::separator; }));
    return tc;
}

} // namespace seqpack
