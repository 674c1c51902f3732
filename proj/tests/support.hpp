#pragma once

// Generators and brute-force oracles shared by the unit tests and the
// acceptance runner. Oracles deliberately avoid the library's own helpers.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "seqpack/seqpack.hpp"

namespace seqpack::testing {

using Rng = std::mt19937_64;

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi)
{
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline std::vector<std::size_t> random_lengths(Rng& rng, std::size_t n, std::size_t lo, std::size_t hi)
{
    std::vector<std::size_t> out(n);
    for (auto& x : out) x = pick(rng, lo, hi);
    return out;
}

/// A labelled conversation built directly from role runs, no tokenizer:
/// per turn [header instr] [user instr...] [term sep] [header instr] [answer...] [term sep], then EOS.
inline TokenizedConversation synthetic_conversation(Rng& rng, std::string id, std::size_t turns, std::size_t max_body = 12,
                                                    bool eos_per_pair = false)
{
    TokenizedConversation c;
    c.conversation_id = std::move(id);
    c.turn_count = turns;
    auto word = [&] { return static_cast<TokenId>(pick(rng, 2, kDefaultVocabSize - 1)); };
    auto push = [&](TokenRole r) {
        c.tokens.push_back(word());
        c.labels.push_back(r);
    };
    for (std::size_t t = 0; t < turns; ++t) {
        push(TokenRole::instruction);
        for (std::size_t k = pick(rng, 1, max_body); k > 0; --k, ++c.text_tokens) push(TokenRole::instruction);
        push(TokenRole::separator);
        push(TokenRole::instruction);
        for (std::size_t k = pick(rng, 1, max_body); k > 0; --k, ++c.text_tokens) push(TokenRole::answer);
        push(TokenRole::separator);
        if (eos_per_pair || t + 1 == turns) {
            c.tokens.push_back(1);
            c.labels.push_back(TokenRole::separator);
        }
    }
    return c;
}

inline std::vector<TokenizedConversation> synthetic_corpus(Rng& rng, std::size_t n, std::size_t max_turns = 3,
                                                           std::size_t max_body = 12)
{
    std::vector<TokenizedConversation> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(synthetic_conversation(rng, "c" + std::to_string(i), pick(rng, 1, max_turns), max_body));
    }
    return out;
}

/// JSON Lines text for `n` random chat records.
inline std::string random_chat_jsonl(Rng& rng, std::size_t n, std::size_t max_turns = 3, std::size_t max_words = 30)
{
    static const char* words[] = {"alpha", "beta", "gamma", "delta", "packing", "row", "token", "chat", "model", "loss",
                                  "mask", "the", "a", "of", "to", "and", "is", "42", "?", "ok"};
    auto text = [&] {
        std::string s;
        for (std::size_t k = pick(rng, 1, max_words); k > 0; --k) {
            if (!s.empty()) s += ' ';
            s += words[pick(rng, 0, std::size(words) - 1)];
        }
        return s;
    };
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        nlohmann::json conv = nlohmann::json::array();
        for (std::size_t t = pick(rng, 1, max_turns); t > 0; --t) {
            conv.push_back({{"role", "user"}, {"content", text()}});
            conv.push_back({{"role", "assistant"}, {"content", text()}});
        }
        out += nlohmann::json{{"id", "conv-" + std::to_string(i)}, {"conversations", conv}}.dump() + "\n";
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// ---- oracles ---------------------------------------------------------------

/// Literal step-by-step greedy packing reference: sort
/// ascending, walk i = N..1, append when it fits, otherwise open a new
/// sequence (only if the current one is non-empty) seeded with s_i.
/// Returns the lengths in each packed sequence.
inline std::vector<std::vector<std::size_t>> next_fit_decreasing_trace(std::vector<std::size_t> s, std::size_t max_length)
{
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    std::vector<bool> visited(n + 1, false);
    std::vector<std::vector<std::size_t>> S(1);
    std::vector<std::size_t> S_len(1, 0);
    std::size_t j = 0;
    for (std::size_t i = n; i >= 1; --i) {
        const std::size_t si = s[i - 1];
        if (!visited[i]) {
            if (S_len[j] + si <= max_length) {
                S[j].push_back(si);
                S_len[j] += si;
                visited[i] = true;
            } else {
                if (S_len[j] != 0) {
                    ++j;
                    S.emplace_back();
                    S_len.push_back(0);
                }
                S[j] = {si};
                S_len[j] = si;
                visited[i] = true;
            }
        }
    }
    if (S.size() == 1 && S[0].empty()) S.clear();
    return S;
}

/// Quadratic first-fit decreasing.
inline std::vector<std::vector<std::size_t>> first_fit_oracle(std::vector<std::size_t> s, std::size_t max_length)
{
    std::sort(s.begin(), s.end(), std::greater<>());
    std::vector<std::vector<std::size_t>> bins;
    std::vector<std::size_t> used;
    for (auto x : s) {
        std::size_t b = 0;
        while (b < bins.size() && used[b] + x > max_length) ++b;
        if (b == bins.size()) {
            bins.emplace_back();
            used.push_back(0);
        }
        bins[b].push_back(x);
        used[b] += x;
    }
    return bins;
}

/// Number of chunk boundaries k*T (0 < k*T < total) that fall strictly inside
/// some conversation's interval, counted per (conversation, boundary).
inline std::size_t straddle_oracle(const std::vector<std::size_t>& lengths_in_stream_order, std::size_t T)
{
    std::size_t start = 0, count = 0;
    for (auto len : lengths_in_stream_order) {
        const std::size_t end = start + len;
        for (std::size_t b = T; b < end; b += T) {
            if (b > start) ++count;
        }
        start = end;
    }
    return count;
}

/// Loss bit per position from labels alone: answers, plus a non-EOS separator
/// directly after an answer token.
inline std::vector<std::uint8_t> mask_oracle(const std::vector<TokenId>& tokens, const std::vector<TokenRole>& labels,
                                             TokenId eos, bool first_follows_answer = false)
{
    std::vector<std::uint8_t> m(tokens.size(), 0);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const bool after_answer = i == 0 ? first_follows_answer : labels[i - 1] == TokenRole::answer;
        if (labels[i] == TokenRole::answer) m[i] = 1;
        if (labels[i] == TokenRole::separator && tokens[i] != eos && after_answer) m[i] = 1;
    }
    return m;
}

/// Lengths per packed group, as the library produced them.
inline std::vector<std::vector<std::size_t>> group_lengths(const std::vector<PackedGroup>& groups,
                                                           const std::vector<std::size_t>& lengths)
{
    std::vector<std::vector<std::size_t>> out;
    for (const auto& g : groups) {
        auto& v = out.emplace_back();
        for (auto i : g.members) v.push_back(lengths[i]);
    }
    return out;
}

inline std::size_t count_rows(const Plan& plan)
{
    std::size_t n = 0;
    for (const auto& b : plan.batches) n += b.rows.size();
    return n;
}

} // namespace seqpack::testing
