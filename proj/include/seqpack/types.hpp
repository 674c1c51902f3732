#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace seqpack {

using TokenId = std::uint32_t;

enum class Role : std::uint8_t { user, assistant };

// Per-token label. `padding` never appears in a tokenized conversation, only in
// emitted rows.
enum class TokenRole : std::uint8_t { instruction, answer, separator, padding };

struct SpecialTokens {
    TokenId pad = 0;
    TokenId eos = 1;
};

inline constexpr std::size_t kDefaultModelMax = 4096;
inline constexpr std::uint64_t kDefaultSeed = 42;
inline constexpr std::uint32_t kDefaultVocabSize = 32000;

inline std::string_view to_string(Role role)
{
    return role == Role::user ? "user" : "assistant";
}

inline std::string_view to_string(TokenRole role)
{
    switch (role) {
    case TokenRole::instruction: return "instruction";
    case TokenRole::answer: return "answer";
    case TokenRole::separator: return "separator";
    case TokenRole::padding: return "padding";
    }
    return "unknown";
}

// Accepts the long names and the short forms ("instr", "ans", "sep").
inline std::optional<TokenRole> parse_token_role(std::string_view s)
{
    if (s == "instruction" || s == "instr") return TokenRole::instruction;
    if (s == "answer" || s == "ans") return TokenRole::answer;
    if (s == "separator" || s == "sep") return TokenRole::separator;
    return std::nullopt;
}

} // namespace seqpack
