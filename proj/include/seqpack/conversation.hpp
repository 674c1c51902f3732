#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "seqpack/errors.hpp"
#include "seqpack/types.hpp"

namespace seqpack {

struct Message {
    Role role = Role::user;
    std::string content;

    bool operator==(const Message&) const = default;
};

/// Ordered (instruction, answer) pairs: user, assistant, user, assistant, ...
struct Conversation {
    std::string id;
    std::vector<Message> messages;

    std::size_t turn_count() const { return messages.size() / 2; }
    bool operator==(const Conversation&) const = default;
};

/// Role headers and the per-message terminator. `body_separator` sits between
/// a header and the message content.
class ChatTemplate {
public:
    ChatTemplate(std::string user_header, std::string assistant_header, std::string turn_terminator,
                 std::string body_separator = "\n\n")
        : user_header_(std::move(user_header)),
          assistant_header_(std::move(assistant_header)),
          turn_terminator_(std::move(turn_terminator)),
          body_separator_(std::move(body_separator))
    {
        if (user_header_.empty() || assistant_header_.empty() || turn_terminator_.empty()) {
            throw Error(ErrorKind::InvalidTemplate, "headers and terminator must be non-empty");
        }
        if (user_header_ == assistant_header_ || user_header_ == turn_terminator_ ||
            assistant_header_ == turn_terminator_) {
            throw Error(ErrorKind::InvalidTemplate, "headers and terminator must be mutually distinct");
        }
    }

    static ChatTemplate llama3()
    {
        return ChatTemplate("<|start_header_id|>user<|end_header_id|>",
                            "<|start_header_id|>assistant<|end_header_id|>", "<|eot_id|>");
    }

    static ChatTemplate preset(std::string_view name)
    {
        if (name == "llama3") return llama3();
        throw Error(ErrorKind::InvalidArgument, "unknown template preset '" + std::string(name) + "'");
    }

    const std::string& user_header() const { return user_header_; }
    const std::string& assistant_header() const { return assistant_header_; }
    const std::string& turn_terminator() const { return turn_terminator_; }
    const std::string& body_separator() const { return body_separator_; }

    const std::string& header(Role role) const { return role == Role::user ? user_header_ : assistant_header_; }

private:
    std::string user_header_;
    std::string assistant_header_;
    std::string turn_terminator_;
    std::string body_separator_;
};

struct MessageSource {
    std::string conversation_id;
    std::size_t message_index = 0;
};

struct RenderedMessage {
    std::string text;
    Role role = Role::user;
    MessageSource source;
};

struct IngestOptions {
    // Prefix for synthesized ids: "<prefix>:<ordinal>". Normally the input file stem.
    std::string id_prefix = "record";
    bool fold_system_into_first_user = false;
};

struct ValidatedConversation {
    Conversation conversation;
    bool dropped_trailing_user = false;
};

namespace detail {

inline bool is_blank(std::string_view s)
{
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

enum class RawRole { user, assistant, system, unknown };

inline RawRole parse_raw_role(std::string_view role)
{
    if (role == "user" || role == "human") return RawRole::user;
    if (role == "assistant" || role == "gpt") return RawRole::assistant;
    if (role == "system") return RawRole::system;
    return RawRole::unknown;
}

inline const nlohmann::json* find_either(const nlohmann::json& obj, const char* a, const char* b)
{
    if (auto it = obj.find(a); it != obj.end()) return &*it;
    if (auto it = obj.find(b); it != obj.end()) return &*it;
    return nullptr;
}

} // namespace detail

/// Validates one parsed JSON Lines record with a `conversations` list of
/// {role, content} objects. ShareGPT's {from, value} spelling and the
/// "human"/"gpt" role aliases are accepted.
///
/// A trailing unanswered user message is dropped and flagged in the result.
inline ValidatedConversation validate_conversation(const nlohmann::json& record, std::size_t ordinal,
                                                   const IngestOptions& options = {})
{
    if (!record.is_object()) {
        throw Error(ErrorKind::MalformedRecord, "record is not a JSON object");
    }
    auto turns_it = record.find("conversations");
    if (turns_it == record.end() || !turns_it->is_array()) {
        throw Error(ErrorKind::MalformedRecord, "record has no 'conversations' list");
    }
    const auto& turns = *turns_it;

    ValidatedConversation out;
    auto& conv = out.conversation;
    if (auto id = record.find("id"); id != record.end() && !id->is_null()) {
        conv.id = id->is_string() ? id->get<std::string>() : id->dump();
    } else {
        conv.id = options.id_prefix + ":" + std::to_string(ordinal);
    }

    std::string pending_system;
    bool have_system = false;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const auto& turn = turns[i];
        if (!turn.is_object()) {
            throw Error(ErrorKind::MalformedRecord, "message " + std::to_string(i) + " is not an object", i);
        }
        const auto* role_field = detail::find_either(turn, "role", "from");
        const auto* content_field = detail::find_either(turn, "content", "value");
        if (role_field == nullptr || !role_field->is_string() || content_field == nullptr ||
            !content_field->is_string()) {
            throw Error(ErrorKind::MalformedRecord, "message " + std::to_string(i) + " lacks role/content strings", i);
        }
        const auto role_name = role_field->get<std::string>();
        auto content = content_field->get<std::string>();
        const auto role = detail::parse_raw_role(role_name);

        if (role == detail::RawRole::unknown) {
            throw Error(ErrorKind::UnknownRole, "message " + std::to_string(i) + " has role '" + role_name + "'", i);
        }
        if (role == detail::RawRole::system) {
            if (i != 0) {
                throw Error(ErrorKind::RoleAlternationViolation,
                            "system message at index " + std::to_string(i), i);
            }
            if (!options.fold_system_into_first_user) {
                throw Error(ErrorKind::SystemMessage,
                            "leading system message (use --fold-system-into-first-user)", i);
            }
            pending_system = std::move(content);
            have_system = true;
            continue;
        }

        const Role expected = conv.messages.size() % 2 == 0 ? Role::user : Role::assistant;
        const Role actual = role == detail::RawRole::user ? Role::user : Role::assistant;
        if (actual != expected) {
            throw Error(ErrorKind::RoleAlternationViolation,
                        "message " + std::to_string(i) + " should be " + std::string(to_string(expected)), i);
        }
        if (have_system && conv.messages.empty()) {
            if (!detail::is_blank(pending_system)) {
                content = pending_system + "\n\n" + content;
            }
        }
        if (detail::is_blank(content)) {
            throw Error(ErrorKind::EmptyContent, "message " + std::to_string(i) + " is blank", i);
        }
        conv.messages.push_back(Message{actual, std::move(content)});
    }

    if (!conv.messages.empty() && conv.messages.back().role == Role::user) {
        conv.messages.pop_back();
        out.dropped_trailing_user = true;
    }
    if (conv.messages.empty()) {
        throw Error(ErrorKind::EmptyConversation, "no instruction/answer pair");
    }
    return out;
}

/// Checks the invariants of an already-built conversation.
inline void check_conversation(const Conversation& conv)
{
    if (conv.messages.empty()) {
        throw Error(ErrorKind::EmptyConversation, "no instruction/answer pair");
    }
    for (std::size_t i = 0; i < conv.messages.size(); ++i) {
        const Role expected = i % 2 == 0 ? Role::user : Role::assistant;
        if (conv.messages[i].role != expected) {
            throw Error(ErrorKind::RoleAlternationViolation,
                        "message " + std::to_string(i) + " should be " + std::string(to_string(expected)), i);
        }
        if (detail::is_blank(conv.messages[i].content)) {
            throw Error(ErrorKind::EmptyContent, "message " + std::to_string(i) + " is blank", i);
        }
    }
    if (conv.messages.size() % 2 != 0) {
        throw Error(ErrorKind::RoleAlternationViolation, "conversation ends on a user message",
                    conv.messages.size() - 1);
    }
}

inline std::vector<RenderedMessage> render(const Conversation& conv, const ChatTemplate& tmpl)
{
    std::vector<RenderedMessage> out;
    out.reserve(conv.messages.size());
    for (std::size_t i = 0; i < conv.messages.size(); ++i) {
        const auto& msg = conv.messages[i];
        RenderedMessage r;
        r.role = msg.role;
        r.source = MessageSource{conv.id, i};
        r.text.reserve(tmpl.header(msg.role).size() + tmpl.body_separator().size() + msg.content.size() +
                       tmpl.turn_terminator().size());
        r.text += tmpl.header(msg.role);
        r.text += tmpl.body_separator();
        r.text += msg.content;
        r.text += tmpl.turn_terminator();
        out.push_back(std::move(r));
    }
    return out;
}

/// Inverse of render for one message: the content between header and terminator.
inline std::string strip_template(const RenderedMessage& msg, const ChatTemplate& tmpl)
{
    const auto& header = tmpl.header(msg.role);
    const auto prefix = header.size() + tmpl.body_separator().size();
    const auto& term = tmpl.turn_terminator();
    if (msg.text.size() < prefix + term.size() || msg.text.compare(0, header.size(), header) != 0 ||
        msg.text.compare(msg.text.size() - term.size(), term.size(), term) != 0) {
        throw Error(ErrorKind::InvalidArgument, "text was not rendered with this template");
    }
    return msg.text.substr(prefix, msg.text.size() - prefix - term.size());
}

inline std::string transcript(const std::vector<RenderedMessage>& rendered)
{
    std::string out;
    for (const auto& r : rendered) out += r.text;
    return out;
}

} // namespace seqpack
