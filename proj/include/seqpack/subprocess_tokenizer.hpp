#pragma once

// External tokenizer over a line protocol: one text per line on the child's
// stdin, one space-separated id list per line back on its stdout. Backslashes
// and line breaks inside a text are escaped as "\\", "\n" and "\r".

#include <csignal>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "seqpack/errors.hpp"
#include "seqpack/tokenizer.hpp"

namespace seqpack {

struct SubprocessTokenizerConfig {
    std::string command;
    std::uint32_t vocab_size = kDefaultVocabSize;
    SpecialTokens special;
};

inline std::string escape_protocol_line(std::string_view text)
{
    std::string out;
    out.reserve(text.size() + 1);
    for (char c : text) {
        switch (c) {
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        default: out += c;
        }
    }
    out += '\n';
    return out;
}

class SubprocessTokenizer final : public Tokenizer {
public:
    explicit SubprocessTokenizer(SubprocessTokenizerConfig config) : config_(std::move(config))
    {
        if (config_.command.empty()) {
            throw Error(ErrorKind::InvalidArgument, "empty tokenizer command");
        }
        // A dead child must surface as TokenizerFailure, not SIGPIPE.
        std::signal(SIGPIPE, SIG_IGN);
        int to_child[2];
        int from_child[2];
        if (pipe(to_child) != 0) {
            throw Error(ErrorKind::TokenizerFailure, "pipe() failed");
        }
        if (pipe(from_child) != 0) {
            close(to_child[0]);
            close(to_child[1]);
            throw Error(ErrorKind::TokenizerFailure, "pipe() failed");
        }
        pid_ = fork();
        if (pid_ < 0) {
            throw Error(ErrorKind::TokenizerFailure, "fork() failed");
        }
        if (pid_ == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            close(to_child[0]);
            close(to_child[1]);
            close(from_child[0]);
            close(from_child[1]);
            execl("/bin/sh", "sh", "-c", config_.command.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);
        to_ = fdopen(to_child[1], "w");
        from_ = fdopen(from_child[0], "r");
        if (to_ == nullptr || from_ == nullptr) {
            throw Error(ErrorKind::TokenizerFailure, "fdopen() failed");
        }
    }

    SubprocessTokenizer(const SubprocessTokenizer&) = delete;
    SubprocessTokenizer& operator=(const SubprocessTokenizer&) = delete;

    ~SubprocessTokenizer() override
    {
        if (to_ != nullptr) std::fclose(to_);
        if (from_ != nullptr) std::fclose(from_);
        if (pid_ > 0) {
            int status = 0;
            waitpid(pid_, &status, 0);
        }
    }

    std::vector<TokenId> encode(std::string_view text) override
    {
        const auto line = escape_protocol_line(text);
        if (std::fwrite(line.data(), 1, line.size(), to_) != line.size() || std::fflush(to_) != 0) {
            throw Error(ErrorKind::TokenizerFailure, "could not write to '" + config_.command + "'");
        }
        std::string reply;
        int c;
        while ((c = std::fgetc(from_)) != EOF && c != '\n') {
            reply.push_back(static_cast<char>(c));
        }
        if (c == EOF && reply.empty()) {
            throw Error(ErrorKind::TokenizerFailure, "'" + config_.command + "' closed its output");
        }
        return parse_reply(reply);
    }

    SpecialTokens special_tokens() const override { return config_.special; }
    std::uint32_t vocab_size() const override { return config_.vocab_size; }

private:
    std::vector<TokenId> parse_reply(std::string_view reply) const
    {
        std::vector<TokenId> ids;
        std::size_t i = 0;
        while (i < reply.size()) {
            if (reply[i] == ' ' || reply[i] == '\t' || reply[i] == '\r') {
                ++i;
                continue;
            }
            std::uint64_t v = 0;
            std::size_t digits = 0;
            while (i < reply.size() && reply[i] >= '0' && reply[i] <= '9') {
                v = v * 10 + static_cast<std::uint64_t>(reply[i] - '0');
                if (v >= config_.vocab_size) {
                    throw Error(ErrorKind::TokenizerFailure, "id outside vocabulary in reply '" + std::string(reply) + "'");
                }
                ++i;
                ++digits;
            }
            if (digits == 0) {
                throw Error(ErrorKind::TokenizerFailure, "unparseable reply '" + std::string(reply) + "'");
            }
            ids.push_back(static_cast<TokenId>(v));
        }
        return ids;
    }

    SubprocessTokenizerConfig config_;
    pid_t pid_ = -1;
    std::FILE* to_ = nullptr;
    std::FILE* from_ = nullptr;
};

} // namespace seqpack
