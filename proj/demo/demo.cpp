// Packs a handful of in-memory conversations three ways and prints the rows.

#include <iostream>
#include <sstream>

#include "seqpack/seqpack.hpp"

using namespace seqpack;

int main()
{
    const auto tmpl = ChatTemplate::llama3();
    ReferenceTokenizer tok = ReferenceTokenizer::for_template(tmpl, {});

    std::istringstream lines(R"({"conversations":[{"role":"user","content":"hi"},{"role":"assistant","content":"hello there"}]}
{"conversations":[{"role":"user","content":"2+2?"},{"role":"assistant","content":"4"},{"role":"user","content":"and 3+3?"},{"role":"assistant","content":"6"}]}
{"conversations":[{"role":"user","content":"name a color"},{"role":"assistant","content":"teal"}]})");

    std::vector<TokenizedConversation> corpus;
    std::string line;
    for (std::size_t i = 0; std::getline(lines, line); ++i) {
        auto conv = validate_conversation(nlohmann::json::parse(line), i, {}).conversation;
        corpus.push_back(encode_conversation(conv, tmpl, tok));
    }
    for (const auto& c : corpus) std::cout << c.conversation_id << ": " << c.length() << " tokens\n";

    for (auto strategy : {Strategy::padding, Strategy::random_packing, Strategy::greedy_packing}) {
        RunConfig config;
        config.strategy = strategy;
        config.model_max = 48;
        CollectingSink sink;
        const auto result = pack_in_memory(corpus, config, sink);
        std::cout << '\n' << to_string(strategy) << ": " << result.report.row_count << " rows, utilization "
                  << result.report.utilization << '\n';
        for (const auto& batch : sink.batches) {
            for (const auto& row : batch.rows) {
                std::cout << "  ";
                for (std::size_t i = 0; i < row.tokens.size(); ++i) {
                    std::cout << (row.segment_ids[i] == 0 ? '.' : row.loss_mask[i] ? 'A' : static_cast<char>('0' + row.segment_ids[i] % 10));
                }
                std::cout << '\n';
            }
        }
    }
}
