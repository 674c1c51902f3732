#pragma once

// Dynamic padding: one conversation per row, each batch padded to
// min(model_max, longest row in the batch).

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "seqpack/random.hpp"
#include "seqpack/rows.hpp"

namespace seqpack {

struct PaddingOptions {
    std::size_t batch_size = 2;
    std::size_t model_max = kDefaultModelMax;
    std::uint64_t seed = kDefaultSeed;
    bool shuffle = true;
    bool drop_last = false;
};

inline Plan plan_padding(const std::vector<std::size_t>& lengths, const PaddingOptions& options)
{
    if (options.model_max == 0) {
        throw Error(ErrorKind::InvalidArgument, "model_max must be at least 1");
    }
    const auto order = options.shuffle ? seeded_permutation(lengths.size(), derive_seed(options.seed, SeedStream::corpus_order))
                                       : identity_permutation(lengths.size());
    Plan plan;
    for (const auto& members : group_into_batches(order, options.batch_size, false)) {
        if (options.drop_last && members.size() < options.batch_size) {
            plan.dropped_rows += members.size();
            for (auto i : members) plan.dropped_tokens += lengths[i];
            continue;
        }
        std::size_t longest = 0;
        for (auto i : members) longest = std::max(longest, lengths[i]);
        BatchPlan batch;
        batch.row_length = std::min(options.model_max, longest);
        for (auto i : members) batch.rows.push_back(single_conversation_row(i, lengths[i], batch.row_length));
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

/// Pads `seq` to exactly `target_length` tokens, or truncates it to
/// target_length - 1 tokens followed by EOS.
inline Row pad_or_truncate_row(const TokenizedConversation& seq, std::size_t target_length, const RowOptions& options = {})
{
    if (target_length == 0) {
        throw Error(ErrorKind::InvalidArgument, "target length must be at least 1");
    }
    const std::vector<TokenizedConversation> one{seq};
    VectorSource source(one);
    return materialize_row(single_conversation_row(0, seq.length(), target_length), source, target_length, options);
}

inline std::vector<PaddedBatch> make_padded_batches(const std::vector<TokenizedConversation>& seqs,
                                                    const PaddingOptions& options, const RowOptions& row_options = {})
{
    VectorSource source(seqs);
    return materialize(plan_padding(lengths_of(seqs), options).batches, source, row_options);
}

} // namespace seqpack
