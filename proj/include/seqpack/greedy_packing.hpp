#pragma once

// Greedy packing: conversations sorted longest first and packed whole into
// sequences of at most model_max tokens.
//
// next_fit follows the classic greedy pass step by step: only the most
// recently opened sequence is ever considered, so a conversation that does not
// fit closes it for good. first_fit revisits every open sequence.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "seqpack/random.hpp"
#include "seqpack/rows.hpp"

namespace seqpack {

enum class FitMode { next_fit, first_fit };

inline std::string_view to_string(FitMode mode)
{
    return mode == FitMode::next_fit ? "next_fit" : "first_fit";
}

struct GreedyPackingOptions {
    std::size_t batch_size = 2;
    std::size_t model_max = kDefaultModelMax;
    std::uint64_t seed = kDefaultSeed;
    FitMode mode = FitMode::next_fit;
    // Pad to the longest row of each batch instead of model_max.
    bool dynamic_pad = false;
    bool drop_last = false;
};

/// Indices ordered by non-increasing length; ties keep input order.
inline std::vector<std::size_t> sort_by_length(const std::vector<std::size_t>& lengths)
{
    auto order = identity_permutation(lengths.size());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
    return order;
}

/// One packed sequence as input indices, in packing order.
struct PackedGroup {
    std::vector<std::size_t> members;
    std::size_t total_length = 0; // after oversize truncation

    bool operator==(const PackedGroup&) const = default;
};

namespace detail {

// Max-segment-tree over remaining bin capacities; finds the leftmost bin that
// can take an item in O(log bins).
class FirstFitIndex {
public:
    explicit FirstFitIndex(std::size_t max_bins)
    {
        leaves_ = 1;
        while (leaves_ < std::max<std::size_t>(max_bins, 1)) leaves_ *= 2;
        tree_.assign(2 * leaves_, 0);
    }

    // Leftmost bin with remaining >= need, or npos.
    std::size_t find(std::size_t need) const
    {
        if (tree_[1] < need) return npos;
        std::size_t node = 1;
        while (node < leaves_) {
            node = tree_[2 * node] >= need ? 2 * node : 2 * node + 1;
        }
        return node - leaves_;
    }

    void set(std::size_t bin, std::size_t remaining)
    {
        std::size_t node = bin + leaves_;
        tree_[node] = remaining;
        for (node /= 2; node >= 1; node /= 2) tree_[node] = std::max(tree_[2 * node], tree_[2 * node + 1]);
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::size_t leaves_;
    std::vector<std::size_t> tree_;
};

} // namespace detail

/// Packs whole conversations. Lengths above model_max count as model_max
/// (those conversations are truncated when materialized).
inline std::vector<PackedGroup> pack_greedy_indices(const std::vector<std::size_t>& lengths, std::size_t model_max,
                                                    FitMode mode)
{
    if (model_max == 0) {
        throw Error(ErrorKind::InvalidArgument, "model_max must be at least 1");
    }
    const auto order = sort_by_length(lengths);
    std::vector<PackedGroup> groups;

    if (mode == FitMode::next_fit) {
        for (auto i : order) {
            const std::size_t len = std::min(lengths[i], model_max);
            if (groups.empty() || groups.back().total_length + len > model_max) {
                groups.emplace_back();
            }
            groups.back().members.push_back(i);
            groups.back().total_length += len;
        }
        return groups;
    }

    detail::FirstFitIndex index(lengths.size());
    for (auto i : order) {
        const std::size_t len = std::min(lengths[i], model_max);
        std::size_t bin = index.find(len);
        if (bin == detail::FirstFitIndex::npos || bin >= groups.size()) {
            bin = groups.size();
            groups.emplace_back();
        }
        groups[bin].members.push_back(i);
        groups[bin].total_length += len;
        index.set(bin, model_max - groups[bin].total_length);
    }
    return groups;
}

inline RowPlan packed_row(const PackedGroup& group, const std::vector<std::size_t>& lengths, std::size_t model_max)
{
    // An oversize conversation always sits alone: nothing else fits beside it.
    if (group.members.size() == 1 && lengths[group.members[0]] > model_max) {
        return single_conversation_row(group.members[0], lengths[group.members[0]], model_max);
    }
    RowPlan row;
    for (auto i : group.members) row.pieces.push_back(Piece{i, 0, lengths[i], false, false});
    return row;
}

/// Pads packed sequences into rows (to model_max, or per batch under
/// dynamic_pad) and batches them in seeded random order.
inline Plan finalize_rows(const std::vector<PackedGroup>& groups, const std::vector<std::size_t>& lengths,
                          const GreedyPackingOptions& options)
{
    const auto order = seeded_permutation(groups.size(), derive_seed(options.seed, SeedStream::batch_order));
    Plan plan;
    for (const auto& members : group_into_batches(order, options.batch_size, false)) {
        if (options.drop_last && members.size() < options.batch_size) {
            plan.dropped_rows += members.size();
            for (auto g : members) plan.dropped_tokens += groups[g].total_length;
            continue;
        }
        BatchPlan batch;
        batch.row_length = options.model_max;
        if (options.dynamic_pad) {
            batch.row_length = 0;
            for (auto g : members) batch.row_length = std::max(batch.row_length, groups[g].total_length);
        }
        for (auto g : members) batch.rows.push_back(packed_row(groups[g], lengths, options.model_max));
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

inline Plan plan_greedy_packing(const std::vector<std::size_t>& lengths, const GreedyPackingOptions& options)
{
    return finalize_rows(pack_greedy_indices(lengths, options.model_max, options.mode), lengths, options);
}

struct PackedMember {
    std::string conversation_id;
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const PackedMember&) const = default;
};

struct PackedSequence {
    std::vector<TokenId> tokens;
    std::vector<TokenRole> labels;
    std::vector<PackedMember> members;
    std::size_t truncated_tokens = 0;

    std::size_t total_length() const { return tokens.size(); }
};

/// Materialized packed sequences, unpadded, in packing order.
inline std::vector<PackedSequence> pack_greedy(const std::vector<TokenizedConversation>& seqs, std::size_t model_max,
                                               FitMode mode, const SpecialTokens& special = {})
{
    const auto lengths = lengths_of(seqs);
    VectorSource source(seqs);
    RowOptions options;
    options.special = special;
    std::vector<PackedSequence> out;
    for (const auto& group : pack_greedy_indices(lengths, model_max, mode)) {
        const auto plan = packed_row(group, lengths, model_max);
        auto row = materialize_row(plan, source, plan.content_length(), options);
        PackedSequence seq;
        seq.tokens = std::move(row.tokens);
        seq.labels = std::move(row.labels);
        seq.truncated_tokens = row.truncated_tokens;
        for (const auto& s : row.segments) seq.members.push_back(PackedMember{s.conversation_id, s.row_begin, s.row_end});
        out.push_back(std::move(seq));
    }
    return out;
}

inline std::vector<Batch> make_greedy_batches(const std::vector<TokenizedConversation>& seqs,
                                              const GreedyPackingOptions& options, const RowOptions& row_options = {})
{
    VectorSource source(seqs);
    return materialize(plan_greedy_packing(lengths_of(seqs), options).batches, source, row_options);
}

} // namespace seqpack
