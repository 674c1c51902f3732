#pragma once

// Rows are described by plans (which conversation slices go where) and only
// then materialized. Every strategy produces the same plan shape, so loss
// masks, segment ids and padding are handled once, here.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqpack/errors.hpp"
#include "seqpack/tokenizer.hpp"
#include "seqpack/types.hpp"

namespace seqpack {

/// Slice [begin, end) of conversation `conversation` placed into a row.
struct Piece {
    std::size_t conversation = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    bool partial_head = false; // starts mid-conversation
    bool partial_tail = false; // conversation continues in another row

    std::size_t length() const { return end - begin; }
    bool operator==(const Piece&) const = default;
};

struct RowPlan {
    std::vector<Piece> pieces;
    // Last content token is replaced by EOS (truncated rows).
    bool force_eos = false;
    std::size_t truncated_tokens = 0;

    std::size_t content_length() const
    {
        std::size_t n = 0;
        for (const auto& p : pieces) n += p.length();
        return n;
    }
    bool operator==(const RowPlan&) const = default;
};

struct BatchPlan {
    std::size_t row_length = 0;
    std::vector<RowPlan> rows;

    bool operator==(const BatchPlan&) const = default;
};

/// A strategy's full output before materialization.
struct Plan {
    std::vector<BatchPlan> batches;
    // Rows left out by drop_last.
    std::size_t dropped_rows = 0;
    std::size_t dropped_tokens = 0;
    // Conversations cut at a row boundary, counted once per boundary crossed.
    std::size_t split_count = 0;
};

/// Provenance of one contiguous run of tokens in a row.
struct Segment {
    std::string conversation_id;
    std::size_t row_begin = 0;
    std::size_t row_end = 0;
    std::size_t source_begin = 0;
    std::size_t source_end = 0;
    bool partial_head = false;
    bool partial_tail = false;
    bool truncated = false;

    bool operator==(const Segment&) const = default;
};

struct Row {
    std::vector<TokenId> tokens;
    std::vector<TokenRole> labels;
    std::vector<std::uint8_t> loss_mask;
    std::vector<std::uint16_t> segment_ids;
    std::vector<std::uint32_t> position_ids; // empty unless requested
    std::vector<Segment> segments;
    std::size_t content_length = 0;
    std::size_t pad_count = 0;
    std::size_t truncated_tokens = 0;

    bool operator==(const Row&) const = default;
};

struct Batch {
    std::size_t row_length = 0;
    std::vector<Row> rows;

    bool operator==(const Batch&) const = default;
};

// PaddedBatch in padding mode is simply a Batch whose rows each hold one conversation.
using PaddedBatch = Batch;

struct RowOptions {
    SpecialTokens special;
    // Place pads before a row-final EOS ("... [PAD][PAD][EOS]").
    bool pad_then_eos = false;
    // Zero the loss on answer tokens whose instruction fell into an earlier row.
    bool mask_orphan_answers = false;
    bool position_ids = false;
};

using LossMask = std::vector<std::uint8_t>;

/// Loss lands on answer tokens and on the terminator that closes an answer.
/// Instructions, headers, PAD and every EOS stay masked. `preceding` is the
/// label of the token just before the row when the row starts mid-conversation.
inline LossMask build_loss_mask(std::span<const TokenId> tokens, std::span<const TokenRole> labels, TokenId eos,
                                std::optional<TokenRole> preceding = std::nullopt)
{
    if (tokens.size() != labels.size()) {
        throw Error(ErrorKind::LengthMismatch, "labels must be parallel to tokens");
    }
    LossMask mask(tokens.size(), 0);
    std::optional<TokenRole> prev = preceding;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto label = labels[i];
        if (label == TokenRole::answer) {
            mask[i] = 1;
        } else if (label == TokenRole::separator && tokens[i] != eos && prev == TokenRole::answer) {
            mask[i] = 1;
        }
        prev = label;
    }
    return mask;
}

/// 1-based segment index per token, 0 on padding.
inline std::vector<std::uint16_t> build_segment_ids(std::size_t row_length, const std::vector<Segment>& segments)
{
    if (segments.size() > std::numeric_limits<std::uint16_t>::max()) {
        throw Error(ErrorKind::InvalidArgument, "more than 65535 segments in one row");
    }
    std::vector<std::uint16_t> ids(row_length, 0);
    for (std::size_t k = 0; k < segments.size(); ++k) {
        for (std::size_t i = segments[k].row_begin; i < segments[k].row_end; ++i) {
            ids[i] = static_cast<std::uint16_t>(k + 1);
        }
    }
    return ids;
}

namespace detail {

// Zero loss on the leading answer run of a segment cut off from its instruction.
inline void mask_orphan_answer(Row& row, const Segment& seg)
{
    for (std::size_t i = seg.row_begin; i < seg.row_end; ++i) {
        if (row.labels[i] == TokenRole::instruction) break;
        row.loss_mask[i] = 0;
    }
}

} // namespace detail

/// Builds a row from its plan. `source.fetch(i)` yields the i-th
/// TokenizedConversation (by value or by reference).
template <typename Source>
Row materialize_row(const RowPlan& plan, Source& source, std::size_t row_length, const RowOptions& options)
{
    Row row;
    row.tokens.reserve(row_length);
    row.labels.reserve(row_length);
    std::optional<TokenRole> preceding;

    for (const auto& piece : plan.pieces) {
        const auto& conv = source.fetch(piece.conversation);
        if (piece.end > conv.length() || piece.begin > piece.end) {
            throw Error(ErrorKind::InvalidArgument, "plan piece outside conversation " + conv.conversation_id);
        }
        if (row.tokens.empty() && piece.begin > 0) {
            preceding = conv.labels[piece.begin - 1];
        }
        Segment seg;
        seg.conversation_id = conv.conversation_id;
        seg.row_begin = row.tokens.size();
        seg.source_begin = piece.begin;
        seg.source_end = piece.end;
        seg.partial_head = piece.partial_head;
        seg.partial_tail = piece.partial_tail;
        row.tokens.insert(row.tokens.end(), conv.tokens.begin() + static_cast<std::ptrdiff_t>(piece.begin),
                          conv.tokens.begin() + static_cast<std::ptrdiff_t>(piece.end));
        row.labels.insert(row.labels.end(), conv.labels.begin() + static_cast<std::ptrdiff_t>(piece.begin),
                          conv.labels.begin() + static_cast<std::ptrdiff_t>(piece.end));
        seg.row_end = row.tokens.size();
        row.segments.push_back(std::move(seg));
    }

    if (row.tokens.size() > row_length) {
        throw Error(ErrorKind::InvalidArgument, "row content exceeds row length");
    }
    if (plan.force_eos && !row.tokens.empty()) {
        row.tokens.back() = options.special.eos;
        row.labels.back() = TokenRole::separator;
        row.segments.back().truncated = true;
    }
    row.content_length = row.tokens.size();
    row.pad_count = row_length - row.content_length;
    row.truncated_tokens = plan.truncated_tokens;

    row.loss_mask = build_loss_mask(row.tokens, row.labels, options.special.eos, preceding);
    if (options.mask_orphan_answers) {
        for (const auto& seg : row.segments) {
            if (seg.partial_head) detail::mask_orphan_answer(row, seg);
        }
    }
    row.segment_ids = build_segment_ids(row.content_length, row.segments);

    const bool move_eos = options.pad_then_eos && row.pad_count > 0 && !row.tokens.empty() &&
                          row.tokens.back() == options.special.eos;
    std::uint16_t eos_segment = 0;
    if (move_eos) {
        row.tokens.pop_back();
        row.labels.pop_back();
        row.loss_mask.pop_back();
        eos_segment = row.segment_ids.back();
        row.segment_ids.pop_back();
    }
    const std::size_t pads = row_length - row.tokens.size() - (move_eos ? 1 : 0);
    row.tokens.insert(row.tokens.end(), pads, options.special.pad);
    row.labels.insert(row.labels.end(), pads, TokenRole::padding);
    row.loss_mask.insert(row.loss_mask.end(), pads, 0);
    row.segment_ids.insert(row.segment_ids.end(), pads, 0);
    if (move_eos) {
        row.tokens.push_back(options.special.eos);
        row.labels.push_back(TokenRole::separator);
        row.loss_mask.push_back(0);
        row.segment_ids.push_back(eos_segment);
    }

    if (options.position_ids) {
        row.position_ids.assign(row_length, 0);
        for (std::size_t i = 0; i < row_length; ++i) {
            if (i > 0 && row.segment_ids[i] != 0 && row.segment_ids[i] == row.segment_ids[i - 1]) {
                row.position_ids[i] = row.position_ids[i - 1] + 1;
            }
        }
    }
    return row;
}

template <typename Source>
Batch materialize_batch(const BatchPlan& plan, Source& source, const RowOptions& options)
{
    Batch batch;
    batch.row_length = plan.row_length;
    batch.rows.reserve(plan.rows.size());
    for (const auto& row : plan.rows) {
        batch.rows.push_back(materialize_row(row, source, plan.row_length, options));
    }
    return batch;
}

template <typename Source>
std::vector<Batch> materialize(const std::vector<BatchPlan>& plans, Source& source, const RowOptions& options)
{
    std::vector<Batch> out;
    out.reserve(plans.size());
    for (const auto& plan : plans) out.push_back(materialize_batch(plan, source, options));
    return out;
}

/// In-memory conversation source.
class VectorSource {
public:
    explicit VectorSource(const std::vector<TokenizedConversation>& seqs) : seqs_(&seqs) {}
    const TokenizedConversation& fetch(std::size_t i) const { return (*seqs_)[i]; }
    std::size_t size() const { return seqs_->size(); }

private:
    const std::vector<TokenizedConversation>* seqs_;
};

/// Groups rows [0, n) in `order` into consecutive batches of `batch_size`.
/// The final short batch is kept unless `drop_last`.
inline std::vector<std::vector<std::size_t>> group_into_batches(const std::vector<std::size_t>& order,
                                                                std::size_t batch_size, bool drop_last)
{
    if (batch_size == 0) {
        throw Error(ErrorKind::InvalidArgument, "batch size must be at least 1");
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(order.size(), i + batch_size);
        if (drop_last && end - i < batch_size) break;
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

/// Plan for one conversation of length `length` in a row of `row_length`:
/// truncated (with forced EOS) when too long.
inline RowPlan single_conversation_row(std::size_t conversation, std::size_t length, std::size_t row_length)
{
    RowPlan row;
    const std::size_t kept = std::min(length, row_length);
    row.pieces.push_back(Piece{conversation, 0, kept, false, false});
    if (length > row_length) {
        row.force_eos = true;
        row.truncated_tokens = length - row_length;
    }
    return row;
}

inline std::vector<std::size_t> lengths_of(const std::vector<TokenizedConversation>& seqs)
{
    std::vector<std::size_t> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(s.length());
    return out;
}

} // namespace seqpack
