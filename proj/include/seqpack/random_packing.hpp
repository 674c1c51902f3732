#pragma once

// Random packing: concatenate every conversation into one stream, cut the
// stream into fixed-length chunks, then batch the chunks in random order.
// Conversations may be split across chunks; the chunk segments record where.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "seqpack/random.hpp"
#include "seqpack/rows.hpp"

namespace seqpack {

struct RandomPackingOptions {
    std::size_t batch_size = 2;
    std::size_t model_max = kDefaultModelMax;
    std::uint64_t seed = kDefaultSeed;
    // Shuffle conversations before concatenation.
    bool shuffle = true;
    bool drop_last = false;
};

struct StreamOffset {
    std::size_t conversation = 0; // index into the input
    std::string conversation_id;
    std::size_t start = 0;
    std::size_t end = 0;

    bool operator==(const StreamOffset&) const = default;
};

struct PackedStream {
    std::vector<TokenId> tokens;
    std::vector<TokenRole> labels;
    std::vector<StreamOffset> offsets;

    std::size_t length() const { return tokens.size(); }
};

struct ChunkSegment {
    std::string conversation_id;
    std::size_t local_start = 0;
    std::size_t local_end = 0;
    bool partial_head = false;
    bool partial_tail = false;

    bool operator==(const ChunkSegment&) const = default;
};

/// Up to `T` consecutive stream tokens; only the last chunk may be shorter.
struct Chunk {
    std::vector<TokenId> tokens;
    std::vector<TokenRole> labels;
    std::vector<ChunkSegment> segments;
};

inline std::vector<std::size_t> stream_order(std::size_t n, std::uint64_t seed, bool shuffle)
{
    return shuffle ? seeded_permutation(n, derive_seed(seed, SeedStream::corpus_order)) : identity_permutation(n);
}

/// Offsets of the conversations laid end to end in `order`. Ids are left empty.
inline std::vector<StreamOffset> layout_stream(const std::vector<std::size_t>& lengths, const std::vector<std::size_t>& order)
{
    std::vector<StreamOffset> offsets;
    offsets.reserve(order.size());
    std::size_t pos = 0;
    for (auto i : order) {
        offsets.push_back(StreamOffset{i, {}, pos, pos + lengths[i]});
        pos += lengths[i];
    }
    return offsets;
}

inline PackedStream build_stream(const std::vector<TokenizedConversation>& seqs, std::uint64_t seed, bool shuffle = true)
{
    PackedStream stream;
    stream.offsets = layout_stream(lengths_of(seqs), stream_order(seqs.size(), seed, shuffle));
    if (!stream.offsets.empty()) {
        stream.tokens.reserve(stream.offsets.back().end);
        stream.labels.reserve(stream.offsets.back().end);
    }
    for (auto& off : stream.offsets) {
        const auto& conv = seqs[off.conversation];
        off.conversation_id = conv.conversation_id;
        stream.tokens.insert(stream.tokens.end(), conv.tokens.begin(), conv.tokens.end());
        stream.labels.insert(stream.labels.end(), conv.labels.begin(), conv.labels.end());
    }
    return stream;
}

/// Row plans for the ceil(total / T) chunks of a laid-out stream.
inline std::vector<RowPlan> chunk_layout(const std::vector<StreamOffset>& offsets, std::size_t chunk_length)
{
    if (chunk_length == 0) {
        throw Error(ErrorKind::InvalidArgument, "chunk length must be at least 1");
    }
    const std::size_t total = offsets.empty() ? 0 : offsets.back().end;
    const std::size_t chunks = (total + chunk_length - 1) / chunk_length;
    std::vector<RowPlan> out(chunks);
    for (const auto& off : offsets) {
        std::size_t pos = off.start;
        while (pos < off.end) {
            const std::size_t c = pos / chunk_length;
            const std::size_t stop = std::min(off.end, (c + 1) * chunk_length);
            out[c].pieces.push_back(Piece{off.conversation, pos - off.start, stop - off.start, pos > off.start, stop < off.end});
            pos = stop;
        }
    }
    return out;
}

inline std::vector<Chunk> chunk_stream(const PackedStream& stream, std::size_t chunk_length)
{
    const auto plans = chunk_layout(stream.offsets, chunk_length);
    std::vector<std::string> ids_by_index;
    for (const auto& off : stream.offsets) {
        if (off.conversation >= ids_by_index.size()) ids_by_index.resize(off.conversation + 1);
        ids_by_index[off.conversation] = off.conversation_id;
    }

    std::vector<Chunk> out;
    out.reserve(plans.size());
    for (std::size_t c = 0; c < plans.size(); ++c) {
        Chunk chunk;
        const std::size_t begin = c * chunk_length;
        const std::size_t end = std::min(stream.length(), begin + chunk_length);
        chunk.tokens.assign(stream.tokens.begin() + static_cast<std::ptrdiff_t>(begin),
                            stream.tokens.begin() + static_cast<std::ptrdiff_t>(end));
        chunk.labels.assign(stream.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                            stream.labels.begin() + static_cast<std::ptrdiff_t>(end));
        for (const auto& p : plans[c].pieces) {
            chunk.segments.push_back(ChunkSegment{ids_by_index[p.conversation], p.begin, p.end, p.partial_head, p.partial_tail});
        }
        out.push_back(std::move(chunk));
    }
    return out;
}

/// Seeded shuffle, then consecutive groups of `batch_size`.
template <typename T>
std::vector<std::vector<T>> batch_chunks(const std::vector<T>& chunks, std::size_t batch_size, std::uint64_t seed,
                                         bool drop_last = false)
{
    const auto order = seeded_permutation(chunks.size(), derive_seed(seed, SeedStream::batch_order));
    std::vector<std::vector<T>> out;
    for (const auto& group : group_into_batches(order, batch_size, drop_last)) {
        auto& batch = out.emplace_back();
        batch.reserve(group.size());
        for (auto i : group) batch.push_back(chunks[i]);
    }
    return out;
}

/// Number of chunk-boundary crossings: each crossing leaves exactly one
/// segment flagged partial_tail.
inline std::size_t split_report(const std::vector<Chunk>& chunks)
{
    std::size_t n = 0;
    for (const auto& chunk : chunks) {
        for (const auto& seg : chunk.segments) n += seg.partial_tail ? 1 : 0;
    }
    return n;
}

inline std::size_t split_report(const std::vector<RowPlan>& rows)
{
    std::size_t n = 0;
    for (const auto& row : rows) {
        for (const auto& p : row.pieces) n += p.partial_tail ? 1 : 0;
    }
    return n;
}

inline Plan plan_random_packing(const std::vector<std::size_t>& lengths, const RandomPackingOptions& options)
{
    const auto rows = chunk_layout(layout_stream(lengths, stream_order(lengths.size(), options.seed, options.shuffle)),
                                   options.model_max);
    Plan plan;
    plan.split_count = split_report(rows);
    const auto order = seeded_permutation(rows.size(), derive_seed(options.seed, SeedStream::batch_order));
    for (const auto& group : group_into_batches(order, options.batch_size, false)) {
        if (options.drop_last && group.size() < options.batch_size) {
            plan.dropped_rows += group.size();
            for (auto i : group) plan.dropped_tokens += rows[i].content_length();
            continue;
        }
        BatchPlan batch;
        batch.row_length = options.model_max;
        for (auto i : group) batch.rows.push_back(rows[i]);
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

} // namespace seqpack
