#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace seqpack;
using namespace seqpack::testing;

namespace {

using enum TokenRole;

TokenizedConversation straight(std::string id, std::size_t n)
{
    // instr..., answer..., EOS
    TokenizedConversation c;
    c.conversation_id = std::move(id);
    c.turn_count = 1;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        c.tokens.push_back(static_cast<TokenId>(10 + i));
        c.labels.push_back(i < (n - 1) / 2 ? instruction : answer);
    }
    c.tokens.push_back(1);
    c.labels.push_back(separator);
    return c;
}

std::vector<TokenizedConversation> of_lengths(const std::vector<std::size_t>& lengths)
{
    std::vector<TokenizedConversation> out;
    for (std::size_t i = 0; i < lengths.size(); ++i) out.push_back(straight("c" + std::to_string(i), lengths[i]));
    return out;
}

} // namespace

// ---- padding ---------------------------------------------------------------

TEST(Padding, BatchLengthIsLongestMember)
{
    PaddingOptions o;
    o.model_max = 10;
    o.shuffle = false;
    const auto batches = make_padded_batches(of_lengths({5, 7}), o);
    ASSERT_EQ(batches.size(), 1u);
    EXPECT_EQ(batches[0].row_length, 7u);
    EXPECT_EQ(batches[0].rows[0].pad_count, 2u);
    EXPECT_EQ(batches[0].rows[1].pad_count, 0u);
}

TEST(Padding, TruncatesToModelMax)
{
    PaddingOptions o;
    o.model_max = 10;
    o.shuffle = false;
    const auto seqs = of_lengths({12, 3});
    const auto batches = make_padded_batches(seqs, o);
    ASSERT_EQ(batches.size(), 1u);
    EXPECT_EQ(batches[0].row_length, 10u);
    const auto& r0 = batches[0].rows[0];
    EXPECT_EQ(r0.pad_count, 0u);
    EXPECT_EQ(r0.truncated_tokens, 2u);
    EXPECT_EQ(r0.tokens.back(), 1u);
    EXPECT_TRUE(std::equal(r0.tokens.begin(), r0.tokens.begin() + 9, seqs[0].tokens.begin()));
    EXPECT_TRUE(r0.segments[0].truncated);
    EXPECT_EQ(batches[0].rows[1].pad_count, 7u);
}

TEST(Padding, EmptyInput)
{
    EXPECT_TRUE(make_padded_batches({}, {}).empty());
}

TEST(Padding, PadOrTruncate)
{
    const auto s7 = straight("a", 7);
    EXPECT_EQ(pad_or_truncate_row(s7, 7).tokens, s7.tokens);

    const auto s9 = straight("b", 9);
    const auto r = pad_or_truncate_row(s9, 4);
    EXPECT_EQ(r.tokens, (std::vector<TokenId>{s9.tokens[0], s9.tokens[1], s9.tokens[2], 1}));
    EXPECT_EQ(r.loss_mask.back(), 0u);

    const auto s2 = straight("c", 2);
    const auto p = pad_or_truncate_row(s2, 5);
    EXPECT_EQ(p.tokens, (std::vector<TokenId>{s2.tokens[0], 1, 0, 0, 0}));
    EXPECT_EQ(p.segment_ids, (std::vector<std::uint16_t>{1, 1, 0, 0, 0}));
}

TEST(Padding, PadThenEos)
{
    RowOptions ro;
    ro.pad_then_eos = true;
    const auto s = straight("c", 3);
    const auto r = pad_or_truncate_row(s, 6, ro);
    EXPECT_EQ(r.tokens, (std::vector<TokenId>{s.tokens[0], s.tokens[1], 0, 0, 0, 1}));
    EXPECT_EQ(r.segment_ids, (std::vector<std::uint16_t>{1, 1, 0, 0, 0, 1}));
}

TEST(Padding, DropLastAccountsForRemainder)
{
    PaddingOptions o;
    o.batch_size = 2;
    o.drop_last = true;
    const auto plan = plan_padding({4, 5, 6}, o);
    EXPECT_EQ(plan.batches.size(), 1u);
    EXPECT_EQ(plan.dropped_rows, 1u);
}

TEST(Padding, SeedDeterminesOrder)
{
    const std::vector<std::size_t> lengths{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    PaddingOptions a;
    a.seed = 7;
    PaddingOptions b = a;
    EXPECT_EQ(plan_padding(lengths, a).batches, plan_padding(lengths, b).batches);
    b.seed = 8;
    EXPECT_NE(plan_padding(lengths, a).batches, plan_padding(lengths, b).batches);
}

// ---- random packing --------------------------------------------------------

TEST(RandomPacking, StreamLayout)
{
    const auto one = build_stream(of_lengths({8}), 1);
    EXPECT_EQ(one.length(), 8u);
    EXPECT_EQ(one.offsets.size(), 1u);

    const auto three = build_stream(of_lengths({3, 4, 5}), 1, false);
    EXPECT_EQ(three.length(), 12u);
    ASSERT_EQ(three.offsets.size(), 3u);
    EXPECT_EQ(three.offsets[0].start, 0u);
    EXPECT_EQ(three.offsets[1].start, 3u);
    EXPECT_EQ(three.offsets[2].start, 7u);
    EXPECT_EQ(three.offsets[2].end, 12u);

    const auto seqs = of_lengths({3, 4, 5, 6, 7});
    EXPECT_EQ(build_stream(seqs, 9).tokens, build_stream(seqs, 9).tokens);
}

TEST(RandomPacking, Chunking)
{
    EXPECT_EQ(chunk_stream(build_stream(of_lengths({20}), 0), 10).size(), 2u);

    const auto c = chunk_stream(build_stream(of_lengths({25}), 0), 10);
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c[2].tokens.size(), 5u);
    const auto seqs = of_lengths({25});
    RandomPackingOptions o;
    o.model_max = 10;
    o.batch_size = 3;
    VectorSource src(seqs);
    const auto batches = materialize(plan_random_packing({25}, o).batches, src, {});
    std::size_t pads = 0;
    for (const auto& row : batches[0].rows) pads += row.pad_count;
    EXPECT_EQ(pads, 5u);
}

TEST(RandomPacking, StraddleFlags)
{
    // A conversation at stream positions 8..14 with T = 10.
    const auto chunks = chunk_stream(build_stream(of_lengths({8, 7}), 0, false), 10);
    ASSERT_EQ(chunks.size(), 2u);
    const auto& tail = chunks[0].segments.back();
    EXPECT_EQ(tail.conversation_id, "c1");
    EXPECT_TRUE(tail.partial_tail);
    EXPECT_FALSE(tail.partial_head);
    const auto& head = chunks[1].segments.front();
    EXPECT_EQ(head.conversation_id, "c1");
    EXPECT_TRUE(head.partial_head);
    EXPECT_FALSE(head.partial_tail);
}

TEST(RandomPacking, Batching)
{
    const std::vector<int> four{0, 1, 2, 3};
    const auto b4 = batch_chunks(four, 2, 5);
    ASSERT_EQ(b4.size(), 2u);
    std::multiset<int> seen;
    for (const auto& b : b4) seen.insert(b.begin(), b.end());
    EXPECT_EQ(seen, (std::multiset<int>{0, 1, 2, 3}));

    const std::vector<int> five{0, 1, 2, 3, 4};
    const auto b5 = batch_chunks(five, 2, 5);
    ASSERT_EQ(b5.size(), 3u);
    EXPECT_EQ(b5.back().size(), 1u);
    EXPECT_EQ(batch_chunks(five, 2, 5), b5);
}

TEST(RandomPacking, SplitReport)
{
    EXPECT_EQ(split_report(chunk_stream(build_stream(of_lengths({5, 5, 10}), 0, false), 10)), 0u);
    EXPECT_EQ(split_report(chunk_stream(build_stream(of_lengths({8, 4}), 0, false), 10)), 1u);
    EXPECT_EQ(split_report(chunk_stream(build_stream(of_lengths({30}), 0, false), 10)), 2u);
    EXPECT_EQ(straddle_oracle({8, 4}, 10), 1u);
    EXPECT_EQ(straddle_oracle({30}, 10), 2u);
}

TEST(RandomPacking, ChunkStartingMidAnswerKeepsLoss)
{
    // Row 1 starts inside the answer of c0.
    auto c = straight("c0", 12); // 5 instr, 6 answer, EOS
    std::vector<TokenizedConversation> seqs{c};
    RandomPackingOptions o;
    o.model_max = 8;
    o.shuffle = false;
    VectorSource src(seqs);
    const auto plan = plan_random_packing({12}, o);
    const auto batches = materialize(plan.batches, src, {});
    for (const auto& row : batches[0].rows) {
        if (row.segments[0].partial_head) {
            EXPECT_EQ(row.loss_mask[0], 1u);
            EXPECT_EQ(row.loss_mask, mask_oracle(row.tokens, row.labels, 1, true));
        }
    }
    RowOptions masked;
    masked.mask_orphan_answers = true;
    const auto orphan = materialize(plan.batches, src, masked);
    for (const auto& row : orphan[0].rows) {
        if (row.segments[0].partial_head) {
            EXPECT_EQ(row.loss_mask[0], 0u);
        }
    }
}

// ---- greedy packing --------------------------------------------------------

TEST(Greedy, SortByLength)
{
    EXPECT_EQ(sort_by_length({3, 9, 3}), (std::vector<std::size_t>{1, 0, 2}));
    EXPECT_EQ(sort_by_length({4, 4, 4}), (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_TRUE(sort_by_length({}).empty());
}

TEST(Greedy, NextFitExample)
{
    const std::vector<std::size_t> lengths{9, 8, 3, 2, 2, 1};
    const auto groups = pack_greedy_indices(lengths, 10, FitMode::next_fit);
    const std::vector<std::vector<std::size_t>> expected{{9}, {8}, {3, 2, 2, 1}};
    EXPECT_EQ(group_lengths(groups, lengths), expected);
    EXPECT_EQ(next_fit_decreasing_trace(lengths, 10), expected);
}

TEST(Greedy, FirstFitExample)
{
    const std::vector<std::size_t> lengths{9, 8, 3, 2, 2, 1};
    const auto groups = pack_greedy_indices(lengths, 10, FitMode::first_fit);
    const std::vector<std::vector<std::size_t>> expected{{9, 1}, {8, 2}, {3, 2}};
    EXPECT_EQ(group_lengths(groups, lengths), expected);
    EXPECT_EQ(first_fit_oracle(lengths, 10), expected);
}

TEST(Greedy, SingleFullLengthConversation)
{
    const auto seqs = of_lengths({10});
    const auto packed = pack_greedy(seqs, 10, FitMode::next_fit);
    ASSERT_EQ(packed.size(), 1u);
    EXPECT_EQ(packed[0].total_length(), 10u);
    GreedyPackingOptions o;
    o.model_max = 10;
    EXPECT_EQ(make_greedy_batches(seqs, o)[0].rows[0].pad_count, 0u);
}

TEST(Greedy, PaddingOfPackedRows)
{
    GreedyPackingOptions o;
    o.model_max = 10;
    o.batch_size = 2;
    const auto fixed = make_greedy_batches(of_lengths({7}), o);
    EXPECT_EQ(fixed[0].rows[0].pad_count, 3u);

    o.dynamic_pad = true;
    const auto dyn = make_greedy_batches(of_lengths({10, 7}), o);
    ASSERT_EQ(dyn.size(), 1u);
    EXPECT_EQ(dyn[0].row_length, 10u);
    std::multiset<std::size_t> pads{dyn[0].rows[0].pad_count, dyn[0].rows[1].pad_count};
    EXPECT_EQ(pads, (std::multiset<std::size_t>{0, 3}));

    const auto narrow = make_greedy_batches(of_lengths({4, 5}), o);
    EXPECT_EQ(narrow[0].row_length, 9u);
}

TEST(Greedy, RowsHoldWholeConversationsWithProvenance)
{
    const auto seqs = of_lengths({3, 4, 2, 6, 5});
    const auto packed = pack_greedy(seqs, 10, FitMode::first_fit);
    std::set<std::string> ids;
    for (const auto& p : packed) {
        for (const auto& m : p.members) {
            ids.insert(m.conversation_id);
            const auto& src = *std::find_if(seqs.begin(), seqs.end(), [&](const auto& s) { return s.conversation_id == m.conversation_id; });
            EXPECT_EQ(m.end - m.start, src.length());
            EXPECT_TRUE(std::equal(src.tokens.begin(), src.tokens.end(), p.tokens.begin() + static_cast<std::ptrdiff_t>(m.start)));
        }
    }
    EXPECT_EQ(ids.size(), 5u);
}

TEST(Greedy, OversizeIsTruncatedAlone)
{
    const std::vector<std::size_t> lengths{15, 3};
    GreedyPackingOptions o;
    o.model_max = 10;
    const auto plan = plan_greedy_packing(lengths, o);
    std::size_t truncated = 0;
    for (const auto& b : plan.batches) {
        for (const auto& r : b.rows) {
            truncated += r.truncated_tokens;
            if (r.truncated_tokens) {
                EXPECT_EQ(r.pieces.size(), 1u);
            }
        }
    }
    EXPECT_EQ(truncated, 5u);
}

// ---- rows ------------------------------------------------------------------

TEST(Rows, LossMaskSingleTurn)
{
    const auto tmpl = ChatTemplate::llama3();
    auto tok = ReferenceTokenizer::for_template(tmpl);
    Conversation conv{"x", {{Role::user, "hi"}, {Role::assistant, "hello there"}}};
    const auto tc = encode_conversation(conv, tmpl, tok);
    const auto m = build_loss_mask(tc.tokens, tc.labels, 1);
    EXPECT_EQ(m, (LossMask{0, 0, 0, 0, 1, 1, 1, 0}));
}

TEST(Rows, AllPadRowHasZeroMask)
{
    std::vector<TokenId> t(6, 0);
    std::vector<TokenRole> l(6, padding);
    EXPECT_EQ(build_loss_mask(t, l, 1), LossMask(6, 0));
}

TEST(Rows, PositionIdsRestartPerSegment)
{
    GreedyPackingOptions o;
    o.model_max = 10;
    RowOptions ro;
    ro.position_ids = true;
    const auto b = make_greedy_batches(of_lengths({4, 3}), o, ro);
    const auto& row = b[0].rows[0];
    EXPECT_EQ(row.position_ids, (std::vector<std::uint32_t>{0, 1, 2, 3, 0, 1, 2, 0, 0, 0}));
    EXPECT_EQ(row.segment_ids, (std::vector<std::uint16_t>{1, 1, 1, 1, 2, 2, 2, 0, 0, 0}));
}

TEST(Rows, GroupIntoBatches)
{
    EXPECT_THROW(group_into_batches({0, 1}, 0, false), Error);
    EXPECT_EQ(group_into_batches({0, 1, 2}, 2, false).size(), 2u);
    EXPECT_EQ(group_into_batches({0, 1, 2}, 2, true).size(), 1u);
}
