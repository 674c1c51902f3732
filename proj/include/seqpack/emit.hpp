#pragma once

// Output formats.
//
// jsonl: one object per row with keys batch, tokens, loss_mask, segment_ids,
// sources, pad_count (and position_ids when enabled).
//
// binary: one block per batch, each
//   "SPK1" | u32 row_length | u32 row_count | rows
// where a row is row_length u32 tokens, ceil(row_length / 8) bytes of loss
// mask (bit i in byte i / 8 at position i % 8), then row_length u16 segment
// ids. All integers little-endian. An empty output is a single block with
// row_count 0.

#include <array>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqpack/errors.hpp"
#include "seqpack/rows.hpp"

namespace seqpack {

enum class OutputFormat { jsonl, binary };

inline OutputFormat parse_output_format(std::string_view s)
{
    if (s == "jsonl") return OutputFormat::jsonl;
    if (s == "binary" || s == "bin") return OutputFormat::binary;
    throw Error(ErrorKind::InvalidArgument, "unknown output format '" + std::string(s) + "'");
}

/// The part of a row that reaches the output files.
struct EmittedRow {
    std::vector<TokenId> tokens;
    std::vector<std::uint8_t> loss_mask;
    std::vector<std::uint16_t> segment_ids;
    std::vector<std::uint32_t> position_ids;
    std::vector<Segment> sources;
    std::size_t pad_count = 0;

    bool operator==(const EmittedRow&) const = default;
};

struct EmittedBatch {
    std::size_t row_length = 0;
    std::vector<EmittedRow> rows;

    bool operator==(const EmittedBatch&) const = default;
};

inline EmittedBatch to_emitted(const Batch& batch)
{
    EmittedBatch out;
    out.row_length = batch.row_length;
    for (const auto& row : batch.rows) {
        out.rows.push_back(EmittedRow{row.tokens, row.loss_mask, row.segment_ids, row.position_ids, row.segments, row.pad_count});
    }
    return out;
}

inline std::vector<EmittedBatch> to_emitted(const std::vector<Batch>& batches)
{
    std::vector<EmittedBatch> out;
    out.reserve(batches.size());
    for (const auto& b : batches) out.push_back(to_emitted(b));
    return out;
}

/// Drops what the binary layout does not store: sources and position ids.
inline std::vector<EmittedBatch> binary_projection(std::vector<EmittedBatch> batches)
{
    for (auto& b : batches) {
        for (auto& r : b.rows) {
            r.sources.clear();
            r.position_ids.clear();
        }
    }
    return batches;
}

inline std::size_t binary_row_size(std::size_t row_length)
{
    return row_length * 4 + (row_length + 7) / 8 + row_length * 2;
}

inline std::size_t binary_body_size(std::size_t row_length, std::size_t rows)
{
    return rows * binary_row_size(row_length);
}

inline constexpr std::size_t kBinaryHeaderSize = 12;

class RowSink {
public:
    virtual ~RowSink() = default;
    virtual void write(const Batch& batch) = 0;
    virtual void finish() {}
};

inline nlohmann::json segment_to_json(const Segment& s)
{
    return nlohmann::json{{"id", s.conversation_id},     {"row_start", s.row_begin},
                          {"row_end", s.row_end},        {"conv_start", s.source_begin},
                          {"conv_end", s.source_end},    {"partial_head", s.partial_head},
                          {"partial_tail", s.partial_tail}, {"truncated", s.truncated}};
}

inline Segment segment_from_json(const nlohmann::json& j)
{
    Segment s;
    s.conversation_id = j.at("id").get<std::string>();
    s.row_begin = j.at("row_start").get<std::size_t>();
    s.row_end = j.at("row_end").get<std::size_t>();
    s.source_begin = j.at("conv_start").get<std::size_t>();
    s.source_end = j.at("conv_end").get<std::size_t>();
    s.partial_head = j.at("partial_head").get<bool>();
    s.partial_tail = j.at("partial_tail").get<bool>();
    s.truncated = j.at("truncated").get<bool>();
    return s;
}

inline nlohmann::json row_to_json(const Row& row, std::size_t batch_index)
{
    nlohmann::json j;
    j["batch"] = batch_index;
    j["tokens"] = row.tokens;
    j["loss_mask"] = row.loss_mask;
    j["segment_ids"] = row.segment_ids;
    j["pad_count"] = row.pad_count;
    auto sources = nlohmann::json::array();
    for (const auto& s : row.segments) sources.push_back(segment_to_json(s));
    j["sources"] = std::move(sources);
    if (!row.position_ids.empty()) j["position_ids"] = row.position_ids;
    return j;
}

class JsonlWriter final : public RowSink {
public:
    explicit JsonlWriter(std::ostream& out) : out_(&out) {}

    void write(const Batch& batch) override
    {
        for (const auto& row : batch.rows) {
            *out_ << row_to_json(row, batch_index_).dump() << '\n';
        }
        ++batch_index_;
        if (!*out_) throw Error(ErrorKind::IoFailure, "write failed");
    }

    void finish() override
    {
        out_->flush();
        if (!*out_) throw Error(ErrorKind::IoFailure, "flush failed");
    }

private:
    std::ostream* out_;
    std::size_t batch_index_ = 0;
};

namespace detail {

template <typename T>
void put_le(std::string& buf, T v)
{
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
}

template <typename T>
T get_le(const unsigned char* p)
{
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

inline std::string encode_block_header(std::size_t row_length, std::size_t rows)
{
    if (row_length > 0xffffffffULL || rows > 0xffffffffULL) {
        throw Error(ErrorKind::InvalidArgument, "block too large for u32 header fields");
    }
    std::string buf = "SPK1";
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(row_length));
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(rows));
    return buf;
}

} // namespace detail

class BinaryWriter final : public RowSink {
public:
    explicit BinaryWriter(std::ostream& out) : out_(&out) {}

    void write(const Batch& batch) override
    {
        std::string buf = detail::encode_block_header(batch.row_length, batch.rows.size());
        buf.reserve(buf.size() + binary_body_size(batch.row_length, batch.rows.size()));
        for (const auto& row : batch.rows) {
            if (row.tokens.size() != batch.row_length) {
                throw Error(ErrorKind::InvalidArgument, "row length differs from batch row length");
            }
            for (auto t : row.tokens) detail::put_le<std::uint32_t>(buf, t);
            std::vector<unsigned char> bits((batch.row_length + 7) / 8, 0);
            for (std::size_t i = 0; i < row.loss_mask.size(); ++i) {
                if (row.loss_mask[i] != 0) bits[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
            }
            buf.append(reinterpret_cast<const char*>(bits.data()), bits.size());
            for (auto s : row.segment_ids) detail::put_le<std::uint16_t>(buf, s);
        }
        out_->write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!*out_) throw Error(ErrorKind::IoFailure, "write failed");
        ++blocks_;
    }

    void finish() override
    {
        if (blocks_ == 0) {
            const auto header = detail::encode_block_header(0, 0);
            out_->write(header.data(), static_cast<std::streamsize>(header.size()));
        }
        out_->flush();
        if (!*out_) throw Error(ErrorKind::IoFailure, "write failed");
    }

private:
    std::ostream* out_;
    std::size_t blocks_ = 0;
};

/// Batches are recovered from the "batch" field; row order is file order.
inline std::vector<EmittedBatch> read_jsonl(std::istream& in)
{
    std::vector<EmittedBatch> out;
    std::string line;
    std::size_t line_no = 0;
    std::size_t current = static_cast<std::size_t>(-1);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto batch = j.at("batch").get<std::size_t>();
            EmittedRow row;
            row.tokens = j.at("tokens").get<std::vector<TokenId>>();
            row.loss_mask = j.at("loss_mask").get<std::vector<std::uint8_t>>();
            row.segment_ids = j.at("segment_ids").get<std::vector<std::uint16_t>>();
            row.pad_count = j.at("pad_count").get<std::size_t>();
            for (const auto& s : j.at("sources")) row.sources.push_back(segment_from_json(s));
            if (auto it = j.find("position_ids"); it != j.end()) row.position_ids = it->get<std::vector<std::uint32_t>>();
            if (batch != current) {
                if (current != static_cast<std::size_t>(-1) && batch != current + 1) {
                    throw Error(ErrorKind::ParseError, "batch indices out of order");
                }
                out.push_back(EmittedBatch{row.tokens.size(), {}});
                current = batch;
            }
            out.back().rows.push_back(std::move(row));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + e.what(), line_no);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::ParseError) throw;
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + e.what(), line_no);
        }
    }
    return out;
}

/// Reads every block. The returned rows carry no sources; pad_count is the
/// number of segment-0 positions.
inline std::vector<EmittedBatch> read_binary(std::istream& in)
{
    std::vector<EmittedBatch> out;
    bool any_block = false;
    while (true) {
        std::array<unsigned char, kBinaryHeaderSize> header{};
        in.read(reinterpret_cast<char*>(header.data()), static_cast<std::streamsize>(header.size()));
        const auto got = static_cast<std::size_t>(in.gcount());
        if (got == 0 && any_block) break;
        if (got < 3 || header[0] != 'S' || header[1] != 'P' || header[2] != 'K') {
            throw Error(ErrorKind::BadMagic, "not a packed-row file");
        }
        if (got < 4 || header[3] != '1') {
            throw Error(ErrorKind::VersionMismatch, got < 4 ? std::string("missing format version")
                                                            : std::string("format version ") + static_cast<char>(header[3]));
        }
        if (got < header.size()) {
            throw Error(ErrorKind::IoFailure, "truncated block header");
        }
        any_block = true;
        const auto row_length = detail::get_le<std::uint32_t>(header.data() + 4);
        const auto count = detail::get_le<std::uint32_t>(header.data() + 8);
        if (count == 0) continue;

        EmittedBatch batch;
        batch.row_length = row_length;
        std::vector<unsigned char> body(binary_row_size(row_length));
        for (std::uint32_t r = 0; r < count; ++r) {
            in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body.size()));
            if (static_cast<std::size_t>(in.gcount()) != body.size()) {
                throw Error(ErrorKind::IoFailure, "truncated row");
            }
            EmittedRow row;
            const unsigned char* p = body.data();
            row.tokens.resize(row_length);
            for (std::size_t i = 0; i < row_length; ++i, p += 4) row.tokens[i] = detail::get_le<std::uint32_t>(p);
            row.loss_mask.resize(row_length);
            for (std::size_t i = 0; i < row_length; ++i) row.loss_mask[i] = (p[i / 8] >> (i % 8)) & 1u;
            p += (row_length + 7) / 8;
            row.segment_ids.resize(row_length);
            for (std::size_t i = 0; i < row_length; ++i, p += 2) {
                row.segment_ids[i] = detail::get_le<std::uint16_t>(p);
                if (row.segment_ids[i] == 0) ++row.pad_count;
            }
            batch.rows.push_back(std::move(row));
        }
        out.push_back(std::move(batch));
    }
    return out;
}

} // namespace seqpack
