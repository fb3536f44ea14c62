#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ced/types.hpp"

// Textual formats. Feature streams are JSON-lines (.vjsonl): a header object
// followed by one object per frame; several sequences may be concatenated in
// one file. Everything else is a single JSON document, or JSON-lines where
// noted. Doubles are written in shortest round-trip form (at most 17
// significant digits) so a decode(encode(x)) cycle is bit-exact.
namespace ced::io {

using nlohmann::json;

/// With `check`, the first invariant violation of a sequence aborts the read,
/// naming the source line and frame.
std::vector<Sequence> parse_sequences(std::istream& in, std::string_view source = "<stream>", bool check = true);
std::vector<Sequence> read_sequences(const std::filesystem::path& path, bool check = true);
void write_sequences(std::ostream& out, std::span<const Sequence> seqs);
void write_sequences(const std::filesystem::path& path, std::span<const Sequence> seqs);

json to_json(const Codebook& cb);
Codebook codebook_from_json(const json& j);

json to_json(const SemanticVocab& v);
SemanticVocab vocab_from_json(const json& j);

/// Embedding table, JSON-lines of {"word": str, "vec": [floats]}.
std::map<std::string, Vector> read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const std::map<std::string, Vector>& table);

json to_json(const Model& m);
Model model_from_json(const json& j);

json to_json(const EncodedSequence& e);
EncodedSequence encoded_from_json(const json& j);
std::vector<EncodedSequence> read_encoded(const std::filesystem::path& path);
void write_encoded(const std::filesystem::path& path, std::span<const EncodedSequence> encs);

json to_json(const DetectionResult& r);
DetectionResult detection_from_json(const json& j);

json vector_to_json(const Vector& v);
Vector vector_from_json(const json& j);

json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const json& j);
void write_jsonl(const std::filesystem::path& path, std::span<const json> lines);
std::vector<json> read_jsonl(const std::filesystem::path& path);

}  // namespace ced::io
