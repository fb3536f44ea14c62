#include "ced/io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "ced/error.hpp"

namespace ced::io {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  return out;
}

std::string where(std::string_view source, std::size_t line) {
  return std::string(source) + ":" + std::to_string(line);
}

json parse_line(const std::string& text, std::string_view source, std::size_t line) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, where(source, line) + ": " + e.what());
  }
}

template <class T>
T get_field(const json& j, const char* key, std::string_view source, std::size_t line) {
  if (!j.contains(key)) fail(ErrorCode::ParseError, where(source, line) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, where(source, line) + ": field '" + key + "': " + e.what());
  }
}

RowMatrix matrix_from_json(const json& rows, const char* what) {
  if (!rows.is_array()) fail(ErrorCode::ParseError, std::string(what) + " must be an array of rows");
  const auto R = rows.size();
  const auto C = R == 0 ? 0 : rows[0].size();
  RowMatrix m(static_cast<Eigen::Index>(R), static_cast<Eigen::Index>(C));
  for (std::size_t r = 0; r < R; ++r) {
    if (!rows[r].is_array() || rows[r].size() != C) {
      fail(ErrorCode::DimensionMismatch, std::string(what) + " row " + std::to_string(r) + " has wrong length");
    }
    for (std::size_t c = 0; c < C; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
    }
  }
  return m;
}

json matrix_to_json(const RowMatrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

json vector_to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vector vector_from_json(const json& j) {
  if (!j.is_array()) fail(ErrorCode::ParseError, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].is_null()) {
      v[static_cast<Eigen::Index>(i)] = std::numeric_limits<double>::quiet_NaN();
    } else if (!j[i].is_number()) {
      fail(ErrorCode::ParseError, "expected a number at position " + std::to_string(i));
    } else {
      v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
  }
  return v;
}

std::vector<Sequence> parse_sequences(std::istream& in, std::string_view source, bool check) {
  std::vector<Sequence> out;
  std::string text;
  std::size_t line = 0;
  auto next_line = [&](std::string& buf) {
    while (std::getline(in, buf)) {
      ++line;
      if (buf.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  while (next_line(text)) {
    const json header = parse_line(text, source, line);
    Sequence seq;
    seq.id = get_field<std::string>(header, "id", source, line);
    const auto F = get_field<std::size_t>(header, "num_frames", source, line);
    seq.temporal_dim = get_field<std::size_t>(header, "temporal_dim", source, line);
    seq.semantic_dim = header.value("semantic_dim", std::size_t{0});
    if (header.contains("classes")) seq.classes = get_field<std::vector<std::string>>(header, "classes", source, line);
    if (header.contains("provenance")) seq.provenance = header.at("provenance");
    const std::size_t header_line = line;
    std::vector<std::size_t> frame_lines;
    seq.frames.reserve(F);
    for (std::size_t f = 0; f < F; ++f) {
      if (!next_line(text)) {
        fail(ErrorCode::ParseError, where(source, line) + ": sequence '" + seq.id + "' declares " +
                                        std::to_string(F) + " frames, file ends after " + std::to_string(f));
      }
      const json j = parse_line(text, source, line);
      FrameFeatures fr;
      fr.t = get_field<std::int64_t>(j, "t", source, line);
      try {
        if (!j.contains("temporal")) fail(ErrorCode::ParseError, "missing field 'temporal'");
        fr.temporal = vector_from_json(j.at("temporal"));
        if (j.contains("words")) fr.words = j.at("words").get<std::vector<std::string>>();
        if (j.contains("semantic")) fr.semantic = vector_from_json(j.at("semantic"));
        if (j.contains("label")) fr.label = j.at("label").get<std::string>();
      } catch (const Error& e) {
        fail(ErrorCode::ParseError, where(source, line) + ": frame " + std::to_string(f) + ": " + e.what());
      } catch (const json::exception& e) {
        fail(ErrorCode::ParseError, where(source, line) + ": frame " + std::to_string(f) + ": " + e.what());
      }
      seq.frames.push_back(std::move(fr));
      frame_lines.push_back(line);
    }
    if (check) {
      const auto violations = validate_sequence(seq);
      if (!violations.empty()) {
        const auto& v = violations.front();
        const std::size_t at = v.frame ? frame_lines[*v.frame] : header_line;
        fail(violation_code(v), where(source, at) + ": sequence '" + seq.id + "': " + describe(v));
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<Sequence> read_sequences(const std::filesystem::path& path, bool check) {
  auto in = open_in(path);
  return parse_sequences(in, path.string(), check);
}

void write_sequences(std::ostream& out, std::span<const Sequence> seqs) {
  for (const auto& seq : seqs) {
    json header = {{"id", seq.id},
                   {"num_frames", seq.frames.size()},
                   {"temporal_dim", seq.temporal_dim},
                   {"semantic_dim", seq.semantic_dim},
                   {"classes", seq.classes}};
    if (!seq.provenance.is_null()) header["provenance"] = seq.provenance;
    out << header.dump() << '\n';
    for (const auto& fr : seq.frames) {
      json j = {{"t", fr.t}, {"temporal", vector_to_json(fr.temporal)}};
      if (fr.words) j["words"] = *fr.words;
      if (fr.semantic) j["semantic"] = vector_to_json(*fr.semantic);
      if (fr.label) j["label"] = *fr.label;
      out << j.dump() << '\n';
    }
  }
}

void write_sequences(const std::filesystem::path& path, std::span<const Sequence> seqs) {
  auto out = open_out(path);
  write_sequences(out, seqs);
}

json to_json(const Codebook& cb) {
  return {{"centroids", matrix_to_json(cb.centroids)}, {"lambda", cb.lambda}, {"seed", cb.seed}};
}

Codebook codebook_from_json(const json& j) {
  Codebook cb;
  try {
    cb.centroids = matrix_from_json(j.at("centroids"), "centroids");
    cb.lambda = j.at("lambda").get<double>();
    cb.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("codebook: ") + e.what());
  }
  cb.validate();
  return cb;
}

json to_json(const SemanticVocab& v) {
  json emb = json::object();
  for (const auto& [w, vec] : v.word_embeddings) emb[w] = vector_to_json(vec);
  return {{"atoms", matrix_to_json(v.atoms)}, {"k_sparsity", v.k_sparsity}, {"word_embeddings", emb}};
}

SemanticVocab vocab_from_json(const json& j) {
  try {
    auto atoms = matrix_from_json(j.at("atoms"), "atoms");
    const auto k = j.at("k_sparsity").get<std::size_t>();
    std::map<std::string, Vector> emb;
    if (j.contains("word_embeddings")) {
      for (const auto& [w, vec] : j.at("word_embeddings").items()) emb.emplace(w, vector_from_json(vec));
    }
    return SemanticVocab::create(std::move(atoms), k, std::move(emb));
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("vocabulary: ") + e.what());
  }
}

std::map<std::string, Vector> read_embeddings(const std::filesystem::path& path) {
  std::map<std::string, Vector> table;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    try {
      table[j.at("word").get<std::string>()] = vector_from_json(j.at("vec"));
    } catch (const json::exception& e) {
      fail(ErrorCode::ParseError, where(path.string(), line) + ": " + e.what());
    }
  }
  return table;
}

void write_embeddings(const std::filesystem::path& path, const std::map<std::string, Vector>& table) {
  std::vector<json> lines;
  for (const auto& [w, vec] : table) lines.push_back({{"word", w}, {"vec", vector_to_json(vec)}});
  write_jsonl(path, lines);
}

json to_json(const Model& m) {
  json per_class = json::array();
  for (const auto& c : m.classes) {
    per_class.push_back({{"class", c.name},
                         {"weights", vector_to_json(c.weights)},
                         {"bias", c.bias},
                         {"threshold", c.threshold},
                         {"converged", c.converged}});
  }
  return {{"classes", m.class_names()},
          {"C_reg", m.C_reg},
          {"code_dim", m.code_dim},
          {"layout", {{"primary", to_string(m.layout.primary)}, {"secondary", to_string(m.layout.secondary)}}},
          {"per_class", per_class}};
}

Model model_from_json(const json& j) {
  Model m;
  try {
    m.C_reg = j.at("C_reg").get<double>();
    m.code_dim = j.at("code_dim").get<std::size_t>();
    m.layout.primary = channel_from_string(j.at("layout").at("primary").get<std::string>());
    m.layout.secondary = channel_from_string(j.at("layout").at("secondary").get<std::string>());
    for (const auto& c : j.at("per_class")) {
      ClassModel cm;
      cm.name = c.at("class").get<std::string>();
      cm.weights = vector_from_json(c.at("weights"));
      cm.bias = c.value("bias", 0.0);
      cm.threshold = c.value("threshold", 0.0);
      cm.converged = c.value("converged", true);
      m.classes.push_back(std::move(cm));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("model: ") + e.what());
  }
  m.validate();
  return m;
}

json to_json(const EncodedSequence& e) {
  return {{"id", e.id},
          {"has_semantic", e.has_semantic},
          {"labels", e.labels},
          {"temporal_codes", matrix_to_json(e.temporal_codes)},
          {"semantic_codes", matrix_to_json(e.semantic_codes)}};
}

EncodedSequence encoded_from_json(const json& j) {
  try {
    return EncodedSequence::from_codes(j.at("id").get<std::string>(),
                                       matrix_from_json(j.at("temporal_codes"), "temporal_codes"),
                                       matrix_from_json(j.at("semantic_codes"), "semantic_codes"),
                                       j.value("labels", std::vector<std::string>{}),
                                       j.value("has_semantic", false));
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("encoded sequence: ") + e.what());
  }
}

std::vector<EncodedSequence> read_encoded(const std::filesystem::path& path) {
  std::vector<EncodedSequence> out;
  for (const auto& j : read_jsonl(path)) out.push_back(encoded_from_json(j));
  return out;
}

void write_encoded(const std::filesystem::path& path, std::span<const EncodedSequence> encs) {
  std::vector<json> lines;
  for (const auto& e : encs) lines.push_back(to_json(e));
  write_jsonl(path, lines);
}

json to_json(const DetectionResult& r) {
  json frames = json::array();
  for (const auto& d : r.per_frame) frames.push_back({{"t", d.t}, {"label", d.label}, {"score", d.score}});
  json segs = json::array();
  for (const auto& s : r.segments) {
    segs.push_back({{"class", s.cls}, {"start", s.start}, {"end", s.end}, {"peak", s.peak}});
  }
  return {{"id", r.id}, {"per_frame", frames}, {"segments", segs}};
}

DetectionResult detection_from_json(const json& j) {
  DetectionResult r;
  try {
    r.id = j.at("id").get<std::string>();
    for (const auto& d : j.at("per_frame")) {
      r.per_frame.push_back({d.at("t").get<std::int64_t>(), d.at("label").get<std::string>(),
                             d.at("score").get<double>()});
    }
    for (const auto& s : j.at("segments")) {
      r.segments.push_back({s.at("class").get<std::string>(), s.at("start").get<std::size_t>(),
                            s.at("end").get<std::size_t>(), s.at("peak").get<double>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("detection result: ") + e.what());
  }
  return r;
}

json read_json(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_jsonl(const std::filesystem::path& path, std::span<const json> lines) {
  auto out = open_out(path);
  for (const auto& j : lines) out << j.dump() << '\n';
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<json> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_line(text, path.string(), line));
  }
  return out;
}

}  // namespace ced::io
