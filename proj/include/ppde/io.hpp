#pragma once

// File formats: FASTA wild type, JSON expert parameter containers, the
// labeled-variant CSV and atomic file writes.
//
// Parameter containers are JSON objects carrying a "format" tag, the shape,
// and a "tokens" string naming the column order of the stored arrays:
//
//   {"format":"potts","tokens":"ACDE...","L":4,"V":20,"h":[...],"J":[...]}
//   {"format":"linear","tokens":"...","L":4,"V":20,"w":[...],"b":0.0}
//   {"format":"mlp","tokens":"...","L":4,"V":20,
//    "layers":[{"in":80,"out":16,"weights":[...],"bias":[...]}, ...]}
//
// Arrays are row-major (h: L x V, J: L x L x V x V, w: L x V). On load the
// stored token order is remapped onto the canonical vocabulary; stored
// tokens outside the canonical vocabulary are dropped.

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppde/error.hpp"
#include "ppde/experts.hpp"
#include "ppde/seqspace.hpp"

namespace ppde::io {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes to a sibling temporary file, then renames over the target.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

// First record only; the header line is ignored and residues uppercased.
inline std::string parse_fasta(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line, seq;
  bool in_record = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] == '>') {
      if (in_record) break;
      in_record = true;
      continue;
    }
    if (!in_record) {
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      throw SchemaError("FASTA must start with a '>' header line");
    }
    for (char c : line) {
      if (!std::isspace(static_cast<unsigned char>(c))) {
        seq.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      }
    }
  }
  if (seq.empty()) throw SchemaError("FASTA contains no sequence");
  return seq;
}

inline std::string read_fasta(const fs::path& path) { return parse_fasta(read_file(path)); }

namespace detail {

inline json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

inline void require_format(const json& j, const std::string& format, const fs::path& path) {
  if (!j.is_object() || j.value("format", std::string()) != format) {
    throw SchemaError(path.string() + ": expected a \"" + format + "\" parameter container");
  }
}

template <class T>
T field(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key)) throw SchemaError(path.string() + ": missing field \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": bad field \"" + key + "\": " + e.what());
  }
}

struct StoredShape {
  std::size_t length;
  std::size_t stored_vocab;
  PermutationMap map;  // canonical -> stored column
};

inline StoredShape stored_shape(const json& j, const Vocabulary& vocab, const fs::path& path) {
  const auto tokens = field<std::string>(j, "tokens", path);
  const auto L = field<std::size_t>(j, "L", path);
  const auto V = field<std::size_t>(j, "V", path);
  if (tokens.size() != V) throw SchemaError(path.string() + ": tokens string length differs from V");
  if (L == 0) throw SchemaError(path.string() + ": L must be >= 1");
  try {
    return {L, V, PermutationMap::from_orders(vocab, tokens)};
  } catch (const Error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

inline void require_size(const std::vector<double>& v, std::size_t n, const char* name,
                         const fs::path& path) {
  if (v.size() != n) {
    throw SchemaError(path.string() + ": \"" + name + "\" has " + std::to_string(v.size()) +
                      " entries, expected " + std::to_string(n));
  }
}

}  // namespace detail

inline PottsParams load_potts(const fs::path& path, const Vocabulary& vocab,
                              const OneHotSequence& wild_type) {
  const json j = detail::parse_json_file(path);
  detail::require_format(j, "potts", path);
  const auto s = detail::stored_shape(j, vocab, path);
  const auto h = detail::field<std::vector<double>>(j, "h", path);
  const auto J = detail::field<std::vector<double>>(j, "J", path);
  const std::size_t L = s.length, Vs = s.stored_vocab, V = vocab.size();
  detail::require_size(h, L * Vs, "h", path);
  detail::require_size(J, L * L * Vs * Vs, "J", path);
  std::vector<double> hc(L * V), Jc(L * L * V * V);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t a = 0; a < V; ++a) hc[i * V + a] = h[i * Vs + s.map.to_model(static_cast<Token>(a))];
  }
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t k = 0; k < L; ++k) {
      for (std::size_t a = 0; a < V; ++a) {
        for (std::size_t b = 0; b < V; ++b) {
          const std::size_t sa = s.map.to_model(static_cast<Token>(a));
          const std::size_t sb = s.map.to_model(static_cast<Token>(b));
          Jc[((i * L + k) * V + a) * V + b] = J[((i * L + k) * Vs + sa) * Vs + sb];
        }
      }
    }
  }
  if (wild_type.length() != L) {
    throw ShapeMismatch(path.string() + ": Potts length differs from wild type length");
  }
  return PottsParams::create(L, V, std::move(hc), std::move(Jc), wild_type);
}

inline LinearExpertParams load_linear(const fs::path& path, const Vocabulary& vocab) {
  const json j = detail::parse_json_file(path);
  detail::require_format(j, "linear", path);
  const auto s = detail::stored_shape(j, vocab, path);
  const auto w = detail::field<std::vector<double>>(j, "w", path);
  detail::require_size(w, s.length * s.stored_vocab, "w", path);
  LinearExpertParams p{s.length, vocab.size(), std::vector<double>(s.length * vocab.size()),
                       detail::field<double>(j, "b", path)};
  for (std::size_t i = 0; i < s.length; ++i) {
    for (std::size_t a = 0; a < vocab.size(); ++a) {
      p.w[i * vocab.size() + a] = w[i * s.stored_vocab + s.map.to_model(static_cast<Token>(a))];
    }
  }
  return p;
}

inline MlpExpertParams load_mlp(const fs::path& path, const Vocabulary& vocab) {
  const json j = detail::parse_json_file(path);
  detail::require_format(j, "mlp", path);
  const auto s = detail::stored_shape(j, vocab, path);
  if (!j.contains("layers") || !j["layers"].is_array()) {
    throw SchemaError(path.string() + ": missing \"layers\" array");
  }
  MlpExpertParams p{s.length, vocab.size(), {}};
  for (const auto& lj : j["layers"]) {
    DenseLayer l{detail::field<std::size_t>(lj, "in", path), detail::field<std::size_t>(lj, "out", path),
                 detail::field<std::vector<double>>(lj, "weights", path),
                 detail::field<std::vector<double>>(lj, "bias", path)};
    detail::require_size(l.weights, l.in * l.out, "weights", path);
    p.layers.push_back(std::move(l));
  }
  if (p.layers.empty()) throw SchemaError(path.string() + ": no layers");
  // Select and reorder the input columns of the first layer.
  auto& first = p.layers.front();
  if (first.in != s.length * s.stored_vocab) {
    throw SchemaError(path.string() + ": first layer must take L*V inputs");
  }
  const std::size_t in_c = s.length * vocab.size();
  std::vector<double> wc(first.out * in_c);
  for (std::size_t r = 0; r < first.out; ++r) {
    for (std::size_t i = 0; i < s.length; ++i) {
      for (std::size_t a = 0; a < vocab.size(); ++a) {
        wc[r * in_c + i * vocab.size() + a] =
            first.weights[r * first.in + i * s.stored_vocab + s.map.to_model(static_cast<Token>(a))];
      }
    }
  }
  first.in = in_c;
  first.weights = std::move(wc);
  return p;
}

inline std::string dump_linear(const LinearExpertParams& p, const Vocabulary& vocab) {
  if (p.vocab_size != vocab.size()) throw ShapeMismatch("linear params do not match vocabulary");
  ordered_json j;
  j["format"] = "linear";
  j["tokens"] = vocab.symbols();
  j["L"] = p.length;
  j["V"] = p.vocab_size;
  j["w"] = p.w;
  j["b"] = p.b;
  return j.dump() + "\n";
}

inline std::string dump_potts(const PottsParams& p, const Vocabulary& vocab) {
  ordered_json j;
  j["format"] = "potts";
  j["tokens"] = vocab.symbols();
  j["L"] = p.length;
  j["V"] = p.vocab_size;
  j["h"] = p.h;
  j["J"] = p.J;
  return j.dump() + "\n";
}

inline std::string dump_mlp(const MlpExpertParams& p, const Vocabulary& vocab) {
  ordered_json j;
  j["format"] = "mlp";
  j["tokens"] = vocab.symbols();
  j["L"] = p.length;
  j["V"] = p.vocab_size;
  j["layers"] = ordered_json::array();
  for (const auto& l : p.layers) {
    ordered_json lj;
    lj["in"] = l.in;
    lj["out"] = l.out;
    lj["weights"] = l.weights;
    lj["bias"] = l.bias;
    j["layers"].push_back(std::move(lj));
  }
  return j.dump() + "\n";
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError(where + ": '" + s + "' is not a number");
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const std::string& source) const {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (header[k] == name) return k;
    }
    throw SchemaError(source + ": missing column '" + name + "'");
  }
};

inline CsvTable parse_csv(std::string_view text, const std::string& source) {
  CsvTable t;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split(line, ',');
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw SchemaError(source + ": line " + std::to_string(n) + " has " +
                        std::to_string(cells.size()) + " fields, header has " +
                        std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw SchemaError(source + ": empty CSV");
  return t;
}

// `sequence,activity` with full sequence strings.
inline std::vector<LabeledVariant> parse_labeled_csv(std::string_view text, const Vocabulary& vocab,
                                                     const std::string& source = "labeled csv") {
  const CsvTable t = parse_csv(text, source);
  const auto cs = t.column("sequence", source);
  const auto ca = t.column("activity", source);
  std::vector<LabeledVariant> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::string seq = t.rows[r][cs];
    for (char& c : seq) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    const std::string where = source + " row " + std::to_string(r + 1);
    try {
      out.push_back({encode(seq, vocab), parse_double(t.rows[r][ca], where)});
    } catch (const UnknownSymbol& e) {
      throw SchemaError(where + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<LabeledVariant> read_labeled_csv(const fs::path& path, const Vocabulary& vocab) {
  return parse_labeled_csv(read_file(path), vocab, path.string());
}

}  // namespace ppde::io
