#pragma once

// Sequence representation: vocabularies, one-hot sequences, single-position
// substitutions, Hamming neighborhoods and vocabulary remapping between the
// canonical ordering and a model's own token ordering.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppde/error.hpp"

namespace ppde {

using Token = std::uint16_t;

inline constexpr std::string_view kAminoAcids = "ACDEFGHIKLMNPQRSTVWY";

class Vocabulary {
 public:
  explicit Vocabulary(std::string_view symbols) : symbols_(symbols) {
    if (symbols_.size() < 2) {
      throw InvalidArgument("vocabulary needs at least 2 symbols");
    }
    index_.fill(-1);
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      auto c = static_cast<unsigned char>(symbols_[i]);
      if (index_[c] != -1) {
        throw InvalidArgument("duplicate vocabulary symbol '" +
                              std::string(1, symbols_[i]) + "'");
      }
      index_[c] = static_cast<int>(i);
    }
  }

  static Vocabulary amino_acids() { return Vocabulary(kAminoAcids); }

  std::size_t size() const noexcept { return symbols_.size(); }
  const std::string& symbols() const noexcept { return symbols_; }
  char symbol(Token t) const {
    if (t >= symbols_.size()) throw OutOfBounds("token index out of range");
    return symbols_[t];
  }
  std::optional<Token> index(char c) const noexcept {
    int i = index_[static_cast<unsigned char>(c)];
    if (i < 0) return std::nullopt;
    return static_cast<Token>(i);
  }

  bool operator==(const Vocabulary& o) const { return symbols_ == o.symbols_; }

 private:
  std::string symbols_;
  std::array<int, 256> index_{};
};

// Dense L x V grid of reals; used for gradients, logits and relaxed inputs.
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t a) { return data_[i * cols_ + a]; }
  double operator()(std::size_t i, std::size_t a) const {
    return data_[i * cols_ + a];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  void add_scaled(const Grid& other, double scale) {
    if (other.rows_ != rows_ || other.cols_ != cols_) {
      throw ShapeMismatch("grid shapes differ");
    }
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += scale * other.data_[k];
  }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct Substitution {
  std::size_t position = 0;
  Token new_token = 0;
  bool operator==(const Substitution&) const = default;
};

// Immutable length-L sequence over V tokens, stored as a dense byte one-hot
// grid alongside its token indices.
class OneHotSequence {
 public:
  OneHotSequence() = default;

  static OneHotSequence from_tokens(std::span<const Token> tokens,
                                    std::size_t vocab_size) {
    if (tokens.empty()) throw InvalidArgument("sequence length must be >= 1");
    if (vocab_size < 2) throw InvalidArgument("vocabulary size must be >= 2");
    OneHotSequence x;
    x.vocab_size_ = vocab_size;
    x.tokens_.assign(tokens.begin(), tokens.end());
    x.cells_.assign(tokens.size() * vocab_size, 0);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] >= vocab_size) {
        throw OutOfBounds("token " + std::to_string(tokens[i]) +
                          " at position " + std::to_string(i) +
                          " outside vocabulary of size " +
                          std::to_string(vocab_size));
      }
      x.cells_[i * vocab_size + tokens[i]] = 1;
    }
    return x;
  }

  // Every row must contain exactly one 1 and otherwise zeros.
  static OneHotSequence from_matrix(std::size_t length, std::size_t vocab_size,
                                    std::span<const std::uint8_t> cells) {
    if (cells.size() != length * vocab_size) {
      throw ShapeMismatch("one-hot matrix has wrong number of cells");
    }
    std::vector<Token> tokens(length);
    for (std::size_t i = 0; i < length; ++i) {
      int hot = -1;
      for (std::size_t a = 0; a < vocab_size; ++a) {
        std::uint8_t c = cells[i * vocab_size + a];
        if (c > 1) throw InvalidArgument("one-hot entries must be 0 or 1");
        if (c == 1) {
          if (hot != -1) throw InvalidArgument("row " + std::to_string(i) + " is not one-hot");
          hot = static_cast<int>(a);
        }
      }
      if (hot == -1) throw InvalidArgument("row " + std::to_string(i) + " is not one-hot");
      tokens[i] = static_cast<Token>(hot);
    }
    return from_tokens(tokens, vocab_size);
  }

  std::size_t length() const noexcept { return tokens_.size(); }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  Token token(std::size_t i) const { return tokens_.at(i); }
  std::span<const Token> tokens() const noexcept { return tokens_; }
  std::span<const std::uint8_t> cells() const noexcept { return cells_; }
  std::uint8_t cell(std::size_t i, std::size_t a) const {
    return cells_.at(i * vocab_size_ + a);
  }

  Grid to_grid() const {
    Grid g(length(), vocab_size_);
    for (std::size_t i = 0; i < length(); ++i) g(i, tokens_[i]) = 1.0;
    return g;
  }

  bool operator==(const OneHotSequence& o) const {
    return vocab_size_ == o.vocab_size_ && tokens_ == o.tokens_;
  }

 private:
  friend OneHotSequence apply_substitution(const OneHotSequence&, const Substitution&);
  std::size_t vocab_size_ = 0;
  std::vector<Token> tokens_;
  std::vector<std::uint8_t> cells_;
};

inline OneHotSequence encode(std::string_view text, const Vocabulary& vocab) {
  std::vector<Token> tokens(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    auto t = vocab.index(text[i]);
    if (!t) throw UnknownSymbol(i, text[i]);
    tokens[i] = *t;
  }
  return OneHotSequence::from_tokens(tokens, vocab.size());
}

inline std::string decode(const OneHotSequence& x, const Vocabulary& vocab) {
  if (x.vocab_size() != vocab.size()) {
    throw ShapeMismatch("sequence vocabulary size differs from vocabulary");
  }
  std::string out(x.length(), '?');
  for (std::size_t i = 0; i < x.length(); ++i) out[i] = vocab.symbol(x.token(i));
  return out;
}

inline OneHotSequence apply_substitution(const OneHotSequence& x,
                                         const Substitution& s) {
  if (s.position >= x.length() || s.new_token >= x.vocab_size()) {
    throw OutOfBounds("substitution (" + std::to_string(s.position) + ", " +
                      std::to_string(s.new_token) + ") out of bounds");
  }
  OneHotSequence y = x;
  const std::size_t v = x.vocab_size();
  y.cells_[s.position * v + x.tokens_[s.position]] = 0;
  y.cells_[s.position * v + s.new_token] = 1;
  y.tokens_[s.position] = s.new_token;
  return y;
}

inline void require_same_shape(const OneHotSequence& a, const OneHotSequence& b) {
  if (a.length() != b.length() || a.vocab_size() != b.vocab_size()) {
    throw ShapeMismatch("sequences differ in length or vocabulary size");
  }
}

inline std::size_t hamming_distance(const OneHotSequence& a, const OneHotSequence& b) {
  require_same_shape(a, b);
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.length(); ++i) d += a.token(i) != b.token(i);
  return d;
}

// All L*(V-1) sequences at Hamming distance exactly 1, position-major.
inline std::vector<Substitution> hamming_neighbors(const OneHotSequence& x) {
  std::vector<Substitution> out;
  out.reserve(x.length() * (x.vocab_size() - 1));
  for (std::size_t i = 0; i < x.length(); ++i) {
    for (std::size_t a = 0; a < x.vocab_size(); ++a) {
      if (a != x.token(i)) out.push_back({i, static_cast<Token>(a)});
    }
  }
  return out;
}

// Injective map from canonical token indices [0, V) into a model's columns
// [0, V_model). Model columns with no canonical preimage are padding and stay
// zero after remapping.
class PermutationMap {
 public:
  PermutationMap(std::vector<Token> mapping, std::size_t model_vocab_size)
      : mapping_(std::move(mapping)), model_vocab_size_(model_vocab_size) {
    if (mapping_.size() < 2) throw InvalidArgument("mapping needs at least 2 tokens");
    if (model_vocab_size_ < mapping_.size()) {
      throw InvalidArgument("model vocabulary smaller than canonical vocabulary");
    }
    inverse_.assign(model_vocab_size_, -1);
    for (std::size_t a = 0; a < mapping_.size(); ++a) {
      if (mapping_[a] >= model_vocab_size_) throw OutOfBounds("mapping target out of range");
      if (inverse_[mapping_[a]] != -1) throw InvalidArgument("mapping is not injective");
      inverse_[mapping_[a]] = static_cast<int>(a);
    }
  }

  static PermutationMap identity(std::size_t v, std::size_t pad = 0) {
    std::vector<Token> m(v);
    for (std::size_t a = 0; a < v; ++a) m[a] = static_cast<Token>(a);
    return PermutationMap(std::move(m), v + pad);
  }

  // Builds the map from the canonical vocabulary to a model's token order
  // string. Every canonical symbol must occur in model_order.
  static PermutationMap from_orders(const Vocabulary& canonical,
                                    std::string_view model_order) {
    Vocabulary model(model_order);
    std::vector<Token> m(canonical.size());
    for (std::size_t a = 0; a < canonical.size(); ++a) {
      auto t = model.index(canonical.symbols()[a]);
      if (!t) {
        throw InvalidArgument("model vocabulary lacks symbol '" +
                              std::string(1, canonical.symbols()[a]) + "'");
      }
      m[a] = *t;
    }
    return PermutationMap(std::move(m), model.size());
  }

  std::size_t canonical_size() const noexcept { return mapping_.size(); }
  std::size_t model_size() const noexcept { return model_vocab_size_; }
  std::size_t pad_count() const noexcept { return model_vocab_size_ - mapping_.size(); }
  Token to_model(Token canonical) const { return mapping_.at(canonical); }
  std::optional<Token> to_canonical(Token model) const {
    int a = inverse_.at(model);
    if (a < 0) return std::nullopt;
    return static_cast<Token>(a);
  }
  std::span<const Token> mapping() const noexcept { return mapping_; }

 private:
  std::vector<Token> mapping_;
  std::size_t model_vocab_size_;
  std::vector<int> inverse_;
};

inline OneHotSequence remap_vocab(const OneHotSequence& x, const PermutationMap& m) {
  if (x.vocab_size() != m.canonical_size()) {
    throw ShapeMismatch("sequence does not use the map's canonical vocabulary");
  }
  std::vector<Token> t(x.length());
  for (std::size_t i = 0; i < x.length(); ++i) t[i] = m.to_model(x.token(i));
  return OneHotSequence::from_tokens(t, m.model_size());
}

inline OneHotSequence unmap_vocab(const OneHotSequence& y, const PermutationMap& m) {
  if (y.vocab_size() != m.model_size()) {
    throw ShapeMismatch("sequence does not use the map's model vocabulary");
  }
  std::vector<Token> t(y.length());
  for (std::size_t i = 0; i < y.length(); ++i) {
    auto a = m.to_canonical(y.token(i));
    if (!a) throw ShapeMismatch("row " + std::to_string(i) + " is hot on a padding column");
    t[i] = *a;
  }
  return OneHotSequence::from_tokens(t, m.canonical_size());
}

// Pulls an L x V_model grid (gradient, logits) back onto canonical columns;
// padding columns are dropped.
inline Grid pull_back_grid(const Grid& model_grid, const PermutationMap& m) {
  if (model_grid.cols() != m.model_size()) {
    throw ShapeMismatch("grid width differs from model vocabulary size");
  }
  Grid g(model_grid.rows(), m.canonical_size());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t a = 0; a < g.cols(); ++a) g(i, a) = model_grid(i, m.to_model(a));
  }
  return g;
}

}  // namespace ppde
