#pragma once

// Differentiable expert scores over the relaxed one-hot grid and their
// composition into a product of experts:
//
//   pi(x) = sum_i f_i(x) + lambda * sum_j g_j(x)
//
// where f_i are unsupervised experts and g_j supervised ones. Every expert
// returns its value and its gradient with respect to the L x V cells.

#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppde/error.hpp"
#include "ppde/seqspace.hpp"

namespace ppde {

enum class ExpertKind { potts, linear, mlp, external, ensemble };
enum class ExpertRole { unsupervised, supervised };

inline const char* to_string(ExpertKind k) {
  switch (k) {
    case ExpertKind::potts: return "potts";
    case ExpertKind::linear: return "linear";
    case ExpertKind::mlp: return "mlp";
    case ExpertKind::external: return "external";
    case ExpertKind::ensemble: return "ensemble";
  }
  return "?";
}

inline const char* to_string(ExpertRole r) {
  return r == ExpertRole::unsupervised ? "unsupervised" : "supervised";
}

struct ScoreGrad {
  double value = 0.0;
  Grid grad;
};

class Expert {
 public:
  virtual ~Expert() = default;

  virtual ExpertKind kind() const = 0;
  virtual std::size_t length() const = 0;
  virtual std::size_t vocab_size() const = 0;

  virtual ScoreGrad score_and_grad(const OneHotSequence& x) const = 0;
  virtual double value(const OneHotSequence& x) const { return score_and_grad(x).value; }

  // Evaluation at an arbitrary point of the relaxed grid. Only in-process
  // experts support it; it is what finite-difference checks perturb.
  virtual ScoreGrad score_and_grad_relaxed(const Grid&) const {
    throw Unsupported(std::string(to_string(kind())) +
                      " expert cannot be evaluated off the one-hot lattice");
  }

  // True when the gradient is the same at every point (K = 0 Lipschitz).
  virtual bool constant_gradient() const { return false; }
};

namespace detail {

inline void check_shape(const Expert& e, std::size_t length, std::size_t vocab) {
  if (e.length() != length || e.vocab_size() != vocab) {
    throw ShapeMismatch("expert expects shape (" + std::to_string(e.length()) + ", " +
                        std::to_string(e.vocab_size()) + "), got (" +
                        std::to_string(length) + ", " + std::to_string(vocab) + ")");
  }
}

inline void check_finite(std::span<const double> v, const char* what) {
  for (double d : v) {
    if (!std::isfinite(d)) throw InvalidArgument(std::string(what) + " has a non-finite entry");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Potts
// ---------------------------------------------------------------------------

// Fields h (L x V) and couplings J (L x L x V x V, index ((i*L + j)*V + a)*V + b).
// J is used as stored; no symmetry is assumed.
struct PottsParams {
  std::size_t length = 0;
  std::size_t vocab_size = 0;
  std::vector<double> h;
  std::vector<double> J;
  double wt_energy = 0.0;

  double field(std::size_t i, std::size_t a) const { return h[i * vocab_size + a]; }
  double coupling(std::size_t i, std::size_t j, std::size_t a, std::size_t b) const {
    return J[((i * length + j) * vocab_size + a) * vocab_size + b];
  }

  static PottsParams create(std::size_t length, std::size_t vocab_size,
                            std::vector<double> h, std::vector<double> J,
                            const OneHotSequence& wild_type);
};

inline void validate(const PottsParams& p) {
  if (p.length == 0 || p.vocab_size < 2) throw InvalidArgument("bad Potts shape");
  if (p.h.size() != p.length * p.vocab_size) throw ShapeMismatch("h must be L x V");
  if (p.J.size() != p.length * p.length * p.vocab_size * p.vocab_size) {
    throw ShapeMismatch("J must be L x L x V x V");
  }
  detail::check_finite(p.h, "h");
  detail::check_finite(p.J, "J");
}

inline double potts_energy(const OneHotSequence& x, const PottsParams& p) {
  if (x.length() != p.length || x.vocab_size() != p.vocab_size) {
    throw ShapeMismatch("sequence shape differs from Potts parameters");
  }
  double e = 0.0;
  for (std::size_t i = 0; i < p.length; ++i) e += p.field(i, x.token(i));
  for (std::size_t i = 0; i < p.length; ++i) {
    for (std::size_t j = 0; j < p.length; ++j) e += p.coupling(i, j, x.token(i), x.token(j));
  }
  return e;
}

inline PottsParams PottsParams::create(std::size_t length, std::size_t vocab_size,
                                       std::vector<double> h, std::vector<double> J,
                                       const OneHotSequence& wild_type) {
  PottsParams p{length, vocab_size, std::move(h), std::move(J), 0.0};
  validate(p);
  p.wt_energy = potts_energy(wild_type, p);
  return p;
}

// Value is H(x) - H(x_wt); gradient cell (i, a) is
// h[i,a] + sum_j J[i,j,a,x_j] + sum_j J[j,i,x_j,a].
inline ScoreGrad potts_score_and_grad(const OneHotSequence& x, const PottsParams& p) {
  ScoreGrad out{potts_energy(x, p) - p.wt_energy, Grid(p.length, p.vocab_size)};
  for (std::size_t i = 0; i < p.length; ++i) {
    for (std::size_t a = 0; a < p.vocab_size; ++a) {
      double g = p.field(i, a);
      for (std::size_t j = 0; j < p.length; ++j) {
        g += p.coupling(i, j, a, x.token(j)) + p.coupling(j, i, x.token(j), a);
      }
      out.grad(i, a) = g;
    }
  }
  return out;
}

// Same quantities on an arbitrary relaxed grid z: H(z) = sum h.z + sum z_i' J_ij z_j.
inline ScoreGrad potts_score_and_grad_relaxed(const Grid& z, const PottsParams& p) {
  if (z.rows() != p.length || z.cols() != p.vocab_size) {
    throw ShapeMismatch("grid shape differs from Potts parameters");
  }
  const std::size_t L = p.length;
  const std::size_t V = p.vocab_size;
  ScoreGrad out{0.0, Grid(L, V)};
  double e = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t a = 0; a < V; ++a) {
      e += p.field(i, a) * z(i, a);
      out.grad(i, a) = p.field(i, a);
    }
  }
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t j = 0; j < L; ++j) {
      for (std::size_t a = 0; a < V; ++a) {
        for (std::size_t b = 0; b < V; ++b) {
          const double c = p.coupling(i, j, a, b);
          e += z(i, a) * c * z(j, b);
          out.grad(i, a) += c * z(j, b);
          out.grad(j, b) += z(i, a) * c;
        }
      }
    }
  }
  out.value = e - p.wt_energy;
  return out;
}

class PottsExpert final : public Expert {
 public:
  explicit PottsExpert(PottsParams p) : p_(std::move(p)) { validate(p_); }
  ExpertKind kind() const override { return ExpertKind::potts; }
  std::size_t length() const override { return p_.length; }
  std::size_t vocab_size() const override { return p_.vocab_size; }
  ScoreGrad score_and_grad(const OneHotSequence& x) const override {
    return potts_score_and_grad(x, p_);
  }
  double value(const OneHotSequence& x) const override {
    return potts_energy(x, p_) - p_.wt_energy;
  }
  ScoreGrad score_and_grad_relaxed(const Grid& z) const override {
    return potts_score_and_grad_relaxed(z, p_);
  }
  const PottsParams& params() const noexcept { return p_; }

 private:
  PottsParams p_;
};

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

struct LinearExpertParams {
  std::size_t length = 0;
  std::size_t vocab_size = 0;
  std::vector<double> w;  // L x V row-major
  double b = 0.0;

  double weight(std::size_t i, std::size_t a) const { return w[i * vocab_size + a]; }
};

class LinearExpert final : public Expert {
 public:
  explicit LinearExpert(LinearExpertParams p) : p_(std::move(p)) {
    if (p_.length == 0 || p_.vocab_size < 2) throw InvalidArgument("bad linear expert shape");
    if (p_.w.size() != p_.length * p_.vocab_size) throw ShapeMismatch("w must be L x V");
    detail::check_finite(p_.w, "w");
    if (!std::isfinite(p_.b)) throw InvalidArgument("b is not finite");
  }
  ExpertKind kind() const override { return ExpertKind::linear; }
  std::size_t length() const override { return p_.length; }
  std::size_t vocab_size() const override { return p_.vocab_size; }
  bool constant_gradient() const override { return true; }

  double value(const OneHotSequence& x) const override {
    double v = p_.b;
    for (std::size_t i = 0; i < p_.length; ++i) v += p_.weight(i, x.token(i));
    return v;
  }
  ScoreGrad score_and_grad(const OneHotSequence& x) const override {
    return {value(x), weights_grid()};
  }
  ScoreGrad score_and_grad_relaxed(const Grid& z) const override {
    double v = p_.b;
    for (std::size_t k = 0; k < p_.w.size(); ++k) v += p_.w[k] * z.data()[k];
    return {v, weights_grid()};
  }
  const LinearExpertParams& params() const noexcept { return p_; }

 private:
  Grid weights_grid() const {
    Grid g(p_.length, p_.vocab_size);
    std::copy(p_.w.begin(), p_.w.end(), g.data().begin());
    return g;
  }
  LinearExpertParams p_;
};

// ---------------------------------------------------------------------------
// MLP: flattened L*V input, tanh hidden layers, scalar linear output.
// ---------------------------------------------------------------------------

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in row-major
  std::vector<double> bias;     // out
};

struct MlpExpertParams {
  std::size_t length = 0;
  std::size_t vocab_size = 0;
  std::vector<DenseLayer> layers;

  // Glorot-scaled normal initialisation; used for tests and toy landscapes.
  template <class Rng>
  static MlpExpertParams random(std::size_t length, std::size_t vocab_size,
                                const std::vector<std::size_t>& hidden, Rng& rng) {
    MlpExpertParams p{length, vocab_size, {}};
    std::vector<std::size_t> sizes{length * vocab_size};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
      DenseLayer l{sizes[k], sizes[k + 1], {}, {}};
      const double scale = std::sqrt(2.0 / static_cast<double>(l.in + l.out));
      l.weights.resize(l.in * l.out);
      for (double& w : l.weights) w = scale * n01(rng);
      l.bias.resize(l.out);
      for (double& b : l.bias) b = 0.1 * n01(rng);
      p.layers.push_back(std::move(l));
    }
    return p;
  }
};

inline void validate(const MlpExpertParams& p) {
  if (p.length == 0 || p.vocab_size < 2) throw InvalidArgument("bad MLP shape");
  if (p.layers.size() < 2) throw InvalidArgument("MLP needs at least one hidden layer");
  if (p.layers.front().in != p.length * p.vocab_size) {
    throw ShapeMismatch("first MLP layer must take L*V inputs");
  }
  if (p.layers.back().out != 1) throw ShapeMismatch("last MLP layer must have one output");
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& l = p.layers[k];
    if (l.weights.size() != l.in * l.out || l.bias.size() != l.out) {
      throw ShapeMismatch("MLP layer " + std::to_string(k) + " has inconsistent sizes");
    }
    if (k > 0 && p.layers[k - 1].out != l.in) {
      throw ShapeMismatch("MLP layers " + std::to_string(k - 1) + " and " +
                          std::to_string(k) + " do not chain");
    }
    detail::check_finite(l.weights, "MLP weights");
    detail::check_finite(l.bias, "MLP bias");
  }
}

class MlpExpert final : public Expert {
 public:
  explicit MlpExpert(MlpExpertParams p) : p_(std::move(p)) { validate(p_); }
  ExpertKind kind() const override { return ExpertKind::mlp; }
  std::size_t length() const override { return p_.length; }
  std::size_t vocab_size() const override { return p_.vocab_size; }

  ScoreGrad score_and_grad(const OneHotSequence& x) const override {
    return score_and_grad_relaxed(x.to_grid());
  }

  ScoreGrad score_and_grad_relaxed(const Grid& z) const override {
    if (z.rows() != p_.length || z.cols() != p_.vocab_size) {
      throw ShapeMismatch("grid shape differs from MLP input");
    }
    // activations[k] is the input to layer k; hidden outputs are post-tanh.
    std::vector<std::vector<double>> act;
    act.emplace_back(z.data().begin(), z.data().end());
    for (std::size_t k = 0; k < p_.layers.size(); ++k) {
      const auto& l = p_.layers[k];
      std::vector<double> o(l.out);
      for (std::size_t r = 0; r < l.out; ++r) {
        double s = l.bias[r];
        for (std::size_t c = 0; c < l.in; ++c) s += l.weights[r * l.in + c] * act.back()[c];
        o[r] = (k + 1 < p_.layers.size()) ? std::tanh(s) : s;
      }
      act.push_back(std::move(o));
    }
    ScoreGrad out{act.back()[0], Grid(p_.length, p_.vocab_size)};

    std::vector<double> delta{1.0};  // d value / d (pre-activation of layer k)
    for (std::size_t k = p_.layers.size(); k-- > 0;) {
      const auto& l = p_.layers[k];
      std::vector<double> upstream(l.in, 0.0);
      for (std::size_t r = 0; r < l.out; ++r) {
        for (std::size_t c = 0; c < l.in; ++c) upstream[c] += l.weights[r * l.in + c] * delta[r];
      }
      if (k > 0) {
        for (std::size_t c = 0; c < l.in; ++c) {
          const double a = act[k][c];
          upstream[c] *= 1.0 - a * a;
        }
      }
      delta = std::move(upstream);
    }
    std::copy(delta.begin(), delta.end(), out.grad.data().begin());
    return out;
  }

  const MlpExpertParams& params() const noexcept { return p_; }

 private:
  MlpExpertParams p_;
};

// ---------------------------------------------------------------------------
// Handles, ensembles, instrumentation
// ---------------------------------------------------------------------------

class ExpertHandle {
 public:
  ExpertHandle(std::shared_ptr<const Expert> impl, ExpertRole role)
      : impl_(std::move(impl)), role_(role) {
    if (!impl_) throw InvalidArgument("null expert");
  }

  ExpertKind kind() const { return impl_->kind(); }
  ExpertRole role() const noexcept { return role_; }
  std::size_t length() const { return impl_->length(); }
  std::size_t vocab_size() const { return impl_->vocab_size(); }
  bool constant_gradient() const { return impl_->constant_gradient(); }
  const Expert& expert() const noexcept { return *impl_; }
  const std::shared_ptr<const Expert>& shared() const noexcept { return impl_; }

  ScoreGrad score_and_grad(const OneHotSequence& x) const {
    detail::check_shape(*impl_, x.length(), x.vocab_size());
    return impl_->score_and_grad(x);
  }
  double value(const OneHotSequence& x) const {
    detail::check_shape(*impl_, x.length(), x.vocab_size());
    return impl_->value(x);
  }
  ScoreGrad score_and_grad_relaxed(const Grid& z) const {
    detail::check_shape(*impl_, z.rows(), z.cols());
    return impl_->score_and_grad_relaxed(z);
  }

 private:
  std::shared_ptr<const Expert> impl_;
  ExpertRole role_;
};

inline ScoreGrad expert_score_and_grad(const ExpertHandle& e, const OneHotSequence& x) {
  return e.score_and_grad(x);
}

template <class E, class P>
ExpertHandle make_expert(P params, ExpertRole role) {
  return ExpertHandle(std::make_shared<const E>(std::move(params)), role);
}

// Arithmetic mean of member values and gradients.
class EnsembleExpert final : public Expert {
 public:
  explicit EnsembleExpert(std::vector<std::shared_ptr<const Expert>> members)
      : members_(std::move(members)) {
    if (members_.empty()) throw InvalidArgument("ensemble needs at least one member");
    for (const auto& m : members_) {
      if (!m) throw InvalidArgument("null ensemble member");
      detail::check_shape(*m, members_.front()->length(), members_.front()->vocab_size());
    }
  }
  ExpertKind kind() const override { return ExpertKind::ensemble; }
  std::size_t length() const override { return members_.front()->length(); }
  std::size_t vocab_size() const override { return members_.front()->vocab_size(); }
  bool constant_gradient() const override {
    return std::all_of(members_.begin(), members_.end(),
                       [](const auto& m) { return m->constant_gradient(); });
  }
  ScoreGrad score_and_grad(const OneHotSequence& x) const override {
    return mean([&](const Expert& m) { return m.score_and_grad(x); });
  }
  double value(const OneHotSequence& x) const override {
    double s = 0.0;
    for (const auto& m : members_) s += m->value(x);
    return s / static_cast<double>(members_.size());
  }
  ScoreGrad score_and_grad_relaxed(const Grid& z) const override {
    return mean([&](const Expert& m) { return m.score_and_grad_relaxed(z); });
  }
  std::size_t size() const noexcept { return members_.size(); }

 private:
  template <class F>
  ScoreGrad mean(F&& eval) const {
    ScoreGrad acc{0.0, Grid(length(), vocab_size())};
    for (const auto& m : members_) {
      ScoreGrad sg = eval(*m);
      acc.value += sg.value;
      acc.grad.add_scaled(sg.grad, 1.0);
    }
    const double n = static_cast<double>(members_.size());
    acc.value /= n;
    for (double& g : acc.grad.data()) g /= n;
    return acc;
  }
  std::vector<std::shared_ptr<const Expert>> members_;
};

inline ExpertHandle make_ensemble(const std::vector<ExpertHandle>& members) {
  if (members.empty()) throw InvalidArgument("ensemble needs at least one member");
  std::vector<std::shared_ptr<const Expert>> impls;
  for (const auto& m : members) {
    if (m.role() != members.front().role()) {
      throw InvalidArgument("ensemble members must share one role");
    }
    impls.push_back(m.shared());
  }
  return ExpertHandle(std::make_shared<const EnsembleExpert>(std::move(impls)),
                      members.front().role());
}

struct EvalCounter {
  std::atomic<long> value_calls{0};
  std::atomic<long> gradient_calls{0};
  void reset() {
    value_calls = 0;
    gradient_calls = 0;
  }
};

// Forwards to an inner expert and counts evaluations. A score_and_grad call
// is one value evaluation plus one gradient evaluation.
class CountingExpert final : public Expert {
 public:
  CountingExpert(std::shared_ptr<const Expert> inner, std::shared_ptr<EvalCounter> counter)
      : inner_(std::move(inner)), counter_(std::move(counter)) {}
  ExpertKind kind() const override { return inner_->kind(); }
  std::size_t length() const override { return inner_->length(); }
  std::size_t vocab_size() const override { return inner_->vocab_size(); }
  bool constant_gradient() const override { return inner_->constant_gradient(); }
  ScoreGrad score_and_grad(const OneHotSequence& x) const override {
    ++counter_->value_calls;
    ++counter_->gradient_calls;
    return inner_->score_and_grad(x);
  }
  double value(const OneHotSequence& x) const override {
    ++counter_->value_calls;
    return inner_->value(x);
  }
  ScoreGrad score_and_grad_relaxed(const Grid& z) const override {
    ++counter_->value_calls;
    ++counter_->gradient_calls;
    return inner_->score_and_grad_relaxed(z);
  }

 private:
  std::shared_ptr<const Expert> inner_;
  std::shared_ptr<EvalCounter> counter_;
};

inline ExpertHandle instrumented(const ExpertHandle& e, std::shared_ptr<EvalCounter> counter) {
  return ExpertHandle(std::make_shared<const CountingExpert>(e.shared(), std::move(counter)),
                      e.role());
}

// ---------------------------------------------------------------------------
// Product of experts
// ---------------------------------------------------------------------------

class ProductOfExperts {
 public:
  ProductOfExperts(std::vector<ExpertHandle> experts, double lambda) : lambda_(lambda) {
    if (experts.empty()) throw InvalidArgument("product of experts needs at least one expert");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw InvalidArgument("lambda must be a finite non-negative number");
    }
    length_ = experts.front().length();
    vocab_size_ = experts.front().vocab_size();
    for (auto& e : experts) {
      detail::check_shape(e.expert(), length_, vocab_size_);
      (e.role() == ExpertRole::unsupervised ? unsupervised_ : supervised_).push_back(std::move(e));
    }
  }

  std::size_t length() const noexcept { return length_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  double lambda() const noexcept { return lambda_; }
  const std::vector<ExpertHandle>& unsupervised() const noexcept { return unsupervised_; }
  const std::vector<ExpertHandle>& supervised() const noexcept { return supervised_; }

  ProductOfExperts with_lambda(double lambda) const {
    std::vector<ExpertHandle> all = unsupervised_;
    all.insert(all.end(), supervised_.begin(), supervised_.end());
    return ProductOfExperts(std::move(all), lambda);
  }

  // Rebuilds the product with every expert wrapped by f(handle).
  template <class F>
  ProductOfExperts transformed(F&& f) const {
    std::vector<ExpertHandle> all;
    for (const auto& e : unsupervised_) all.push_back(f(e));
    for (const auto& e : supervised_) all.push_back(f(e));
    return ProductOfExperts(std::move(all), lambda_);
  }

  bool constant_gradient() const {
    auto c = [](const ExpertHandle& e) { return e.constant_gradient(); };
    return std::all_of(unsupervised_.begin(), unsupervised_.end(), c) &&
           std::all_of(supervised_.begin(), supervised_.end(), c);
  }

  // One score_and_grad call per expert.
  ScoreGrad score_and_grad(const OneHotSequence& x) const {
    ScoreGrad total{0.0, Grid(length_, vocab_size_)};
    for (const auto& e : unsupervised_) {
      ScoreGrad sg = e.score_and_grad(x);
      total.value += sg.value;
      total.grad.add_scaled(sg.grad, 1.0);
    }
    if (!supervised_.empty()) {
      ScoreGrad sup{0.0, Grid(length_, vocab_size_)};
      for (const auto& e : supervised_) {
        ScoreGrad sg = e.score_and_grad(x);
        sup.value += sg.value;
        sup.grad.add_scaled(sg.grad, 1.0);
      }
      total.value += lambda_ * sup.value;
      total.grad.add_scaled(sup.grad, lambda_);
    }
    return total;
  }

  double unsupervised_value(const OneHotSequence& x) const {
    double s = 0.0;
    for (const auto& e : unsupervised_) s += e.value(x);
    return s;
  }
  double supervised_value(const OneHotSequence& x) const {
    double s = 0.0;
    for (const auto& e : supervised_) s += e.value(x);
    return s;
  }
  double value(const OneHotSequence& x) const {
    double v = unsupervised_value(x);
    if (!supervised_.empty()) v += lambda_ * supervised_value(x);
    return v;
  }

 private:
  std::vector<ExpertHandle> unsupervised_;
  std::vector<ExpertHandle> supervised_;
  double lambda_;
  std::size_t length_ = 0;
  std::size_t vocab_size_ = 0;
};

inline ScoreGrad poe_score_and_grad(const ProductOfExperts& poe, const OneHotSequence& x) {
  return poe.score_and_grad(x);
}

// ---------------------------------------------------------------------------
// Lambda calibration
// ---------------------------------------------------------------------------

struct LambdaGrid {
  std::vector<double> values{0.5, 1.0, 3.0, 5.0, 15.0};
};

struct LabeledVariant {
  OneHotSequence sequence;
  double activity = 0.0;
};

struct ScoreStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

template <class F>
ScoreStats score_stats(const std::vector<const LabeledVariant*>& pool, F&& score) {
  ScoreStats s{std::numeric_limits<double>::infinity(),
               -std::numeric_limits<double>::infinity(), 0.0};
  for (const auto* v : pool) {
    const double y = score(v->sequence);
    s.min = std::min(s.min, y);
    s.max = std::max(s.max, y);
    s.mean += y;
  }
  s.mean /= static_cast<double>(pool.size());
  return s;
}

// Picks the grid value that best matches {min, max, mean} of the unsupervised
// score sum with lambda * {min, max, mean} of the supervised score sum over
// the union of both pools (L1 mismatch; ties go to the smaller lambda).
inline double calibrate_lambda(const LambdaGrid& grid,
                               const std::vector<LabeledVariant>& low_pool,
                               const std::vector<LabeledVariant>& high_pool,
                               const ProductOfExperts& poe) {
  if (low_pool.empty() || high_pool.empty()) throw EmptyPool("both pools must be non-empty");
  if (grid.values.empty()) throw InvalidArgument("lambda grid is empty");
  for (double l : grid.values) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument("lambda grid values must be >= 0");
  }
  std::vector<const LabeledVariant*> pool;
  for (const auto& v : low_pool) pool.push_back(&v);
  for (const auto& v : high_pool) pool.push_back(&v);

  const ScoreStats su = score_stats(pool, [&](const auto& x) { return poe.unsupervised_value(x); });
  const ScoreStats sg = score_stats(pool, [&](const auto& x) { return poe.supervised_value(x); });

  std::vector<double> sorted = grid.values;
  std::sort(sorted.begin(), sorted.end());
  double best = sorted.front();
  double best_cost = std::numeric_limits<double>::infinity();
  for (double l : sorted) {
    const double cost = std::abs(su.min - l * sg.min) + std::abs(su.max - l * sg.max) +
                        std::abs(su.mean - l * sg.mean);
    if (cost < best_cost) {
      best_cost = cost;
      best = l;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Ridge regression on flattened one-hot features, unpenalized bias.
// ---------------------------------------------------------------------------

inline LinearExpertParams fit_linear_expert(const std::vector<LabeledVariant>& train,
                                            double ridge) {
  if (train.empty()) throw InvalidArgument("need at least one training example");
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw InvalidArgument("ridge must be >= 0");
  const std::size_t L = train.front().sequence.length();
  const std::size_t V = train.front().sequence.vocab_size();
  const Eigen::Index d = static_cast<Eigen::Index>(L * V);

  // Normal equations in (w, b); the one-hot design is sparse so accumulate
  // directly from token indices.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d + 1, d + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d + 1);
  std::vector<Eigen::Index> cols(L + 1);
  for (const auto& ex : train) {
    require_same_shape(ex.sequence, train.front().sequence);
    if (!std::isfinite(ex.activity)) throw InvalidArgument("non-finite activity label");
    for (std::size_t i = 0; i < L; ++i) {
      cols[i] = static_cast<Eigen::Index>(i * V + ex.sequence.token(i));
    }
    cols[L] = d;
    for (auto r : cols) {
      rhs(r) += ex.activity;
      for (auto c : cols) A(r, c) += 1.0;
    }
  }
  for (Eigen::Index k = 0; k < d; ++k) A(k, k) += ridge;

  // With ridge > 0 the system is positive definite (the bias column is the
  // only unpenalized direction and it is never orthogonal to the data).
  Eigen::VectorXd sol;
  if (ridge == 0.0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) {
      throw DegenerateSystem("normal matrix is singular at ridge = 0; use ridge > 0");
    }
    sol = lu.solve(rhs);
  } else {
    sol = Eigen::LDLT<Eigen::MatrixXd>(A).solve(rhs);
  }

  LinearExpertParams p{L, V, std::vector<double>(L * V), sol(d)};
  for (Eigen::Index k = 0; k < d; ++k) p.w[static_cast<std::size_t>(k)] = sol(k);
  return p;
}

}  // namespace ppde
