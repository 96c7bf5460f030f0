#pragma once

// Brute-force ground truth for small instances: exact normalization,
// exact MH transition kernels of the path samplers, empirical kernels and
// stationary laws, and the verification suite behind `ppde verify`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ppde/error.hpp"
#include "ppde/experts.hpp"
#include "ppde/rng.hpp"
#include "ppde/samplers.hpp"
#include "ppde/seqspace.hpp"

namespace ppde {

inline constexpr std::size_t kMaxEnumeratedStates = 1000000;

// V^L, or throws when it exceeds the enumeration cap.
inline std::size_t state_count(std::size_t length, std::size_t vocab_size,
                               std::size_t cap = kMaxEnumeratedStates) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < length; ++i) {
    if (n > cap / vocab_size) throw TooLargeToEnumerate("V^L exceeds the enumeration cap");
    n *= vocab_size;
  }
  if (n > cap) throw TooLargeToEnumerate("V^L exceeds the enumeration cap");
  return n;
}

// Lexicographic order with position 0 most significant.
inline OneHotSequence state_from_index(std::size_t index, std::size_t length,
                                       std::size_t vocab_size) {
  std::vector<Token> t(length);
  for (std::size_t i = length; i-- > 0;) {
    t[i] = static_cast<Token>(index % vocab_size);
    index /= vocab_size;
  }
  return OneHotSequence::from_tokens(t, vocab_size);
}

inline std::size_t state_index(std::span<const Token> tokens, std::size_t vocab_size) {
  std::size_t idx = 0;
  for (Token t : tokens) idx = idx * vocab_size + t;
  return idx;
}

inline std::size_t state_index(const OneHotSequence& x) {
  return state_index(x.tokens(), x.vocab_size());
}

struct EnumeratedDistribution {
  std::size_t length = 0;
  std::size_t vocab_size = 0;
  std::vector<double> log_weights;  // pi(x), canonical order
  double log_Z = 0.0;

  std::size_t size() const noexcept { return log_weights.size(); }
  OneHotSequence state(std::size_t k) const { return state_from_index(k, length, vocab_size); }
  double probability(std::size_t k) const { return std::exp(log_weights[k] - log_Z); }
  std::vector<double> probabilities() const {
    std::vector<double> p(size());
    for (std::size_t k = 0; k < size(); ++k) p[k] = probability(k);
    return p;
  }
  std::size_t argmax() const {
    return static_cast<std::size_t>(
        std::max_element(log_weights.begin(), log_weights.end()) - log_weights.begin());
  }
};

inline EnumeratedDistribution enumerate_distribution(const ProductOfExperts& poe, std::size_t length,
                                                     std::size_t vocab_size,
                                                     std::size_t threads = 1) {
  if (poe.length() != length || poe.vocab_size() != vocab_size) {
    throw ShapeMismatch("product of experts shape differs from requested (L, V)");
  }
  const std::size_t n = state_count(length, vocab_size);
  EnumeratedDistribution d{length, vocab_size, std::vector<double>(n), 0.0};
  auto fill = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      d.log_weights[k] = poe.value(state_from_index(k, length, vocab_size));
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, n);
  if (threads == 1) {
    fill(0, n);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(fill, n * t / threads, n * (t + 1) / threads);
    for (auto& th : pool) th.join();
  }
  d.log_Z = log_sum_exp(d.log_weights);
  return d;
}

inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeMismatch("distributions have different supports");
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) s += std::abs(p[k] - q[k]);
  return 0.5 * s;
}

// Visit frequencies over all V^L states after burn-in. `advance` performs one
// sampler step and returns the resulting state.
template <class Advance>
std::vector<double> empirical_stationary(Advance&& advance, std::size_t burn_in,
                                         std::size_t samples, std::size_t length,
                                         std::size_t vocab_size) {
  if (samples == 0) throw InvalidArgument("need at least one sample");
  std::vector<double> freq(state_count(length, vocab_size), 0.0);
  for (std::size_t t = 0; t < burn_in; ++t) advance();
  for (std::size_t t = 0; t < samples; ++t) {
    const OneHotSequence& x = advance();
    freq[state_index(x)] += 1.0;
  }
  for (double& f : freq) f /= static_cast<double>(samples);
  return freq;
}

// ---------------------------------------------------------------------------
// Exact transition kernels of the path samplers
// ---------------------------------------------------------------------------

// MH acceptance probability as a function of the log acceptance ratio.
using AcceptanceRule = std::function<double(double)>;

inline double mh_acceptance(double log_ratio) { return acceptance_probability(log_ratio); }

enum class ProposalFamily { taylor, exact };

using TokenKey = std::vector<Token>;
using KernelRow = std::map<TokenKey, double>;

inline TokenKey key_of(const OneHotSequence& x) { return {x.tokens().begin(), x.tokens().end()}; }

// Lazily evaluated pi and gradient per state.
class ScoreCache {
 public:
  explicit ScoreCache(const ProductOfExperts& poe) : poe_(poe) {}
  const ScoreGrad& at(const OneHotSequence& x) {
    auto key = key_of(x);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(std::move(key), poe_.score_and_grad(x)).first;
    return it->second;
  }
  const ProductOfExperts& poe() const noexcept { return poe_; }

 private:
  const ProductOfExperts& poe_;
  std::map<TokenKey, ScoreGrad> cache_;
};

inline Grid exact_logits_cached(const OneHotSequence& s, ScoreCache& cache,
                                const SamplerConfig& cfg) {
  const auto frozen = frozen_mask(cfg, s.length());
  const double base = cache.at(s).value;
  Grid logits(s.length(), s.vocab_size(), kNegInf);
  for (std::size_t i = 0; i < s.length(); ++i) {
    if (frozen[i]) continue;
    for (std::size_t a = 0; a < s.vocab_size(); ++a) {
      if (a == s.token(i)) {
        if (cfg.include_identity_moves) logits(i, a) = 0.0;
        continue;
      }
      logits(i, a) = 0.5 * (cache.at(apply_substitution(s, {i, static_cast<Token>(a)})).value - base);
    }
  }
  return logits;
}

// Calls visit(path) for every path of exactly `length` steps from origin
// under logits_at, with forward_logq filled in.
template <class LogitsAt, class Visit>
void enumerate_paths(const OneHotSequence& origin, std::size_t length, LogitsAt&& logits_at,
                     Visit&& visit) {
  PathRecord path{origin, origin, {}, 0.0, 0.0};
  std::function<void(std::size_t)> rec = [&](std::size_t depth) {
    if (depth == length) {
      visit(path);
      return;
    }
    const Grid logits = logits_at(path.terminal);
    const double lse = log_sum_exp(logits.data());
    const OneHotSequence here = path.terminal;
    const double logq_here = path.forward_logq;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      if (logits.data()[k] == kNegInf) continue;
      const Substitution s{k / logits.cols(), static_cast<Token>(k % logits.cols())};
      path.steps.push_back(s);
      path.terminal = apply_substitution(here, s);
      path.forward_logq = logq_here + logits.data()[k] - lse;
      rec(depth + 1);
      path.steps.pop_back();
    }
    path.terminal = here;
    path.forward_logq = logq_here;
  };
  rec(0);
}

// Number of cells a proposal step may choose from (state independent).
inline std::size_t branching_factor(std::size_t length, std::size_t vocab_size,
                                    const SamplerConfig& cfg) {
  const auto frozen = frozen_mask(cfg, length);
  const auto free_positions =
      static_cast<std::size_t>(std::count(frozen.begin(), frozen.end(), false));
  return free_positions * (vocab_size - (cfg.include_identity_moves ? 0 : 1));
}

inline double path_count(std::size_t branching, std::size_t max_path_length) {
  double total = 0.0;
  for (std::size_t r = 1; r <= max_path_length; ++r) total += std::pow(double(branching), double(r));
  return total;
}

// One row K(x, .) of the MH kernel: proposal (R uniform on 1..U, then a
// path) times acceptance, plus the rejection mass on x itself.
inline KernelRow kernel_row(const OneHotSequence& x, ScoreCache& cache, const SamplerConfig& cfg,
                            ProposalFamily family, const AcceptanceRule& accept = mh_acceptance) {
  KernelRow row;
  const double pr = 1.0 / static_cast<double>(cfg.max_path_length);
  const auto key_x = key_of(x);
  if (branching_factor(x.length(), x.vocab_size(), cfg) == 0) {
    row[key_x] = 1.0;
    return row;
  }
  const double origin_logp = cache.at(x).value;
  for (std::size_t R = 1; R <= cfg.max_path_length; ++R) {
    auto visit = [&](const PathRecord& path) {
      const ScoreGrad& term = cache.at(path.terminal);
      double rev;
      if (family == ProposalFamily::taylor) {
        rev = reverse_path_logq_with_gradient(path, term.grad, cfg);
      } else {
        rev = path_reverse_logq(
            path, [&](const OneHotSequence& s) { return exact_logits_cached(s, cache, cfg); });
      }
      const double a = accept((term.value - origin_logp) + (rev - path.forward_logq));
      const double mass = pr * std::exp(path.forward_logq);
      row[key_of(path.terminal)] += mass * a;
      row[key_x] += mass * (1.0 - a);
    };
    if (family == ProposalFamily::taylor) {
      const Grid grad0 = cache.at(x).grad;
      enumerate_paths(x, R, [&](const OneHotSequence& s) { return proposal_logits(grad0, s, cfg); },
                      visit);
    } else {
      enumerate_paths(x, R, [&](const OneHotSequence& s) { return exact_logits_cached(s, cache, cfg); },
                      visit);
    }
  }
  return row;
}

// Dense V^L x V^L kernel; rows indexed by canonical state order.
inline std::vector<std::vector<double>> full_kernel(const ProductOfExperts& poe,
                                                    const SamplerConfig& cfg, ProposalFamily family,
                                                    const AcceptanceRule& accept = mh_acceptance,
                                                    std::size_t cap = 4096) {
  const std::size_t n = state_count(poe.length(), poe.vocab_size(), cap);
  ScoreCache cache(poe);
  std::vector<std::vector<double>> K(n, std::vector<double>(n, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    const auto row =
        kernel_row(state_from_index(k, poe.length(), poe.vocab_size()), cache, cfg, family, accept);
    for (const auto& [key, p] : row) K[k][state_index(key, poe.vocab_size())] += p;
  }
  return K;
}

// max over pairs of |p(x) K(x,y) - p(y) K(y,x)|
inline double detailed_balance_error(const std::vector<std::vector<double>>& K,
                                     std::span<const double> p) {
  double worst = 0.0;
  for (std::size_t x = 0; x < K.size(); ++x) {
    for (std::size_t y = x + 1; y < K.size(); ++y) {
      worst = std::max(worst, std::abs(p[x] * K[x][y] - p[y] * K[y][x]));
    }
  }
  return worst;
}

// max over y of |(pK)(y) - p(y)|
inline double stationarity_error(const std::vector<std::vector<double>>& K,
                                 std::span<const double> p) {
  double worst = 0.0;
  for (std::size_t y = 0; y < K.size(); ++y) {
    double s = 0.0;
    for (std::size_t x = 0; x < K.size(); ++x) s += p[x] * K[x][y];
    worst = std::max(worst, std::abs(s - p[y]));
  }
  return worst;
}

struct ProposalGap {
  double max_abs = 0.0;  // largest per-cell probability difference
  double tv = 0.0;
};

// Single-step Taylor proposal at x versus the exact locally-balanced one.
inline ProposalGap proposal_gap(const OneHotSequence& x, const ProductOfExperts& poe,
                                const SamplerConfig& cfg) {
  const Grid taylor = softmax(proposal_logits(poe.score_and_grad(x).grad, x, cfg));
  const Grid exact = exact_lb_proposal(x, poe, cfg);
  ProposalGap g;
  for (std::size_t k = 0; k < taylor.size(); ++k) {
    const double d = std::abs(taylor.data()[k] - exact.data()[k]);
    g.max_abs = std::max(g.max_abs, d);
    g.tv += 0.5 * d;
  }
  return g;
}

enum class KernelCheckMode { automatic, exact, monte_carlo };

struct KernelCheckReport {
  std::string mode;  // "exact" or "monte_carlo"
  double n_paths = 0.0;
  std::size_t n_samples = 0;
  double max_discrepancy = 0.0;
  double max_z = 0.0;  // Monte Carlo only
  double tolerance = 0.0;
  bool passed = false;
};

inline constexpr double kMaxExactPaths = 1e5;

// With only constant-gradient experts the Taylor path kernel and the exact
// locally-balanced path kernel from x must coincide. Exact mode sums every
// path; Monte Carlo mode compares next-state histograms of the two samplers
// at a 4 sigma multinomial band.
inline KernelCheckReport kernel_ratio_check(const OneHotSequence& x, const ProductOfExperts& poe,
                                            const SamplerConfig& cfg, std::size_t n_samples,
                                            KernelCheckMode mode, Rng& rng) {
  if (!poe.constant_gradient()) {
    throw NonLinearExpertPresent("kernel equality holds only for constant-gradient experts");
  }
  KernelCheckReport rep;
  rep.n_paths = path_count(branching_factor(x.length(), x.vocab_size(), cfg), cfg.max_path_length);
  const bool exact = mode == KernelCheckMode::exact ||
                     (mode == KernelCheckMode::automatic && rep.n_paths <= kMaxExactPaths);
  if (exact) {
    rep.mode = "exact";
    rep.tolerance = 1e-12;
    ScoreCache cache(poe);
    const KernelRow taylor = kernel_row(x, cache, cfg, ProposalFamily::taylor);
    const KernelRow exact_row = kernel_row(x, cache, cfg, ProposalFamily::exact);
    std::map<TokenKey, double> diff;
    for (const auto& [k, v] : taylor) diff[k] += v;
    for (const auto& [k, v] : exact_row) diff[k] -= v;
    for (const auto& [k, v] : diff) rep.max_discrepancy = std::max(rep.max_discrepancy, std::abs(v));
    rep.passed = rep.max_discrepancy <= rep.tolerance;
    return rep;
  }

  rep.mode = "monte_carlo";
  rep.n_samples = n_samples;
  rep.tolerance = 4.0;
  if (n_samples == 0) throw InvalidArgument("Monte Carlo kernel check needs samples");
  std::map<TokenKey, double> hist_taylor, hist_exact;
  const ChainState start = ChainState::start(x, poe);
  for (std::size_t k = 0; k < n_samples; ++k) {
    hist_taylor[key_of(ppde_step(start, poe, cfg, rng).state.current)] += 1.0;
    hist_exact[key_of(exact_lb_step(start, poe, cfg, rng).state.current)] += 1.0;
  }
  std::map<TokenKey, bool> keys;
  for (const auto& [k, v] : hist_taylor) keys[k] = true;
  for (const auto& [k, v] : hist_exact) keys[k] = true;
  const double n = static_cast<double>(n_samples);
  for (const auto& [k, unused] : keys) {
    const double p1 = hist_taylor[k] / n;
    const double p2 = hist_exact[k] / n;
    const double pbar = 0.5 * (p1 + p2);
    const double sigma = std::sqrt(std::max(pbar * (1.0 - pbar), 1.0 / n) * 2.0 / n);
    rep.max_discrepancy = std::max(rep.max_discrepancy, std::abs(p1 - p2));
    rep.max_z = std::max(rep.max_z, std::abs(p1 - p2) / sigma);
  }
  rep.passed = rep.max_z <= rep.tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Desk-scale instance and verification suite
// ---------------------------------------------------------------------------

struct DeskInstance {
  Vocabulary vocab;
  OneHotSequence wt;
  PottsParams potts;
  LinearExpertParams linear;  // fitted on synthetic labels
  ProductOfExperts poe;       // Potts (unsupervised) + linear (supervised)
};

template <class Gen>
OneHotSequence random_sequence(std::size_t length, std::size_t vocab_size, Gen& rng) {
  std::vector<Token> t(length);
  for (auto& v : t) v = static_cast<Token>(uniform_index(rng, vocab_size));
  return OneHotSequence::from_tokens(t, vocab_size);
}

// Random Potts entries ~ N(0, potts_std^2) and a linear supervised expert
// fitted by ridge regression (ridge = 1) to 200 noisy labels of a hidden
// linear function.
inline DeskInstance make_desk_instance(std::size_t length, std::size_t vocab_size,
                                       std::uint64_t seed, double potts_std = 0.3,
                                       double lambda = 1.0) {
  if (vocab_size > kAminoAcids.size()) throw InvalidArgument("desk vocabulary too large");
  Rng rng(derive_seed(seed, 0xD35C));
  Vocabulary vocab(kAminoAcids.substr(0, vocab_size));
  OneHotSequence wt = random_sequence(length, vocab_size, rng);
  std::vector<double> h(length * vocab_size), J(length * length * vocab_size * vocab_size);
  for (double& v : h) v = potts_std * standard_normal(rng);
  for (double& v : J) v = potts_std * standard_normal(rng);
  PottsParams potts = PottsParams::create(length, vocab_size, std::move(h), std::move(J), wt);

  LinearExpertParams truth{length, vocab_size, std::vector<double>(length * vocab_size), 0.0};
  for (double& v : truth.w) v = standard_normal(rng);
  const LinearExpert truth_expert(truth);
  std::vector<LabeledVariant> train;
  for (int k = 0; k < 200; ++k) {
    OneHotSequence x = random_sequence(length, vocab_size, rng);
    const double y = truth_expert.value(x) + 0.1 * standard_normal(rng);
    train.push_back({std::move(x), y});
  }
  LinearExpertParams fitted = fit_linear_expert(train, 1.0);

  ProductOfExperts poe({make_expert<PottsExpert>(potts, ExpertRole::unsupervised),
                        make_expert<LinearExpert>(fitted, ExpertRole::supervised)},
                       lambda);
  return {std::move(vocab), std::move(wt), std::move(potts), std::move(fitted), std::move(poe)};
}

struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct VerifyPreset {
  std::string name;
  std::size_t length = 0;
  std::size_t vocab_size = 0;
  std::uint64_t seed = 0;
  std::size_t burn_in = 10000;
  std::size_t samples = 100000;
};

inline VerifyPreset verify_preset(std::string_view name) {
  if (name == "tiny") return {"tiny", 3, 3, 11, 10000, 100000};
  if (name == "small") return {"small", 4, 4, 7, 10000, 100000};
  throw InvalidArgument("unknown verify preset '" + std::string(name) + "' (tiny|small)");
}

inline double stationary_tv(const DeskInstance& inst, std::size_t max_path_length,
                            std::size_t burn_in, std::size_t samples, std::uint64_t seed) {
  const auto L = inst.wt.length();
  const auto V = inst.wt.vocab_size();
  const auto exact = enumerate_distribution(inst.poe, L, V).probabilities();
  SamplerConfig cfg;
  cfg.max_path_length = max_path_length;
  Rng rng(derive_seed(seed, 0x57A7));
  ChainState st = ChainState::start(inst.wt, inst.poe);
  const auto freq = empirical_stationary(
      [&]() -> const OneHotSequence& {
        st = ppde_step(std::move(st), inst.poe, cfg, rng).state;
        return st.current;
      },
      burn_in, samples, L, V);
  return tv_distance(freq, exact);
}

// A linear-only product built from the instance: the fitted supervised
// expert plus a random unsupervised linear expert.
inline ProductOfExperts linear_only_poe(const DeskInstance& inst, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x11AE));
  LinearExpertParams u{inst.wt.length(), inst.wt.vocab_size(),
                       std::vector<double>(inst.wt.length() * inst.wt.vocab_size()), 0.3};
  for (double& v : u.w) v = standard_normal(rng);
  return ProductOfExperts({make_expert<LinearExpert>(u, ExpertRole::unsupervised),
                           make_expert<LinearExpert>(inst.linear, ExpertRole::supervised)},
                          inst.poe.lambda());
}

inline std::vector<CheckResult> verify_suite(const VerifyPreset& preset,
                                             const AcceptanceRule& accept = mh_acceptance) {
  const DeskInstance inst = make_desk_instance(preset.length, preset.vocab_size, preset.seed);
  const ProductOfExperts linear = linear_only_poe(inst, preset.seed);
  const auto L = inst.wt.length();
  const auto V = inst.wt.vocab_size();
  std::vector<CheckResult> out;

  {
    const double tv = stationary_tv(inst, 3, preset.burn_in, preset.samples, preset.seed);
    out.push_back({"stationary_tv", tv <= 0.05, tv, 0.05,
                   "PPDE U=3 visit frequencies vs enumerated exp(pi)/Z"});
  }
  {
    Rng rng(derive_seed(preset.seed, 0xC0));
    SamplerConfig cfg;
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      worst = std::max(worst, proposal_gap(random_sequence(L, V, rng), linear, cfg).max_abs);
    }
    out.push_back({"k0_proposal_equality", worst <= 1e-12, worst, 1e-12,
                   "Taylor vs exact proposal, 100 random states, linear experts"});
  }
  {
    Rng rng(derive_seed(preset.seed, 0xC1));
    SamplerConfig cfg;
    cfg.max_path_length = 3;
    double worst = 0.0;
    for (int k = 0; k < 5; ++k) {
      const auto rep = kernel_ratio_check(random_sequence(L, V, rng), linear, cfg, 0,
                                          KernelCheckMode::exact, rng);
      worst = std::max(worst, rep.max_discrepancy);
    }
    out.push_back({"k0_kernel_equality", worst <= 1e-12, worst, 1e-12,
                   "exact path kernels, U=3, 5 random states, linear experts"});
  }
  {
    SamplerConfig cfg;
    cfg.max_path_length = 1;
    const auto p = enumerate_distribution(linear, L, V).probabilities();
    const auto K = full_kernel(linear, cfg, ProposalFamily::taylor, accept);
    const double err = detailed_balance_error(K, p);
    out.push_back({"detailed_balance_u1_linear", err <= 1e-10, err, 1e-10,
                   "analytic U=1 kernel, linear experts"});
  }
  {
    SamplerConfig cfg;
    cfg.max_path_length = 3;
    const auto p = enumerate_distribution(inst.poe, L, V).probabilities();
    const auto K = full_kernel(inst.poe, cfg, ProposalFamily::taylor, accept);
    const double db = detailed_balance_error(K, p);
    out.push_back({"detailed_balance_u3_poe", db <= 1e-10, db, 1e-10,
                   "analytic U=3 kernel, Potts + linear"});
    const double st = stationarity_error(K, p);
    out.push_back({"stationarity_u3_poe", st <= 1e-10, st, 1e-10,
                   "max |pK - p|, analytic U=3 kernel, Potts + linear"});
  }
  return out;
}

inline bool all_passed(const std::vector<CheckResult>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Line-oriented key=value report.
inline void write_report(std::ostream& os, const std::string& preset,
                         const std::vector<CheckResult>& checks) {
  os << "preset=" << preset << '\n';
  for (const auto& c : checks) {
    os << "check." << c.name << ".value=" << format_double(c.value) << '\n';
    os << "check." << c.name << ".threshold=" << format_double(c.threshold) << '\n';
    os << "check." << c.name << ".passed=" << (c.passed ? "true" : "false") << '\n';
  }
  os << "all_passed=" << (all_passed(checks) ? "true" : "false") << '\n';
}

inline std::map<std::string, std::string> read_report(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(n, "expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace ppde
