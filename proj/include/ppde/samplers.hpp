#pragma once

// Samplers over fixed-length categorical sequences:
//
//  * ppde_step      gradient-informed path proposal with Metropolis-Hastings
//                   acceptance (one gradient at the path origin, one at the
//                   terminal state)
//  * exact_lb_step  the same path sampler with the exact square-root
//                   locally-balanced proposal, evaluated by enumeration
//  * sa_step        simulated annealing with random multi-substitution moves
//  * random_sampling_run   one random mutation draw per variant from WT, top K
//  * mala_approx_step      Langevin steps in relaxed logit space with
//                          straight-through gradients

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>
#include <tuple>
#include <vector>

#include "ppde/error.hpp"
#include "ppde/experts.hpp"
#include "ppde/rng.hpp"
#include "ppde/seqspace.hpp"
#include "ppde/trace.hpp"

namespace ppde {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct SamplerConfig {
  std::size_t max_path_length = 3;
  bool include_identity_moves = false;
  std::vector<std::size_t> frozen_positions;
  std::int64_t steps = 10000;
  std::uint64_t seed = 0;
};

inline void validate(const SamplerConfig& cfg, std::size_t length) {
  if (cfg.max_path_length < 1) throw InvalidArgument("max path length must be >= 1");
  if (cfg.steps < 1) throw InvalidArgument("steps must be >= 1");
  for (std::size_t p : cfg.frozen_positions) {
    if (p >= length) throw OutOfBounds("frozen position " + std::to_string(p) + " out of range");
  }
}

inline std::vector<bool> frozen_mask(const SamplerConfig& cfg, std::size_t length) {
  std::vector<bool> mask(length, false);
  for (std::size_t p : cfg.frozen_positions) {
    if (p >= length) throw OutOfBounds("frozen position " + std::to_string(p) + " out of range");
    mask[p] = true;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Categorical over the L x V cell grid
// ---------------------------------------------------------------------------

inline double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline Grid softmax(const Grid& logits) {
  Grid p(logits.rows(), logits.cols());
  const double lse = log_sum_exp(logits.data());
  if (lse == kNegInf) return p;
  for (std::size_t k = 0; k < p.size(); ++k) p.data()[k] = std::exp(logits.data()[k] - lse);
  return p;
}

inline double cell_log_prob(const Grid& logits, const Substitution& s) {
  return logits(s.position, s.new_token) - log_sum_exp(logits.data());
}

struct CellDraw {
  Substitution substitution;
  double log_prob = 0.0;
};

// Inverse-CDF draw; nullopt when every cell is masked.
inline std::optional<CellDraw> sample_cell(const Grid& logits, Rng& rng) {
  const double lse = log_sum_exp(logits.data());
  if (lse == kNegInf) return std::nullopt;
  const double u = uniform01(rng);
  double cum = 0.0;
  std::size_t chosen = logits.size();
  std::size_t last_finite = logits.size();
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const double l = logits.data()[k];
    if (l == kNegInf) continue;
    last_finite = k;
    cum += std::exp(l - lse);
    if (u < cum) {
      chosen = k;
      break;
    }
  }
  if (chosen == logits.size()) chosen = last_finite;
  const std::size_t v = logits.cols();
  return CellDraw{{chosen / v, static_cast<Token>(chosen % v)}, logits.data()[chosen] - lse};
}

// ---------------------------------------------------------------------------
// Proposals
// ---------------------------------------------------------------------------

// Taylor proposal logits around state x using a gradient taken (possibly) at
// another state: logit(i, a) = (grad[i,a] - grad[i, x_i]) / 2.
inline Grid proposal_logits(const Grid& grad, const OneHotSequence& x, const SamplerConfig& cfg) {
  if (grad.rows() != x.length() || grad.cols() != x.vocab_size()) {
    throw ShapeMismatch("gradient grid does not match sequence shape");
  }
  const auto frozen = frozen_mask(cfg, x.length());
  Grid logits(x.length(), x.vocab_size());
  for (std::size_t i = 0; i < x.length(); ++i) {
    const Token cur = x.token(i);
    for (std::size_t a = 0; a < x.vocab_size(); ++a) {
      if (frozen[i] || (a == cur && !cfg.include_identity_moves)) {
        logits(i, a) = kNegInf;
      } else {
        logits(i, a) = 0.5 * (grad(i, a) - grad(i, cur));
      }
    }
  }
  return logits;
}

inline constexpr std::size_t kMaxEnumeratedCells = 100000;

// Exact locally-balanced logits: (pi(x') - pi(x)) / 2 for each single
// substitution x -> x'.
inline Grid exact_lb_logits(const OneHotSequence& x, const ProductOfExperts& poe,
                            const SamplerConfig& cfg) {
  if (x.length() * x.vocab_size() > kMaxEnumeratedCells) {
    throw TooLargeToEnumerate("L*V exceeds the exact-proposal enumeration cap");
  }
  const auto frozen = frozen_mask(cfg, x.length());
  const double base = poe.value(x);
  Grid logits(x.length(), x.vocab_size(), kNegInf);
  for (std::size_t i = 0; i < x.length(); ++i) {
    if (frozen[i]) continue;
    for (std::size_t a = 0; a < x.vocab_size(); ++a) {
      if (a == x.token(i)) {
        if (cfg.include_identity_moves) logits(i, a) = 0.0;
        continue;
      }
      const auto y = apply_substitution(x, {i, static_cast<Token>(a)});
      logits(i, a) = 0.5 * (poe.value(y) - base);
    }
  }
  return logits;
}

// Normalized exact proposal over the 1-Hamming ball, laid out on the cell grid.
inline Grid exact_lb_proposal(const OneHotSequence& x, const ProductOfExperts& poe,
                              const SamplerConfig& cfg) {
  return softmax(exact_lb_logits(x, poe, cfg));
}

// ---------------------------------------------------------------------------
// Path proposals
// ---------------------------------------------------------------------------

struct PathRecord {
  OneHotSequence origin;
  OneHotSequence terminal;
  std::vector<Substitution> steps;
  double forward_logq = 0.0;
  double reverse_logq = 0.0;

  std::size_t length() const noexcept { return steps.size(); }

  // x^0, ..., x^R.
  std::vector<OneHotSequence> states() const {
    std::vector<OneHotSequence> s{origin};
    for (const auto& sub : steps) s.push_back(apply_substitution(s.back(), sub));
    return s;
  }
};

inline std::size_t sample_path_length(std::size_t max_path_length, Rng& rng) {
  return 1 + static_cast<std::size_t>(uniform_index(rng, max_path_length));
}

// Samples `length` substitutions, each from logits_at(x^{r-1}). Stops early
// only if every cell is masked (then the path is empty).
template <class LogitsAt>
PathRecord sample_path(const OneHotSequence& origin, std::size_t length, LogitsAt&& logits_at,
                       Rng& rng) {
  PathRecord path{origin, origin, {}, 0.0, 0.0};
  for (std::size_t r = 0; r < length; ++r) {
    auto draw = sample_cell(logits_at(path.terminal), rng);
    if (!draw) break;
    path.steps.push_back(draw->substitution);
    path.forward_logq += draw->log_prob;
    path.terminal = apply_substitution(path.terminal, draw->substitution);
  }
  return path;
}

// Sum over r = R..1 of log q(x^{r-1} | x^r) with logits from logits_at(x^r).
template <class LogitsAt>
double path_reverse_logq(const PathRecord& path, LogitsAt&& logits_at) {
  const auto states = path.states();
  double logq = 0.0;
  for (std::size_t r = path.steps.size(); r >= 1; --r) {
    const std::size_t pos = path.steps[r - 1].position;
    const Substitution back{pos, states[r - 1].token(pos)};
    logq += cell_log_prob(logits_at(states[r]), back);
  }
  return logq;
}

inline PathRecord propose_path_with_gradient(const OneHotSequence& x, const Grid& grad,
                                             const SamplerConfig& cfg, Rng& rng) {
  const std::size_t R = sample_path_length(cfg.max_path_length, rng);
  return sample_path(x, R, [&](const OneHotSequence& s) { return proposal_logits(grad, s, cfg); },
                     rng);
}

inline PathRecord propose_path(const OneHotSequence& x, const ProductOfExperts& poe,
                               const SamplerConfig& cfg, Rng& rng) {
  return propose_path_with_gradient(x, poe.score_and_grad(x).grad, cfg, rng);
}

inline double reverse_path_logq_with_gradient(const PathRecord& path, const Grid& terminal_grad,
                                              const SamplerConfig& cfg) {
  return path_reverse_logq(
      path, [&](const OneHotSequence& s) { return proposal_logits(terminal_grad, s, cfg); });
}

inline double reverse_path_logq(const PathRecord& path, const ProductOfExperts& poe,
                                const SamplerConfig& cfg) {
  return reverse_path_logq_with_gradient(path, poe.score_and_grad(path.terminal).grad, cfg);
}

// ---------------------------------------------------------------------------
// Chain state and MH steps
// ---------------------------------------------------------------------------

struct ChainState {
  OneHotSequence current;
  double current_logp = 0.0;
  std::int64_t step_index = 0;
  OneHotSequence best;
  double best_logp = 0.0;

  static ChainState start(const OneHotSequence& x, double logp) {
    return ChainState{x, logp, 0, x, logp};
  }
  static ChainState start(const OneHotSequence& x, const ProductOfExperts& poe) {
    return start(x, poe.value(x));
  }

  void advance(bool accepted, OneHotSequence proposal, double proposal_logp) {
    ++step_index;
    if (accepted) {
      current = std::move(proposal);
      current_logp = proposal_logp;
    }
    if (current_logp > best_logp) {
      best = current;
      best_logp = current_logp;
    }
  }
};

struct StepOutcome {
  bool accepted = false;
  std::size_t path_length = 0;
  double log_accept_ratio = kNegInf;
  double accept_prob = 0.0;
};

struct StepResult {
  ChainState state;
  StepOutcome outcome;
};

inline double acceptance_probability(double log_ratio) {
  if (std::isnan(log_ratio)) throw NonFiniteState("acceptance log-ratio is NaN");
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

namespace detail {

inline StepResult mh_finish(ChainState state, const PathRecord& path, double origin_logp,
                            double terminal_logp, Rng& rng) {
  StepOutcome out;
  out.path_length = path.length();
  out.log_accept_ratio =
      (terminal_logp - origin_logp) + (path.reverse_logq - path.forward_logq);
  if (!std::isfinite(terminal_logp) || !std::isfinite(origin_logp)) {
    throw NonFiniteState("non-finite product-of-experts score");
  }
  out.accept_prob = acceptance_probability(out.log_accept_ratio);
  out.accepted = uniform01(rng) < out.accept_prob;
  state.current_logp = origin_logp;
  state.advance(out.accepted, path.terminal, terminal_logp);
  return {std::move(state), out};
}

inline StepResult no_move(ChainState state, double origin_logp) {
  state.current_logp = origin_logp;
  state.advance(false, state.current, origin_logp);
  return {std::move(state), StepOutcome{}};
}

}  // namespace detail

// One gradient evaluation at x and one at x'; pi is taken from the same calls.
inline StepResult ppde_step(ChainState state, const ProductOfExperts& poe,
                            const SamplerConfig& cfg, Rng& rng) {
  const ScoreGrad origin = poe.score_and_grad(state.current);
  PathRecord path = propose_path_with_gradient(state.current, origin.grad, cfg, rng);
  if (path.steps.empty()) return detail::no_move(std::move(state), origin.value);
  const ScoreGrad terminal = poe.score_and_grad(path.terminal);
  path.reverse_logq = reverse_path_logq_with_gradient(path, terminal.grad, cfg);
  return detail::mh_finish(std::move(state), path, origin.value, terminal.value, rng);
}

// Path sampler with the exact proposal at every intermediate state. Costs
// O(R * L * V) value evaluations per step; an oracle, not a workhorse.
inline StepResult exact_lb_step(ChainState state, const ProductOfExperts& poe,
                                const SamplerConfig& cfg, Rng& rng) {
  auto logits_at = [&](const OneHotSequence& s) { return exact_lb_logits(s, poe, cfg); };
  const double origin_logp = poe.value(state.current);
  const std::size_t R = sample_path_length(cfg.max_path_length, rng);
  PathRecord path = sample_path(state.current, R, logits_at, rng);
  if (path.steps.empty()) return detail::no_move(std::move(state), origin_logp);
  path.reverse_logq = path_reverse_logq(path, logits_at);
  return detail::mh_finish(std::move(state), path, origin_logp, poe.value(path.terminal), rng);
}

// ---------------------------------------------------------------------------
// Simulated annealing and random sampling
// ---------------------------------------------------------------------------

struct AnnealSchedule {
  double t_init = 1.0;
  double t_final = 1e-2;
  double decay = 1.0;

  // Geometric decay from t_init at the first step to t_final at the last.
  static AnnealSchedule geometric(double t_init, double t_final, std::int64_t steps) {
    AnnealSchedule s{t_init, t_final, 1.0};
    if (steps > 1) s.decay = std::pow(t_final / t_init, 1.0 / static_cast<double>(steps - 1));
    validate(s);
    return s;
  }

  static void validate(const AnnealSchedule& s) {
    if (!(s.t_init > 0.0) || !(s.t_final > 0.0)) throw InvalidArgument("temperatures must be > 0");
    if (!(s.decay > 0.0 && s.decay <= 1.0)) throw InvalidArgument("decay must lie in (0, 1]");
  }
};

// m ~ Poisson(mu - 1) + 1 with mu ~ Uniform(1, 2.5).
inline unsigned sample_mutation_count(Rng& rng) {
  const double mu = 1.0 + 1.5 * uniform01(rng);
  return poisson(rng, mu - 1.0) + 1;
}

// Applies m substitutions, each at a uniform free position to a uniform
// token different from the one currently there.
inline OneHotSequence random_mutation(const OneHotSequence& x, unsigned m,
                                      const std::vector<bool>& frozen, Rng& rng) {
  std::vector<std::size_t> free_positions;
  for (std::size_t i = 0; i < x.length(); ++i) {
    if (!frozen[i]) free_positions.push_back(i);
  }
  if (free_positions.empty()) return x;
  OneHotSequence y = x;
  for (unsigned k = 0; k < m; ++k) {
    const std::size_t pos = free_positions[uniform_index(rng, free_positions.size())];
    auto tok = static_cast<Token>(uniform_index(rng, x.vocab_size() - 1));
    if (tok >= y.token(pos)) ++tok;
    y = apply_substitution(y, {pos, tok});
  }
  return y;
}

struct SaState {
  ChainState chain;
  double temperature = 1.0;
};

struct SaResult {
  SaState state;
  bool accepted = false;
};

inline SaResult sa_step(SaState state, const ProductOfExperts& poe, const AnnealSchedule& schedule,
                        const SamplerConfig& cfg, Rng& rng) {
  if (!(state.temperature > 0.0)) throw InvalidArgument("temperature must be > 0");
  const auto frozen = frozen_mask(cfg, state.chain.current.length());
  OneHotSequence proposal =
      random_mutation(state.chain.current, sample_mutation_count(rng), frozen, rng);
  const double logp = poe.value(proposal);
  if (!std::isfinite(logp)) throw NonFiniteState("non-finite product-of-experts score");
  const double log_ratio = (logp - state.chain.current_logp) / state.temperature;
  const bool accepted = uniform01(rng) < acceptance_probability(log_ratio);
  state.chain.advance(accepted, std::move(proposal), logp);
  state.temperature *= schedule.decay;
  return {std::move(state), accepted};
}

struct ScoredVariant {
  OneHotSequence sequence;
  double score = 0.0;
  std::size_t index = 0;  // generation order
};

struct RandomSearchResult {
  std::vector<ScoredVariant> top;  // descending by score, ties by index
  std::vector<ScoredVariant> all;  // generation order
};

inline RandomSearchResult random_sampling_run(const OneHotSequence& wt,
                                              const ProductOfExperts& poe, std::size_t budget,
                                              std::size_t top_k, const SamplerConfig& cfg,
                                              Rng& rng) {
  if (top_k < 1 || budget < top_k) throw InvalidArgument("need budget >= top_k >= 1");
  const auto frozen = frozen_mask(cfg, wt.length());
  RandomSearchResult res;
  res.all.reserve(budget);
  for (std::size_t n = 0; n < budget; ++n) {
    OneHotSequence v = random_mutation(wt, sample_mutation_count(rng), frozen, rng);
    const double s = poe.value(v);
    res.all.push_back({std::move(v), s, n});
  }
  std::vector<std::size_t> order(budget);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return res.all[a].score > res.all[b].score; });
  for (std::size_t k = 0; k < top_k; ++k) res.top.push_back(res.all[order[k]]);
  return res;
}

// ---------------------------------------------------------------------------
// MALA in relaxed logit space
// ---------------------------------------------------------------------------

struct MalaConfig {
  double step_size = 0.1;
  double tau = 0.5;
  std::uint64_t seed = 0;
};

inline void validate(const MalaConfig& m) {
  if (!(m.step_size >= 0.0) || !std::isfinite(m.step_size)) {
    throw InvalidArgument("MALA step size must be >= 0");
  }
  if (!(m.tau > 0.0 && m.tau < 1.0)) throw InvalidArgument("MALA tau must lie in (0, 1)");
}

// log((1 - tau) / V + tau * x_wt) per cell.
inline Grid mala_init_logits(const OneHotSequence& wt, double tau) {
  const double v = static_cast<double>(wt.vocab_size());
  Grid g(wt.length(), wt.vocab_size());
  for (std::size_t i = 0; i < wt.length(); ++i) {
    for (std::size_t a = 0; a < wt.vocab_size(); ++a) {
      g(i, a) = std::log((1.0 - tau) / v + tau * (wt.token(i) == a ? 1.0 : 0.0));
    }
  }
  return g;
}

// Relaxed-categorical sample then argmax, which is a Gumbel-max draw.
// Frozen positions keep their wild-type token.
inline OneHotSequence mala_round(const Grid& logits, const std::vector<bool>& frozen,
                                 const OneHotSequence& wt, Rng& rng) {
  std::vector<Token> t(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (frozen[i]) {
      t[i] = wt.token(i);
      continue;
    }
    double best = kNegInf;
    std::size_t arg = 0;
    for (std::size_t a = 0; a < logits.cols(); ++a) {
      const double z = logits(i, a) + standard_gumbel(rng);
      if (z > best) {
        best = z;
        arg = a;
      }
    }
    t[i] = static_cast<Token>(arg);
  }
  return OneHotSequence::from_tokens(t, logits.cols());
}

struct MalaStep {
  Grid logits;             // updated relaxed state
  OneHotSequence rounded;  // point the gradient was taken at
  double logp = 0.0;       // pi(rounded)
};

inline MalaStep mala_approx_step(const Grid& logits, const ProductOfExperts& poe,
                                 const MalaConfig& mcfg, const SamplerConfig& cfg,
                                 const OneHotSequence& wt, Rng& rng) {
  validate(mcfg);
  if (logits.rows() != wt.length() || logits.cols() != wt.vocab_size()) {
    throw ShapeMismatch("relaxed state does not match sequence shape");
  }
  for (double l : logits.data()) {
    if (!std::isfinite(l)) throw NonFiniteState("relaxed logits are not finite");
  }
  const auto frozen = frozen_mask(cfg, wt.length());
  MalaStep out{logits, mala_round(logits, frozen, wt, rng), 0.0};
  const ScoreGrad sg = poe.score_and_grad(out.rounded);
  out.logp = sg.value;
  const double eps = mcfg.step_size;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (frozen[i]) continue;
    for (std::size_t a = 0; a < logits.cols(); ++a) {
      out.logits(i, a) += 0.5 * eps * sg.grad(i, a) + eps * standard_normal(rng);
    }
  }
  for (double l : out.logits.data()) {
    if (!std::isfinite(l)) throw NonFiniteState("MALA logits overflowed; step size too large");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-chain driver
// ---------------------------------------------------------------------------

enum class SamplerKind { ppde, exact_lb, sa, random, mala };

inline const char* to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::ppde: return "ppde";
    case SamplerKind::exact_lb: return "exact-lb";
    case SamplerKind::sa: return "sa";
    case SamplerKind::random: return "random";
    case SamplerKind::mala: return "mala";
  }
  return "?";
}

inline std::optional<SamplerKind> parse_sampler_kind(std::string_view s) {
  for (auto k : {SamplerKind::ppde, SamplerKind::exact_lb, SamplerKind::sa, SamplerKind::random,
                 SamplerKind::mala}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

struct RunSettings {
  SamplerConfig sampler;
  // Unset: geometric 1 -> 1e-2 over sampler.steps.
  std::optional<AnnealSchedule> schedule;
  MalaConfig mala;
  std::size_t n_chains = 128;
  std::size_t threads = 0;  // 0 = hardware concurrency
  bool record_states = true;
};

namespace detail {

template <class Step>
ChainTrace run_one_chain(std::size_t chain_id, const OneHotSequence& wt, std::int64_t steps,
                         bool record_states, double initial_logp, Step&& step) {
  ChainTrace trace;
  trace.chain_id = chain_id;
  trace.best = wt;
  trace.best_logp = initial_logp;
  trace.steps.reserve(static_cast<std::size_t>(steps));
  for (std::int64_t t = 1; t <= steps; ++t) {
    auto [state, accepted, logp] = step();
    StepRecord rec{t, accepted, logp, hamming_distance(*state, wt), {}};
    if (record_states) rec.tokens.assign(state->tokens().begin(), state->tokens().end());
    if (logp > trace.best_logp) {
      trace.best = *state;
      trace.best_logp = logp;
      trace.best_step = t;
    }
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

}  // namespace detail

inline ChainTrace run_single_chain(std::size_t chain_id, const OneHotSequence& wt,
                                   const ProductOfExperts& poe, SamplerKind kind,
                                   const RunSettings& s) {
  Rng rng(derive_seed(s.sampler.seed, chain_id));
  const std::int64_t steps = s.sampler.steps;
  switch (kind) {
    case SamplerKind::ppde:
    case SamplerKind::exact_lb: {
      ChainState st = ChainState::start(wt, poe);
      const double init = st.current_logp;
      return detail::run_one_chain(chain_id, wt, steps, s.record_states, init, [&] {
        StepResult r = kind == SamplerKind::ppde ? ppde_step(std::move(st), poe, s.sampler, rng)
                                                 : exact_lb_step(std::move(st), poe, s.sampler, rng);
        st = std::move(r.state);
        return std::tuple{&st.current, r.outcome.accepted, st.current_logp};
      });
    }
    case SamplerKind::sa: {
      const AnnealSchedule sched =
          s.schedule.value_or(AnnealSchedule::geometric(1.0, 1e-2, steps));
      AnnealSchedule::validate(sched);
      SaState st{ChainState::start(wt, poe), sched.t_init};
      const double init = st.chain.current_logp;
      return detail::run_one_chain(chain_id, wt, steps, s.record_states, init, [&] {
        SaResult r = sa_step(std::move(st), poe, sched, s.sampler, rng);
        st = std::move(r.state);
        return std::tuple{&st.chain.current, r.accepted, st.chain.current_logp};
      });
    }
    case SamplerKind::mala: {
      Grid logits = mala_init_logits(wt, s.mala.tau);
      OneHotSequence rounded = wt;
      return detail::run_one_chain(chain_id, wt, steps, s.record_states, poe.value(wt), [&] {
        MalaStep m = mala_approx_step(logits, poe, s.mala, s.sampler, wt, rng);
        logits = std::move(m.logits);
        rounded = std::move(m.rounded);
        return std::tuple{&rounded, true, m.logp};
      });
    }
    case SamplerKind::random:
      break;
  }
  throw InvalidArgument("random sampling is not a chain sampler; use random_sampling_run");
}

// Independent chains, one RNG stream per chain id derived from the master
// seed. Output is independent of the thread count.
inline std::vector<ChainTrace> run_chains(const OneHotSequence& wt, const ProductOfExperts& poe,
                                          SamplerKind kind, const RunSettings& s) {
  if (s.n_chains < 1) throw InvalidArgument("need at least one chain");
  validate(s.sampler, wt.length());
  validate(s.mala);
  if (kind == SamplerKind::random) {
    throw InvalidArgument("random sampling is not a chain sampler; use random_sampling_run");
  }
  std::vector<ChainTrace> traces(s.n_chains);
  std::vector<std::exception_ptr> errors(s.n_chains);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < s.n_chains; c = next++) {
      try {
        traces[c] = run_single_chain(c, wt, poe, kind, s);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  std::size_t n_threads = s.threads ? s.threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, s.n_chains);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t c = 0; c < s.n_chains; ++c) {
    if (!errors[c]) continue;
    try {
      std::rethrow_exception(errors[c]);
    } catch (const std::exception& e) {
      throw ChainFailure(c, e.what());
    }
  }
  return traces;
}

}  // namespace ppde
