// Acceptance gate: prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Reference quantities are computed here from raw
// parameters, independently of the library routines under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ppde/cli.hpp"
#include "ppde/ppde.hpp"
#include "test_support.hpp"

using namespace ppde;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::vector<Token> tokens_of(std::size_t k, std::size_t L, std::size_t V) {
  std::vector<Token> t(L);
  for (std::size_t i = L; i-- > 0; k /= V) t[i] = static_cast<Token>(k % V);
  return t;
}

double linear_value(const LinearExpertParams& p, const std::vector<Token>& t) {
  double v = p.b;
  for (std::size_t i = 0; i < t.size(); ++i) v += p.w[i * p.vocab_size + t[i]];
  return v;
}

// exp(pi)/Z over all states in lexicographic order, pi = Potts delta + lambda * linear.
std::vector<double> reference_distribution(const DeskInstance& inst, double lambda) {
  const std::size_t L = inst.wt.length(), V = inst.wt.vocab_size();
  std::size_t n = 1;
  for (std::size_t i = 0; i < L; ++i) n *= V;
  const double e_wt = ref::reference_potts_energy(inst.wt, inst.potts);
  std::vector<double> logw(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto t = tokens_of(k, L, V);
    logw[k] = ref::reference_potts_energy(OneHotSequence::from_tokens(t, V), inst.potts) - e_wt +
              lambda * linear_value(inst.linear, t);
  }
  const double m = *std::max_element(logw.begin(), logw.end());
  double z = 0.0;
  for (double v : logw) z += std::exp(v - m);
  for (double& v : logw) v = std::exp(v - m) / z;
  return logw;
}

// --- criteria --------------------------------------------------------------------

Outcome stationary_correctness() {
  const auto t0 = Clock::now();
  const DeskInstance inst = make_desk_instance(4, 4, 7);
  const auto exact = reference_distribution(inst, 1.0);
  SamplerConfig cfg;
  cfg.max_path_length = 3;
  Rng rng(derive_seed(7, 0xACC1));
  ChainState st = ChainState::start(inst.wt, inst.poe);
  std::vector<double> freq(exact.size(), 0.0);
  const std::size_t burn_in = 10000, samples = 100000;
  for (std::size_t t = 0; t < burn_in + samples; ++t) {
    st = ppde_step(std::move(st), inst.poe, cfg, rng).state;
    if (t >= burn_in) freq[state_index(st.current)] += 1.0 / samples;
  }
  double tv = 0.0;
  for (std::size_t k = 0; k < exact.size(); ++k) tv += 0.5 * std::abs(freq[k] - exact[k]);
  const double secs = seconds_since(t0);
  return {tv <= 0.05 && secs <= 60.0,
          "L=4 V=4 Potts+fitted linear, U=3, TV=" + num(tv) + " (<= 0.05), " + num(secs) + " s (<= 60)"};
}

Outcome k0_kernel_equality() {
  const std::size_t L = 4, V = 4;
  std::mt19937_64 gen(101);
  const auto a = ref::random_linear(L, V, gen);
  const auto b = ref::random_linear(L, V, gen);
  const double lambda = 0.8;
  const ProductOfExperts poe({make_expert<LinearExpert>(a, ExpertRole::unsupervised),
                              make_expert<LinearExpert>(b, ExpertRole::supervised)},
                             lambda);
  const auto pi = [&](const std::vector<Token>& t) { return linear_value(a, t) + lambda * linear_value(b, t); };

  // Locally balanced proposal over true substitutions: softmax of (pi(y) - pi(x)) / 2.
  const auto exact_q = [&](const std::vector<Token>& x) {
    std::vector<double> q(L * V, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t s = 0; s < V; ++s) {
        if (s == x[i]) continue;
        auto y = x;
        y[i] = static_cast<Token>(s);
        q[i * V + s] = std::exp((pi(y) - pi(x)) / 2.0);
        z += q[i * V + s];
      }
    }
    for (double& v : q) v /= z;
    return q;
  };

  SamplerConfig cfg;
  double worst_q = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto x = ref::random_seq(L, V, gen);
    const std::vector<Token> t(x.tokens().begin(), x.tokens().end());
    const Grid taylor = softmax(proposal_logits(poe.score_and_grad(x).grad, x, cfg));
    const auto q = exact_q(t);
    for (std::size_t c = 0; c < L * V; ++c) worst_q = std::max(worst_q, std::abs(taylor.data()[c] - q[c]));
  }

  // U = 1 analytic kernel against the reference enumeration.
  std::size_t n = 1;
  for (std::size_t i = 0; i < L; ++i) n *= V;
  std::vector<double> p(n);
  double z = 0.0;
  for (std::size_t k = 0; k < n; ++k) z += (p[k] = std::exp(pi(tokens_of(k, L, V))));
  for (double& v : p) v /= z;
  cfg.max_path_length = 1;
  const auto K = full_kernel(poe, cfg, ProposalFamily::taylor);
  double worst_db = 0.0, worst_k = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    const auto tx = tokens_of(x, L, V);
    const auto qx = exact_q(tx);
    double stay = 1.0;
    for (std::size_t y = 0; y < n; ++y) {
      const auto ty = tokens_of(y, L, V);
      std::size_t diff = 0, pos = 0;
      for (std::size_t i = 0; i < L; ++i) {
        if (tx[i] != ty[i]) ++diff, pos = i;
      }
      if (diff == 1) {
        const double fwd = qx[pos * V + ty[pos]];
        const double rev = exact_q(ty)[pos * V + tx[pos]];
        const double kxy = fwd * std::min(1.0, p[y] * rev / (p[x] * fwd));
        stay -= kxy;
        worst_k = std::max(worst_k, std::abs(K[x][y] - kxy));
      } else if (diff > 1) {
        worst_k = std::max(worst_k, std::abs(K[x][y]));
      }
      if (y > x) worst_db = std::max(worst_db, std::abs(p[x] * K[x][y] - p[y] * K[y][x]));
    }
    worst_k = std::max(worst_k, std::abs(K[x][x] - stay));
  }
  return {worst_q <= 1e-12 && worst_db <= 1e-10 && worst_k <= 1e-12,
          "linear experts: max |q_taylor - q_exact| over 100 states=" + num(worst_q) +
              " (<= 1e-12); U=1 detailed balance=" + num(worst_db) + " (<= 1e-10); kernel vs hand=" +
              num(worst_k)};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const std::size_t L = 5, V = 6;
  std::mt19937_64 gen(202);
  struct Kind {
    std::string name;
    std::function<std::shared_ptr<const Expert>(const OneHotSequence&)> make;
  };
  const std::vector<Kind> kinds{
      {"potts", [&](const OneHotSequence& wt) { return std::make_shared<const PottsExpert>(ref::random_potts(L, V, wt, gen)); }},
      {"linear", [&](const OneHotSequence&) { return std::make_shared<const LinearExpert>(ref::random_linear(L, V, gen)); }},
      {"mlp", [&](const OneHotSequence&) { return std::make_shared<const MlpExpert>(MlpExpertParams::random(L, V, {8, 4}, gen)); }},
      {"ensemble", [&](const OneHotSequence& wt) {
         return std::make_shared<const EnsembleExpert>(std::vector<std::shared_ptr<const Expert>>{
             std::make_shared<const MlpExpert>(MlpExpertParams::random(L, V, {6}, gen)),
             std::make_shared<const PottsExpert>(ref::random_potts(L, V, wt, gen)),
             std::make_shared<const LinearExpert>(ref::random_linear(L, V, gen))});
       }},
  };
  std::string detail;
  bool ok = true;
  for (const auto& k : kinds) {
    std::size_t failures = 0;
    double worst = 0.0;
    for (int c = 0; c < 50; ++c) {
      const auto wt = ref::random_seq(L, V, gen);
      const auto e = k.make(wt);
      const auto rep = ref::fd_gradient_check(*e, ref::random_seq(L, V, gen));
      failures += rep.failures;
      worst = std::max(worst, rep.worst_abs);
    }
    ok = ok && failures == 0;
    detail += k.name + " " + std::to_string(failures) + " bad cells (worst abs " + num(worst) + "); ";
  }
  const double secs = seconds_since(t0);
  return {ok && secs <= 10.0, "50 cases each, rel 1e-5: " + detail + num(secs) + " s (<= 10)"};
}

Outcome evaluation_budget() {
  const std::size_t L = 8, V = 5;
  std::mt19937_64 gen(303);
  const auto wt = ref::random_seq(L, V, gen);
  auto cu = std::make_shared<EvalCounter>();
  auto cs = std::make_shared<EvalCounter>();
  const ProductOfExperts poe(
      {instrumented(make_expert<PottsExpert>(ref::random_potts(L, V, wt, gen), ExpertRole::unsupervised), cu),
       instrumented(make_expert<LinearExpert>(ref::random_linear(L, V, gen), ExpertRole::supervised), cs)},
      1.0);
  Rng rng(303);
  bool ok = true;
  std::string detail;
  for (std::size_t U : {1u, 3u, 9u, 19u}) {
    SamplerConfig cfg;
    cfg.max_path_length = U;
    ChainState st = ChainState::start(wt, poe);
    long bad = 0;
    for (int t = 0; t < 200; ++t) {
      cu->reset();
      cs->reset();
      st = ppde_step(std::move(st), poe, cfg, rng).state;
      for (const auto* c : {cu.get(), cs.get()}) bad += c->value_calls != 2 || c->gradient_calls != 2;
    }
    ok = ok && bad == 0;
    detail += "U=" + std::to_string(U) + ": " + std::to_string(bad) + " off-budget; ";
  }
  return {ok, "per expert per step 2 value + 2 gradient evaluations, 200 steps each, " + detail};
}

Outcome baseline_sanity() {
  const DeskInstance inst = make_desk_instance(4, 4, 7);
  const auto exact = reference_distribution(inst, 1.0);
  const std::size_t top = std::max_element(exact.begin(), exact.end()) - exact.begin();
  const double target = inst.poe.value(OneHotSequence::from_tokens(tokens_of(top, 4, 4), 4));

  const std::int64_t steps = 2000;
  RunSettings s;
  s.sampler.steps = steps;
  s.sampler.seed = 404;
  s.n_chains = 32;
  s.threads = 1;
  s.record_states = false;
  const auto median_hit = [&](SamplerKind kind) {
    std::vector<double> hits;
    for (const auto& t : run_chains(inst.wt, inst.poe, kind, s)) {
      const auto h = hitting_step(t, target);
      hits.push_back(h ? double(*h) : std::numeric_limits<double>::infinity());
    }
    std::sort(hits.begin(), hits.end());
    return 0.5 * (hits[15] + hits[16]);
  };
  const double ppde = median_hit(SamplerKind::ppde);
  const double sa = median_hit(SamplerKind::sa);
  const double exact_lb = median_hit(SamplerKind::exact_lb);

  // Random search with N = 1e4 proposals versus PPDE with an equal step budget.
  int wins = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(derive_seed(505, trial));
    const auto rs = random_sampling_run(inst.wt, inst.poe, 10000, 1, SamplerConfig{}, rng);
    RunSettings p = s;
    p.sampler.seed = derive_seed(606, trial);
    p.sampler.steps = 1250;
    p.n_chains = 8;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& t : run_chains(inst.wt, inst.poe, SamplerKind::ppde, p)) best = std::max(best, t.best_logp);
    wins += rs.top.front().score <= best;
  }
  return {ppde <= sa / 5.0 && wins >= 18,
          "median steps to global max: PPDE " + num(ppde) + " vs SA " + num(sa) +
              " (need PPDE <= SA/5; exact locally balanced " + num(exact_lb) + "); random top-1 <= PPDE best in " + std::to_string(wins) + "/20 (>= 18)"};
}

Outcome sa_proposal_law() {
  Rng rng(707);
  std::vector<double> counts;
  for (int k = 0; k < 100000; ++k) {
    const unsigned m = sample_mutation_count(rng);
    if (m < 1) return {false, "drew m = 0"};
    if (counts.size() < m) counts.resize(m, 0.0);
    counts[m - 1] += 1.0;
  }
  std::vector<double> probs;
  for (unsigned j = 0; j < 30; ++j) probs.push_back(ref::mixed_poisson_pmf(j));
  const auto chi = ref::chi_square_test(counts, probs, 0.01);
  return {chi.passed, "m ~ Poisson(mu-1)+1, mu ~ U(1,2.5), 1e5 draws: chi2=" + num(chi.statistic) +
                          " critical=" + num(chi.critical) + " dof=" + std::to_string(chi.dof)};
}

Outcome metrics_fixtures() {
  const Vocabulary v("ABC");
  const auto seqs = [&](std::initializer_list<const char*> list) {
    std::vector<OneHotSequence> out;
    for (const char* s : list) out.push_back(encode(s, v));
    return out;
  };
  const auto chain = [](std::vector<double> logp) {
    ChainTrace t;
    for (std::size_t k = 0; k < logp.size(); ++k) t.steps.push_back({std::int64_t(k + 1), true, logp[k], 0, {}});
    return t;
  };
  int bad = 0;
  bad += diversity(seqs({"AA", "AB", "BA", "CC"})) != 100.0;
  bad += diversity(seqs({"AB", "AB", "AB", "AB"})) != 0.0;
  bad += diversity(seqs({"AA", "AA", "BB", "CC"})) != 50.0;
  const auto wt = encode("AAA", v);
  const auto z = mutation_stats(seqs({"AAA", "AAA"}), wt);
  bad += z.mean != 0.0 || z.std != 0.0;
  const auto m = mutation_stats(seqs({"ABA", "BCB"}), wt);
  bad += m.mean != 2.0 || m.std != 1.0;
  std::vector<double> hundred(100);
  for (int k = 0; k < 100; ++k) hundred[k] = 100 - k;
  bad += percentile_scores(hundred, {50})[0].score != 50.0;
  bad += percentile_scores({4.25}, {80})[0].score != 4.25;
  bad += percentile_scores({3, 1, 2}, {100})[0].score != 3.0;
  bad += cumulative_max_curve({chain({1, 2, 3})}) != std::vector<double>{1, 2, 3};
  bad += cumulative_max_curve({chain({1, 0, 2})}) != std::vector<double>{1, 1, 2};
  bad += cumulative_max_curve({chain({1, 0, 2}), chain({0, 3, 1})}) != std::vector<double>{0.5, 2, 2.5};

  std::mt19937_64 gen(808);
  std::normal_distribution<double> nd;
  int decreasing = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ChainTrace> traces;
    for (int c = 0; c < 8; ++c) {
      std::vector<double> logp(200);
      for (double& x : logp) x = nd(gen);
      traces.push_back(chain(logp));
    }
    const auto curve = cumulative_max_curve(traces);
    for (std::size_t k = 1; k < curve.size(); ++k) decreasing += curve[k] < curve[k - 1];
  }
  return {bad == 0 && decreasing == 0, std::to_string(bad) + " fixture mismatches (exact equality); " +
                                           std::to_string(decreasing) + " decreasing steps over 100 random trace sets"};
}

Outcome determinism() {
  const fs::path cfg_path = fs::path(PPDE_SOURCE_DIR) / "configs" / "toy.ini";
  const fs::path root = fs::temp_directory_path() / ("ppde_accept_" + std::to_string(::getpid()));
  std::string detail;
  bool ok = true;
  for (const std::string sampler : {"ppde", "sa", "mala", "random"}) {
    std::string files[2][2];
    for (int run = 0; run < 2; ++run) {
      cli::Overrides o;
      o.steps = 500;
      o.chains = 8;
      o.out = root / (sampler + std::to_string(run));
      auto c = cli::load_config(cfg_path, o);
      c.sampler = *parse_sampler_kind(sampler);
      c.threads = run == 0 ? 1 : 4;
      std::ostringstream quiet;
      cli::cmd_sample(c, quiet);
      files[run][0] = io::read_file(*o.out / "population.csv");
      files[run][1] = io::read_file(*o.out / "trace.csv");
    }
    const bool same = files[0][0] == files[1][0] && files[0][1] == files[1][1];
    ok = ok && same;
    detail += sampler + (same ? " identical; " : " DIFFERENT; ");
  }
  fs::remove_all(root);
  return {ok, "configs/toy.ini run twice (1 vs 4 threads): " + detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"stationary_correctness", stationary_correctness},
      {"k0_kernel_equality", k0_kernel_equality},
      {"gradient_suite", gradient_suite},
      {"constant_evaluation_budget", evaluation_budget},
      {"baseline_sanity", baseline_sanity},
      {"sa_proposal_law", sa_proposal_law},
      {"metrics_fixtures", metrics_fixtures},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.passed;
    std::cout << (o.passed ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failed ? 1 : 0;
}
