#pragma once

// Run configuration and the subcommands of the `ppde` tool.
//
// Config files are INI-style key/value text. Top-level keys configure the
// run; each `[expert.<name>]` section declares one expert. Example:
//
//   seed = 7
//   wild_type = wt.fasta
//   sampler = ppde            ; ppde | exact-lb | sa | random | mala
//   lambda = 1                ; or "calibrate"
//
//   [expert.potts]
//   kind = potts
//   role = unsupervised
//   params = potts.json
//
// Unknown keys and sections are rejected.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ppde/error.hpp"
#include "ppde/experts.hpp"
#include "ppde/io.hpp"
#include "ppde/metrics.hpp"
#include "ppde/oracle.hpp"
#include "ppde/samplers.hpp"
#include "ppde/seqspace.hpp"
#include "ppde/wire.hpp"

namespace ppde::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitVerify = 4;

inline constexpr const char* kEndpointEnv = "PPDE_EXTERNAL_ENDPOINT";

struct ExpertSpec {
  std::string name;
  ExpertKind kind = ExpertKind::linear;
  ExpertRole role = ExpertRole::unsupervised;
  std::vector<fs::path> params;  // one file, or one per ensemble member
  ExpertKind member_kind = ExpertKind::linear;
  std::string endpoint;
};

struct CalibrateSpec {
  fs::path labeled;
  LambdaGrid grid;
  std::optional<double> wt_activity;
  std::size_t per_pool = 100;
};

struct RunConfig {
  fs::path wild_type;
  std::string vocabulary{kAminoAcids};
  std::vector<ExpertSpec> experts;
  std::optional<double> lambda = 1.0;  // nullopt: calibrate before sampling
  SamplerKind sampler = SamplerKind::ppde;
  SamplerConfig sampler_cfg;
  std::size_t n_chains = 128;
  std::size_t threads = 0;
  fs::path output_dir = "out";
  double t_init = 1.0;
  double t_final = 1e-2;
  MalaConfig mala;
  std::size_t random_budget = 0;  // 0: steps
  std::size_t random_top_k = 0;   // 0: chains
  CalibrateSpec calibrate;
  UniqueMode unique_mode = UniqueMode::exactly_once;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_path_length;
  std::optional<std::size_t> chains;
  std::optional<std::int64_t> steps;
  std::optional<fs::path> out;
};

namespace detail {

using boost::property_tree::ptree;

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& item : io::split(s, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& field, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (in.fail() || !in.eof()) throw ValidationError(field, "'" + text + "' is not a valid number");
  return v;
}

inline std::uint64_t parse_unsigned(const std::string& field, const std::string& text) {
  if (text.empty() || text[0] == '-') throw ValidationError(field, "must be a non-negative integer");
  return parse_number<std::uint64_t>(field, text);
}

inline double parse_real(const std::string& field, const std::string& text) {
  const double v = parse_number<double>(field, text);
  if (!std::isfinite(v)) throw ValidationError(field, "must be finite");
  return v;
}

inline bool parse_bool(const std::string& field, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ValidationError(field, "expected true or false");
}

inline ExpertKind parse_kind(const std::string& field, const std::string& text) {
  for (auto k : {ExpertKind::potts, ExpertKind::linear, ExpertKind::mlp, ExpertKind::external,
                 ExpertKind::ensemble}) {
    if (text == to_string(k)) return k;
  }
  throw ValidationError(field, "unknown expert kind '" + text + "'");
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline void check_keys(const ptree& section, const std::string& prefix,
                       const std::set<std::string>& allowed) {
  for (const auto& [key, value] : section) {
    if (!allowed.count(key)) throw ValidationError(prefix + key, "unknown key");
  }
}

inline ExpertSpec parse_expert(const std::string& name, const ptree& s, const fs::path& base) {
  const std::string prefix = "expert." + name + ".";
  check_keys(s, prefix, {"kind", "role", "params", "member_kind", "endpoint"});
  ExpertSpec e;
  e.name = name;
  const auto kind = s.get_optional<std::string>("kind");
  if (!kind) throw ValidationError(prefix + "kind", "required");
  e.kind = parse_kind(prefix + "kind", *kind);
  const auto role = s.get<std::string>("role", "");
  if (role == "unsupervised") {
    e.role = ExpertRole::unsupervised;
  } else if (role == "supervised") {
    e.role = ExpertRole::supervised;
  } else {
    throw ValidationError(prefix + "role", "must be unsupervised or supervised");
  }
  for (const auto& p : split_list(s.get<std::string>("params", ""))) e.params.push_back(resolve(base, p));
  e.endpoint = s.get<std::string>("endpoint", "");
  if (auto mk = s.get_optional<std::string>("member_kind")) {
    e.member_kind = parse_kind(prefix + "member_kind", *mk);
  }
  switch (e.kind) {
    case ExpertKind::external:
      if (e.endpoint.empty() && !std::getenv(kEndpointEnv)) {
        throw ValidationError(prefix + "endpoint", "required for external experts");
      }
      break;
    case ExpertKind::ensemble:
      if (e.params.empty()) throw ValidationError(prefix + "params", "ensemble needs member files");
      if (e.member_kind == ExpertKind::external || e.member_kind == ExpertKind::ensemble) {
        throw ValidationError(prefix + "member_kind", "must be potts, linear or mlp");
      }
      break;
    default:
      if (e.params.size() != 1) throw ValidationError(prefix + "params", "exactly one file required");
  }
  return e;
}

}  // namespace detail

inline void validate_config(const RunConfig& c) {
  if (c.experts.empty()) throw ValidationError("expert", "at least one [expert.<name>] section required");
  if (c.lambda && !(*c.lambda >= 0.0)) throw ValidationError("lambda", "must be >= 0");
  if (c.sampler_cfg.steps < 1) throw ValidationError("steps", "must be >= 1");
  if (c.sampler_cfg.max_path_length < 1) throw ValidationError("max_path_length", "must be >= 1");
  if (c.n_chains < 1) throw ValidationError("chains", "must be >= 1");
  if (!fs::exists(c.wild_type)) throw ValidationError("wild_type", "file not found: " + c.wild_type.string());
  for (const auto& e : c.experts) {
    for (const auto& p : e.params) {
      if (!fs::exists(p)) throw ValidationError("expert." + e.name + ".params", "file not found: " + p.string());
    }
  }
  if (!(c.t_init > 0.0) || !(c.t_final > 0.0)) throw ValidationError("sa", "temperatures must be > 0");
  if (!(c.mala.step_size > 0.0)) throw ValidationError("mala.step_size", "must be > 0");
  if (!(c.mala.tau > 0.0 && c.mala.tau < 1.0)) throw ValidationError("mala.tau", "must lie in (0, 1)");
  for (double l : c.calibrate.grid.values) {
    if (!(l >= 0.0)) throw ValidationError("calibrate.grid", "values must be >= 0");
  }
  if (c.calibrate.grid.values.empty()) throw ValidationError("calibrate.grid", "must not be empty");
  if (!c.lambda && c.calibrate.labeled.empty()) {
    throw ValidationError("calibrate.labeled", "required when lambda = calibrate");
  }
  if (c.sampler == SamplerKind::random) {
    const std::size_t budget = c.random_budget ? c.random_budget : std::size_t(c.sampler_cfg.steps);
    const std::size_t k = c.random_top_k ? c.random_top_k : c.n_chains;
    if (k > budget) throw ValidationError("random.top_k", "must not exceed random.budget");
  }
  try {
    Vocabulary v(c.vocabulary);
  } catch (const Error& e) {
    throw ValidationError("vocabulary", e.what());
  }
}

inline void apply_overrides(RunConfig& c, const Overrides& o) {
  if (o.seed) c.sampler_cfg.seed = *o.seed;
  if (o.max_path_length) c.sampler_cfg.max_path_length = *o.max_path_length;
  if (o.chains) c.n_chains = *o.chains;
  if (o.steps) c.sampler_cfg.steps = *o.steps;
  if (o.out) c.output_dir = *o.out;
}

// Relative paths resolve against base_dir. The seed is mandatory.
inline RunConfig parse_config(const std::string& text, const fs::path& base_dir = ".",
                              const Overrides& overrides = {}) {
  using detail::ptree;
  ptree pt;
  try {
    std::istringstream in(text);
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError(e.line(), e.message());
  }

  RunConfig c;
  c.output_dir = base_dir / "out";
  bool have_seed = false;
  bool have_wt = false;
  const std::set<std::string> sections{"sa", "mala", "random", "calibrate"};
  for (const auto& [key, node] : pt) {
    const std::string v = node.data();
    if (key.rfind("expert.", 0) == 0) {
      const std::string name = key.substr(7);
      if (name.empty()) throw ValidationError(key, "expert section needs a name");
      c.experts.push_back(detail::parse_expert(name, node, base_dir));
      continue;
    }
    if (sections.count(key)) {
      if (key == "sa") {
        detail::check_keys(node, "sa.", {"t_init", "t_final"});
        if (auto t = node.get_optional<std::string>("t_init")) c.t_init = detail::parse_real("sa.t_init", *t);
        if (auto t = node.get_optional<std::string>("t_final")) c.t_final = detail::parse_real("sa.t_final", *t);
      } else if (key == "mala") {
        detail::check_keys(node, "mala.", {"step_size", "tau"});
        if (auto t = node.get_optional<std::string>("step_size")) c.mala.step_size = detail::parse_real("mala.step_size", *t);
        if (auto t = node.get_optional<std::string>("tau")) c.mala.tau = detail::parse_real("mala.tau", *t);
      } else if (key == "random") {
        detail::check_keys(node, "random.", {"budget", "top_k"});
        if (auto t = node.get_optional<std::string>("budget")) c.random_budget = detail::parse_unsigned("random.budget", *t);
        if (auto t = node.get_optional<std::string>("top_k")) c.random_top_k = detail::parse_unsigned("random.top_k", *t);
      } else {
        detail::check_keys(node, "calibrate.", {"labeled", "grid", "wt_activity", "per_pool"});
        if (auto t = node.get_optional<std::string>("labeled")) c.calibrate.labeled = detail::resolve(base_dir, *t);
        if (auto t = node.get_optional<std::string>("grid")) {
          c.calibrate.grid.values.clear();
          for (const auto& g : detail::split_list(*t)) {
            c.calibrate.grid.values.push_back(detail::parse_real("calibrate.grid", g));
          }
        }
        if (auto t = node.get_optional<std::string>("wt_activity")) {
          c.calibrate.wt_activity = detail::parse_real("calibrate.wt_activity", *t);
        }
        if (auto t = node.get_optional<std::string>("per_pool")) {
          c.calibrate.per_pool = detail::parse_unsigned("calibrate.per_pool", *t);
        }
      }
      continue;
    }
    if (!node.empty()) throw ValidationError(key, "unknown section");
    if (key == "seed") {
      c.sampler_cfg.seed = detail::parse_unsigned(key, v);
      have_seed = true;
    } else if (key == "wild_type") {
      c.wild_type = detail::resolve(base_dir, v);
      have_wt = true;
    } else if (key == "vocabulary") {
      c.vocabulary = v;
    } else if (key == "sampler") {
      auto k = parse_sampler_kind(v);
      if (!k) throw ValidationError(key, "unknown sampler '" + v + "'");
      c.sampler = *k;
    } else if (key == "lambda") {
      if (v == "calibrate") {
        c.lambda.reset();
      } else {
        c.lambda = detail::parse_real(key, v);
      }
    } else if (key == "steps") {
      c.sampler_cfg.steps = static_cast<std::int64_t>(detail::parse_unsigned(key, v));
    } else if (key == "chains") {
      c.n_chains = detail::parse_unsigned(key, v);
    } else if (key == "threads") {
      c.threads = detail::parse_unsigned(key, v);
    } else if (key == "max_path_length") {
      c.sampler_cfg.max_path_length = detail::parse_unsigned(key, v);
    } else if (key == "include_identity_moves") {
      c.sampler_cfg.include_identity_moves = detail::parse_bool(key, v);
    } else if (key == "frozen_positions") {
      for (const auto& p : detail::split_list(v)) {
        c.sampler_cfg.frozen_positions.push_back(detail::parse_unsigned(key, p));
      }
    } else if (key == "output") {
      c.output_dir = detail::resolve(base_dir, v);
    } else if (key == "unique") {
      if (v == "exactly_once") {
        c.unique_mode = UniqueMode::exactly_once;
      } else if (v == "distinct") {
        c.unique_mode = UniqueMode::distinct;
      } else {
        throw ValidationError(key, "expected exactly_once or distinct");
      }
    } else {
      throw ValidationError(key, "unknown key");
    }
  }
  if (!have_seed) throw ValidationError("seed", "required (no wall-clock default)");
  if (!have_wt) throw ValidationError("wild_type", "required");
  apply_overrides(c, overrides);
  validate_config(c);
  return c;
}

inline RunConfig load_config(const fs::path& path, const Overrides& overrides = {}) {
  if (!fs::is_regular_file(path)) throw ValidationError("config", "file not found: " + path.string());
  return parse_config(io::read_file(path), path.parent_path().empty() ? fs::path(".") : path.parent_path(),
                      overrides);
}

// ---------------------------------------------------------------------------
// Building the product of experts
// ---------------------------------------------------------------------------

struct Problem {
  Vocabulary vocab;
  OneHotSequence wt;
  std::vector<ExpertHandle> experts;
};

inline std::shared_ptr<const Expert> load_in_process(ExpertKind kind, const fs::path& path,
                                                     const Vocabulary& vocab,
                                                     const OneHotSequence& wt) {
  switch (kind) {
    case ExpertKind::potts: return std::make_shared<const PottsExpert>(io::load_potts(path, vocab, wt));
    case ExpertKind::linear: return std::make_shared<const LinearExpert>(io::load_linear(path, vocab));
    case ExpertKind::mlp: return std::make_shared<const MlpExpert>(io::load_mlp(path, vocab));
    default: throw InvalidArgument("not an in-process expert kind");
  }
}

inline Problem load_problem(const RunConfig& c) {
  Vocabulary vocab(c.vocabulary);
  OneHotSequence wt;
  try {
    wt = encode(io::read_fasta(c.wild_type), vocab);
  } catch (const UnknownSymbol& e) {
    throw SchemaError(c.wild_type.string() + ": " + e.what());
  }
  std::vector<ExpertHandle> experts;
  for (const auto& spec : c.experts) {
    std::shared_ptr<const Expert> impl;
    if (spec.kind == ExpertKind::external) {
      const char* env = std::getenv(kEndpointEnv);
      const std::string endpoint = env && *env ? std::string(env) : spec.endpoint;
      // exec: peers are spawned per concurrent chain; a tcp: peer serves a
      // single connection, which all chains then share.
      auto pool = endpoint.rfind("exec:", 0) == 0
                      ? wire::ClientPool::for_endpoint(endpoint)
                      : std::make_shared<wire::ClientPool>(
                            std::make_shared<wire::Client>(wire::connect_endpoint(endpoint)));
      impl = std::make_shared<const wire::ExternalExpert>(std::move(pool), vocab);
    } else if (spec.kind == ExpertKind::ensemble) {
      std::vector<std::shared_ptr<const Expert>> members;
      for (const auto& p : spec.params) members.push_back(load_in_process(spec.member_kind, p, vocab, wt));
      impl = std::make_shared<const EnsembleExpert>(std::move(members));
    } else {
      impl = load_in_process(spec.kind, spec.params.front(), vocab, wt);
    }
    if (impl->length() != wt.length()) {
      throw ShapeMismatch("expert '" + spec.name + "' has length " + std::to_string(impl->length()) +
                          ", wild type has " + std::to_string(wt.length()));
    }
    experts.emplace_back(std::move(impl), spec.role);
  }
  return {std::move(vocab), std::move(wt), std::move(experts)};
}

// ---------------------------------------------------------------------------
// Output formatting
// ---------------------------------------------------------------------------

inline std::string fmt(double v) { return format_double(v); }

inline constexpr const char* kRowHeader = "chain_id,step,sequence,score,accepted,n_mutations\n";

struct OutputRow {
  std::size_t chain_id = 0;
  std::int64_t step = 0;
  std::string sequence;
  double score = 0.0;
  bool accepted = false;
  std::size_t n_mutations = 0;
};

inline void append_row(std::string& out, const OutputRow& r) {
  out += std::to_string(r.chain_id) + ',' + std::to_string(r.step) + ',' + r.sequence + ',' +
         fmt(r.score) + ',' + (r.accepted ? '1' : '0') + ',' + std::to_string(r.n_mutations) + '\n';
}

inline std::vector<OutputRow> parse_rows(std::string_view text, const std::string& source) {
  const io::CsvTable t = io::parse_csv(text, source);
  const auto c_chain = t.column("chain_id", source);
  const auto c_step = t.column("step", source);
  const auto c_seq = t.column("sequence", source);
  const auto c_score = t.column("score", source);
  const auto c_acc = t.column("accepted", source);
  const auto c_mut = t.column("n_mutations", source);
  std::vector<OutputRow> rows;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    const std::string where = source + " row " + std::to_string(k + 1);
    rows.push_back({static_cast<std::size_t>(io::parse_double(r[c_chain], where)),
                    static_cast<std::int64_t>(io::parse_double(r[c_step], where)), r[c_seq],
                    io::parse_double(r[c_score], where), r[c_acc] == "1",
                    static_cast<std::size_t>(io::parse_double(r[c_mut], where))});
  }
  return rows;
}

inline std::string format_report(const std::vector<std::pair<std::string, std::string>>& header,
                                 const PopulationReport& rep, UniqueMode mode) {
  std::string out;
  for (const auto& [k, v] : header) out += k + '=' + v + '\n';
  out += "population_size=" + std::to_string(rep.population_size) + '\n';
  out += "unique_mode=" + std::string(mode == UniqueMode::exactly_once ? "exactly_once" : "distinct") + '\n';
  out += "diversity_pct=" + fmt(rep.diversity_pct) + '\n';
  out += "mutations_mean=" + fmt(rep.mutations.mean) + '\n';
  out += "mutations_std=" + fmt(rep.mutations.std) + '\n';
  for (const auto& p : rep.percentiles) {
    out += "score_p" + std::to_string(static_cast<int>(p.percentile)) + '=' + fmt(p.score) + '\n';
  }
  return out;
}

// Long format (step, chain_id, running_max) for plotting.
inline std::string format_curve(const std::vector<OutputRow>& trace) {
  std::map<std::size_t, double> best;
  std::string out = "step,chain_id,running_max\n";
  for (const auto& r : trace) {
    auto it = best.find(r.chain_id);
    if (it == best.end()) {
      it = best.emplace(r.chain_id, r.score).first;
    } else {
      it->second = std::max(it->second, r.score);
    }
    out += std::to_string(r.step) + ',' + std::to_string(r.chain_id) + ',' + fmt(it->second) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct CalibrationResult {
  double lambda = 1.0;
  std::size_t low_count = 0;
  std::size_t high_count = 0;
};

inline CalibrationResult calibrate_from_config(const RunConfig& c, const Problem& prob,
                                               const fs::path& labeled) {
  const auto data = io::read_labeled_csv(labeled, prob.vocab);
  double wt_activity = c.calibrate.wt_activity.value_or(0.0);
  if (!c.calibrate.wt_activity) {
    for (const auto& v : data) {
      if (v.sequence == prob.wt) {
        wt_activity = v.activity;
        break;
      }
    }
  }
  std::vector<LabeledVariant> low, high;
  for (const auto& v : data) {
    if (v.activity < wt_activity) low.push_back(v);
    if (v.activity > wt_activity) high.push_back(v);
  }
  if (low.empty() || high.empty()) {
    throw InsufficientData("need variants both below and above the wild-type activity (" +
                           std::to_string(low.size()) + " below, " + std::to_string(high.size()) +
                           " above)");
  }
  Rng rng(derive_seed(c.sampler_cfg.seed, 0xCA1B));
  auto subsample = [&](std::vector<LabeledVariant>& pool) {
    for (std::size_t k = pool.size(); k > 1; --k) {
      std::swap(pool[k - 1], pool[uniform_index(rng, k)]);
    }
    if (pool.size() > c.calibrate.per_pool) pool.resize(c.calibrate.per_pool);
  };
  subsample(low);
  subsample(high);
  const ProductOfExperts poe(prob.experts, 1.0);
  return {calibrate_lambda(c.calibrate.grid, low, high, poe), low.size(), high.size()};
}

struct SampleResult {
  double lambda = 1.0;
  std::size_t population_rows = 0;
};

inline SampleResult cmd_sample(const RunConfig& c, std::ostream& log = std::cerr) {
  const Problem prob = load_problem(c);
  validate(c.sampler_cfg, prob.wt.length());
  double lambda = 1.0;
  if (c.lambda) {
    lambda = *c.lambda;
  } else {
    lambda = calibrate_from_config(c, prob, c.calibrate.labeled).lambda;
    log << "calibrated lambda=" << fmt(lambda) << '\n';
  }
  const ProductOfExperts poe(prob.experts, lambda);

  std::string population = kRowHeader;
  std::string trace = kRowHeader;
  std::vector<OneHotSequence> members;
  std::vector<double> scores;
  std::vector<OutputRow> trace_rows;

  const auto add_trace = [&](const OutputRow& r) {
    append_row(trace, r);
    trace_rows.push_back(r);
  };

  if (c.sampler == SamplerKind::random) {
    const std::size_t budget = c.random_budget ? c.random_budget : std::size_t(c.sampler_cfg.steps);
    const std::size_t k = c.random_top_k ? c.random_top_k : c.n_chains;
    Rng rng(derive_seed(c.sampler_cfg.seed, 0));
    const auto res = random_sampling_run(prob.wt, poe, budget, k, c.sampler_cfg, rng);
    std::vector<bool> selected(budget, false);
    for (const auto& v : res.top) selected[v.index] = true;
    for (const auto& v : res.all) {
      add_trace({0, std::int64_t(v.index) + 1, decode(v.sequence, prob.vocab), v.score,
                 bool(selected[v.index]), hamming_distance(v.sequence, prob.wt)});
    }
    for (const auto& v : res.top) {
      append_row(population, {0, std::int64_t(v.index) + 1, decode(v.sequence, prob.vocab), v.score,
                              true, hamming_distance(v.sequence, prob.wt)});
      members.push_back(v.sequence);
      scores.push_back(v.score);
    }
  } else {
    RunSettings s;
    s.sampler = c.sampler_cfg;
    s.schedule = AnnealSchedule::geometric(c.t_init, c.t_final, c.sampler_cfg.steps);
    s.mala = c.mala;
    s.n_chains = c.n_chains;
    s.threads = c.threads;
    s.record_states = true;
    const auto traces = run_chains(prob.wt, poe, c.sampler, s);
    for (const auto& t : traces) {
      for (const auto& st : t.steps) {
        const auto x = OneHotSequence::from_tokens(st.tokens, prob.vocab.size());
        add_trace({t.chain_id, st.step, decode(x, prob.vocab), st.logp, st.accepted, st.mutations});
      }
      append_row(population, {t.chain_id, t.best_step, decode(t.best, prob.vocab), t.best_logp,
                              t.best_step > 0, hamming_distance(t.best, prob.wt)});
      members.push_back(t.best);
      scores.push_back(t.best_logp);
    }
  }

  const auto rep = population_report(members, scores, prob.wt, c.unique_mode);
  const std::string report = format_report({{"sampler", to_string(c.sampler)},
                                            {"lambda", fmt(lambda)},
                                            {"seed", std::to_string(c.sampler_cfg.seed)},
                                            {"steps", std::to_string(c.sampler_cfg.steps)},
                                            {"max_path_length", std::to_string(c.sampler_cfg.max_path_length)}},
                                           rep, c.unique_mode);
  io::write_file_atomic(c.output_dir / "population.csv", population);
  io::write_file_atomic(c.output_dir / "trace.csv", trace);
  io::write_file_atomic(c.output_dir / "report.txt", report);
  io::write_file_atomic(c.output_dir / "curve.csv", format_curve(trace_rows));
  return {lambda, members.size()};
}

inline double cmd_calibrate_lambda(const RunConfig& c, const std::optional<fs::path>& labeled,
                                   std::ostream& out = std::cout) {
  const Problem prob = load_problem(c);
  const fs::path path = labeled ? *labeled : c.calibrate.labeled;
  if (path.empty()) throw ValidationError("calibrate.labeled", "no labeled CSV given");
  const auto res = calibrate_from_config(c, prob, path);
  const std::string text = "lambda=" + fmt(res.lambda) + "\nlow_pool=" + std::to_string(res.low_count) +
                           "\nhigh_pool=" + std::to_string(res.high_count) + '\n';
  io::write_file_atomic(c.output_dir / "lambda.txt", text);
  out << fmt(res.lambda) << '\n';
  return res.lambda;
}

inline LinearExpertParams cmd_fit_supervised(const fs::path& labeled, double ridge,
                                             const Vocabulary& vocab, const fs::path& out_path) {
  const auto data = io::read_labeled_csv(labeled, vocab);
  if (data.empty()) throw SchemaError(labeled.string() + ": no rows");
  const auto p = fit_linear_expert(data, ridge);
  io::write_file_atomic(out_path, io::dump_linear(p, vocab));
  return p;
}

inline int cmd_verify(const std::string& preset, const std::optional<fs::path>& out_dir,
                      std::ostream& out = std::cout, const AcceptanceRule& accept = mh_acceptance) {
  const auto p = verify_preset(preset);
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = verify_suite(p, accept);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << "  value=" << fmt(c.value)
        << " threshold=" << fmt(c.threshold) << "  (" << c.detail << ")\n";
  }
  out << "elapsed_seconds=" << secs << '\n';
  if (out_dir) {
    std::ostringstream rep;
    write_report(rep, preset, checks);
    io::write_file_atomic(*out_dir / "verify_report.txt", rep.str());
  }
  return all_passed(checks) ? kExitOk : kExitVerify;
}

// Recomputes report.txt and curve.csv from a trace file. Without top_k the
// population is each chain's best row (first occurrence of its maximum);
// with top_k it is the top_k rows overall.
inline PopulationReport cmd_metrics(const fs::path& trace_path, const fs::path& out_dir,
                                    const Vocabulary& vocab, std::optional<std::size_t> top_k,
                                    UniqueMode mode) {
  const auto rows = parse_rows(io::read_file(trace_path), trace_path.string());
  if (rows.empty()) throw EmptyPopulation(trace_path.string() + ": no rows");
  std::vector<const OutputRow*> pop;
  if (top_k) {
    std::vector<const OutputRow*> all;
    for (const auto& r : rows) all.push_back(&r);
    std::stable_sort(all.begin(), all.end(), [](auto* a, auto* b) { return a->score > b->score; });
    if (*top_k < all.size()) all.resize(*top_k);
    pop = all;
  } else {
    std::map<std::size_t, const OutputRow*> best;
    for (const auto& r : rows) {
      auto it = best.find(r.chain_id);
      if (it == best.end() || r.score > it->second->score) best[r.chain_id] = &r;
    }
    for (const auto& [id, r] : best) pop.push_back(r);
  }
  std::vector<OneHotSequence> members;
  std::vector<double> scores;
  std::vector<std::size_t> muts;
  for (const auto* r : pop) {
    members.push_back(encode(r->sequence, vocab));
    scores.push_back(r->score);
    muts.push_back(r->n_mutations);
  }
  const auto rep = population_report(members, scores, muts, mode);
  io::write_file_atomic(out_dir / "report.txt",
                        format_report({{"source", trace_path.filename().string()}}, rep, mode));
  io::write_file_atomic(out_dir / "curve.csv", format_curve(rows));
  return rep;
}

}  // namespace ppde::cli
