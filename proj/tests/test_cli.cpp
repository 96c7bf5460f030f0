#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "ppde/cli.hpp"

using namespace ppde;
namespace fs = std::filesystem;

namespace {

const std::string kVocab = "ACDE";

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ppde_cli_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

LinearExpertParams eighths(std::mt19937_64& rng, double scale) {
  std::uniform_int_distribution<int> d(-8, 8);
  LinearExpertParams g{4, 4, {}, 0.375 * scale};
  for (int c = 0; c < 16; ++c) g.w.push_back(d(rng) * 0.125 * scale);
  return g;
}

// A directory with wt.fasta ("ACDE"), a Potts and a linear expert and a
// labeled CSV, for L = 4 over "ACDE".
struct Fixture {
  fs::path dir;
  explicit Fixture(const std::string& name) : dir(scratch(name)) {
    const Vocabulary v(kVocab);
    std::mt19937_64 rng(21);
    write(dir / "wt.fasta", ">wt\nACDE\n");
    const auto wt = encode("ACDE", v);
    std::normal_distribution<double> nd(0.0, 0.3);
    std::vector<double> h(16), J(256);
    for (auto& x : h) x = nd(rng);
    for (auto& x : J) x = nd(rng);
    write(dir / "potts.json", io::dump_potts(PottsParams::create(4, 4, h, J, wt), v));
    const auto g = eighths(rng, 1.0);
    auto f = g;
    for (auto& w : f.w) w *= 5.0;
    f.b *= 5.0;
    write(dir / "g.json", io::dump_linear(g, v));
    write(dir / "f.json", io::dump_linear(f, v));
    std::string csv = "sequence,activity\nACDE,0\n";
    for (int k = 0; k < 40; ++k) {
      std::string s(4, 'A');
      for (char& c : s) c = kVocab[rng() % 4];
      csv += s + "," + std::to_string(k % 2 ? 1.0 + k : -1.0 - k) + "\n";
    }
    write(dir / "labeled.csv", csv);
  }
  ~Fixture() { fs::remove_all(dir); }

  std::string config(const std::string& extra, const std::string& sampler = "ppde", int steps = 200,
                     int chains = 6) const {
    return "seed=3\nwild_type=wt.fasta\nvocabulary=" + kVocab + "\nsampler=" + sampler +
           "\nsteps=" + std::to_string(steps) + "\nchains=" + std::to_string(chains) + "\n" + extra +
           "\n[expert.potts]\nkind=potts\nrole=unsupervised\nparams=potts.json\n"
           "[expert.fit]\nkind=linear\nrole=supervised\nparams=g.json\n";
  }
  cli::RunConfig parse(const std::string& text) const { return cli::parse_config(text, dir); }
};

std::vector<cli::OutputRow> rows_of(const fs::path& p) {
  return cli::parse_rows(io::read_file(p), p.string());
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(PPDE_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

// --- configuration -------------------------------------------------------------

TEST(ParseConfig, MinimalConfigGetsDocumentedDefaults) {
  Fixture fx("defaults");
  const auto c = fx.parse("seed=9\nwild_type=wt.fasta\nvocabulary=ACDE\n[expert.p]\nkind=potts\nrole=unsupervised\nparams=potts.json\n");
  EXPECT_EQ(c.sampler_cfg.max_path_length, 3u);
  EXPECT_EQ(c.sampler_cfg.steps, 10000);
  EXPECT_EQ(c.n_chains, 128u);
  EXPECT_EQ(c.sampler_cfg.seed, 9u);
  EXPECT_FALSE(c.sampler_cfg.include_identity_moves);
  EXPECT_EQ(c.lambda.value(), 1.0);
  EXPECT_EQ(c.sampler, SamplerKind::ppde);
  EXPECT_EQ(c.unique_mode, UniqueMode::exactly_once);
  EXPECT_EQ(c.wild_type, fx.dir / "wt.fasta");
  EXPECT_EQ(c.output_dir, fx.dir / "out");
  ASSERT_EQ(c.experts.size(), 1u);
  EXPECT_EQ(c.experts[0].params.at(0), fx.dir / "potts.json");
}

TEST(ParseConfig, StrictAboutKeysAndValues) {
  Fixture fx("strict");
  EXPECT_THROW(fx.parse(fx.config("pathlen=3")), ValidationError);
  EXPECT_THROW(fx.parse(fx.config("lambda=-1")), ValidationError);
  EXPECT_THROW(fx.parse(fx.config("max_path_length=0")), ValidationError);
  EXPECT_THROW(fx.parse(fx.config("[mala]\ntau=1.5")), ValidationError);
  EXPECT_THROW(fx.parse(fx.config("[bogus]\nx=1")), ValidationError);
  EXPECT_THROW(fx.parse(fx.config("", "gibbs")), ValidationError);
  EXPECT_THROW(fx.parse(fx.config("lambda=calibrate")), ValidationError);  // no labeled CSV
  EXPECT_THROW(fx.parse("wild_type=wt.fasta\n[expert.p]\nkind=potts\nrole=unsupervised\nparams=potts.json\n"),
               ValidationError);
  EXPECT_THROW(fx.parse("seed=1\nwild_type=wt.fasta\n"), ValidationError);
  EXPECT_THROW(fx.parse("seed=1\nwild_type=missing.fasta\n[expert.p]\nkind=potts\nrole=unsupervised\nparams=potts.json\n"),
               ValidationError);
  EXPECT_THROW(fx.parse("seed=1\n[unterminated\n"), ParseError);
  try {
    fx.parse(fx.config("pathlen=3"));
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("pathlen"), std::string::npos);
  }
}

TEST(ParseConfig, OverridesWinOverFile) {
  Fixture fx("overrides");
  write(fx.dir / "run.ini", fx.config(""));
  cli::Overrides o;
  o.seed = 77;
  o.max_path_length = 9;
  o.chains = 2;
  o.steps = 5;
  o.out = fx.dir / "elsewhere";
  const auto c = cli::load_config(fx.dir / "run.ini", o);
  EXPECT_EQ(c.sampler_cfg.seed, 77u);
  EXPECT_EQ(c.sampler_cfg.max_path_length, 9u);
  EXPECT_EQ(c.n_chains, 2u);
  EXPECT_EQ(c.sampler_cfg.steps, 5);
  EXPECT_EQ(c.output_dir, fx.dir / "elsewhere");
  EXPECT_THROW(cli::load_config(fx.dir / "absent.ini"), ValidationError);
}

// --- sample ------------------------------------------------------------------

TEST(Sample, SameConfigAndSeedGiveByteIdenticalOutputs) {
  Fixture fx("determinism");
  for (const std::string sampler : {"ppde", "exact-lb", "sa", "mala", "random"}) {
    auto a = fx.parse(fx.config("threads=3\noutput=a", sampler));
    auto b = fx.parse(fx.config("threads=1\noutput=b", sampler));
    cli::cmd_sample(a);
    cli::cmd_sample(b);
    for (const char* f : {"population.csv", "trace.csv", "report.txt", "curve.csv"}) {
      EXPECT_EQ(io::read_file(fx.dir / "a" / f), io::read_file(fx.dir / "b" / f)) << sampler << " " << f;
    }
  }
}

TEST(Sample, RowCountsAndSequencesRoundTrip) {
  Fixture fx("rows");
  const Vocabulary v(kVocab);
  const auto c = fx.parse(fx.config("output=o"));
  const auto res = cli::cmd_sample(c);
  EXPECT_EQ(res.population_rows, 6u);
  const auto pop = rows_of(fx.dir / "o" / "population.csv");
  const auto trace = rows_of(fx.dir / "o" / "trace.csv");
  EXPECT_EQ(pop.size(), 6u);
  EXPECT_EQ(trace.size(), 6u * 200u);
  const auto wt = encode("ACDE", v);
  for (const auto& r : trace) {
    EXPECT_EQ(decode(encode(r.sequence, v), v), r.sequence);
    EXPECT_EQ(r.n_mutations, hamming_distance(encode(r.sequence, v), wt));
    EXPECT_GE(r.step, 1);
    EXPECT_LE(r.step, 200);
  }
  for (const auto& r : pop) {
    double best = ProductOfExperts(cli::load_problem(c).experts, 1.0).value(wt);
    for (const auto& t : trace) {
      if (t.chain_id == r.chain_id) best = std::max(best, t.score);
    }
    EXPECT_EQ(r.score, best);
  }
  const std::string report = io::read_file(fx.dir / "o" / "report.txt");
  EXPECT_NE(report.find("population_size=6\n"), std::string::npos);
  EXPECT_EQ(io::read_file(fx.dir / "o" / "curve.csv").rfind("step,chain_id,running_max\n", 0), 0u);
}

TEST(Sample, RandomSamplingReturnsTopKSorted) {
  Fixture fx("random");
  const auto c = fx.parse(fx.config("output=r\n[random]\nbudget=300\ntop_k=10", "random"));
  EXPECT_EQ(cli::cmd_sample(c).population_rows, 10u);
  const auto pop = rows_of(fx.dir / "r" / "population.csv");
  const auto all = rows_of(fx.dir / "r" / "trace.csv");
  ASSERT_EQ(pop.size(), 10u);
  EXPECT_EQ(all.size(), 300u);
  for (std::size_t k = 1; k < pop.size(); ++k) EXPECT_GE(pop[k - 1].score, pop[k].score);
  std::size_t strictly_better = 0;
  for (const auto& r : all) strictly_better += r.score > pop.back().score;
  EXPECT_LE(strictly_better, 9u);
  EXPECT_THROW(fx.parse(fx.config("[random]\nbudget=5\ntop_k=10", "random")), ValidationError);
}

TEST(Sample, FullyFrozenOutputsAreWildType) {
  Fixture fx("frozen");
  for (const std::string sampler : {"ppde", "exact-lb", "sa", "random", "mala"}) {
    const auto c = fx.parse(fx.config("frozen_positions=0,1,2,3\noutput=f", sampler));
    cli::cmd_sample(c);
    for (const char* f : {"population.csv", "trace.csv"}) {
      for (const auto& r : rows_of(fx.dir / "f" / f)) EXPECT_EQ(r.sequence, "ACDE") << sampler;
    }
  }
  EXPECT_THROW(cli::cmd_sample(fx.parse(fx.config("frozen_positions=4"))), OutOfBounds);
}

TEST(Sample, ExpertLengthMustMatchWildType) {
  Fixture fx("shape");
  write(fx.dir / "wt.fasta", ">wt\nACD\n");
  EXPECT_THROW(cli::cmd_sample(fx.parse(fx.config(""))), ShapeMismatch);
}

// --- calibrate ---------------------------------------------------------------

TEST(CalibrateLambda, ConstructedPoolsAndTrivialGrid) {
  Fixture fx("calibrate");
  const std::string experts =
      "[expert.u]\nkind=linear\nrole=unsupervised\nparams=f.json\n"
      "[expert.s]\nkind=linear\nrole=supervised\nparams=g.json\n";
  const std::string head = "seed=3\nwild_type=wt.fasta\nvocabulary=ACDE\nlambda=calibrate\nsteps=50\nchains=2\noutput=cal\n";
  std::ostringstream out;
  const auto c = fx.parse(head + "[calibrate]\nlabeled=labeled.csv\n" + experts);
  EXPECT_EQ(cli::cmd_calibrate_lambda(c, std::nullopt, out), 5.0);
  EXPECT_EQ(out.str(), "5\n");
  const auto kv = io::read_file(fx.dir / "cal" / "lambda.txt");
  EXPECT_EQ(kv, "lambda=5\nlow_pool=20\nhigh_pool=20\n");

  const auto one = fx.parse(head + "[calibrate]\nlabeled=labeled.csv\ngrid=1\n" + experts);
  EXPECT_EQ(cli::cmd_calibrate_lambda(one, std::nullopt, out), 1.0);

  EXPECT_EQ(cli::cmd_sample(c).lambda, 5.0);

  write(fx.dir / "below.csv", "sequence,activity\nACDE,0\nAAAA,-1\nCCCC,-2\n");
  EXPECT_THROW(cli::cmd_calibrate_lambda(c, fx.dir / "below.csv", out), InsufficientData);
  const auto pinned = fx.parse(head + "[calibrate]\nlabeled=below.csv\nwt_activity=-1.5\n" + experts);
  EXPECT_NO_THROW(cli::cmd_calibrate_lambda(pinned, std::nullopt, out));
}

TEST(CalibrateLambda, PoolsAreSubsampledToTheCap) {
  Fixture fx("cap");
  const auto c = fx.parse(
      "seed=3\nwild_type=wt.fasta\nvocabulary=ACDE\noutput=cap\n[calibrate]\nlabeled=labeled.csv\nper_pool=7\n"
      "[expert.u]\nkind=linear\nrole=unsupervised\nparams=f.json\n"
      "[expert.s]\nkind=linear\nrole=supervised\nparams=g.json\n");
  std::ostringstream out;
  cli::cmd_calibrate_lambda(c, std::nullopt, out);
  EXPECT_EQ(io::read_file(fx.dir / "cap" / "lambda.txt").substr(9), "low_pool=7\nhigh_pool=7\n");
}

// --- fit-supervised ------------------------------------------------------------

TEST(FitSupervised, ConstantLabelsAndLoadableOutput) {
  Fixture fx("fit");
  const Vocabulary v(kVocab);
  write(fx.dir / "const.csv", "sequence,activity\nACDE,2.5\nAAAA,2.5\nCDEA,2.5\nEEEE,2.5\nDACE,2.5\n");
  const auto p = cli::cmd_fit_supervised(fx.dir / "const.csv", 1.0, v, fx.dir / "fit.json");
  for (double w : p.w) EXPECT_NEAR(w, 0.0, 1e-10);
  EXPECT_NEAR(p.b, 2.5, 1e-10);
  const auto back = io::load_linear(fx.dir / "fit.json", v);
  EXPECT_EQ(back.w, p.w);
  EXPECT_EQ(back.b, p.b);
}

TEST(FitSupervised, MissingActivityColumnIsNamed) {
  Fixture fx("schema");
  write(fx.dir / "bad.csv", "sequence,fitness\nACDE,1\n");
  try {
    cli::cmd_fit_supervised(fx.dir / "bad.csv", 1.0, Vocabulary(kVocab), fx.dir / "fit.json");
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("activity"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(fx.dir / "fit.json"));
}

// --- verify and metrics --------------------------------------------------------

TEST(Verify, TinyPresetPassesAndInvertedAcceptanceFails) {
  Fixture fx("verify");
  std::ostringstream out;
  EXPECT_EQ(cli::cmd_verify("tiny", fx.dir, out), cli::kExitOk);
  EXPECT_NE(out.str().find("PASS stationary_tv"), std::string::npos);
  std::ifstream rep(fx.dir / "verify_report.txt");
  EXPECT_EQ(read_report(rep).at("all_passed"), "true");
  std::ostringstream bad;
  EXPECT_EQ(cli::cmd_verify("tiny", std::nullopt, bad, [](double lr) { return acceptance_probability(-lr); }),
            cli::kExitVerify);
  EXPECT_NE(bad.str().find("FAIL detailed_balance_u1_linear"), std::string::npos);
}

TEST(Metrics, RecomputedReportMatchesSampleReportBody) {
  Fixture fx("metrics");
  cli::cmd_sample(fx.parse(fx.config("output=m")));
  const auto rep = cli::cmd_metrics(fx.dir / "m" / "trace.csv", fx.dir / "mm", Vocabulary(kVocab), std::nullopt,
                                    UniqueMode::exactly_once);
  EXPECT_EQ(rep.population_size, 6u);
  EXPECT_EQ(io::read_file(fx.dir / "m" / "curve.csv"), io::read_file(fx.dir / "mm" / "curve.csv"));
  const auto top = cli::cmd_metrics(fx.dir / "m" / "trace.csv", fx.dir / "mt", Vocabulary(kVocab), 25,
                                    UniqueMode::distinct);
  EXPECT_EQ(top.population_size, 25u);
}

// --- binary ------------------------------------------------------------------

TEST(Binary, ExitCodes) {
  Fixture fx("exit");
  write(fx.dir / "ok.ini", fx.config("output=bin", "ppde", 20, 2));
  write(fx.dir / "typo.ini", fx.config("pathlen=2"));
  write(fx.dir / "badwt.ini", fx.config("output=bin2"));
  const std::string d = fx.dir.string();
  EXPECT_EQ(run_cli("sample --config " + d + "/ok.ini --steps 10"), 0);
  EXPECT_EQ(rows_of(fx.dir / "bin" / "trace.csv").size(), 20u);
  EXPECT_EQ(run_cli("sample --config " + d + "/typo.ini"), 2);
  EXPECT_EQ(run_cli("sample --config " + d + "/absent.ini"), 2);
  EXPECT_EQ(run_cli("sample"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  write(fx.dir / "wt.fasta", ">wt\nACXE\n");
  EXPECT_EQ(run_cli("sample --config " + d + "/badwt.ini"), 3);
  EXPECT_EQ(run_cli("verify --preset tiny"), 0);
  EXPECT_EQ(run_cli("verify --preset huge"), 2);
  EXPECT_EQ(run_cli("fit-supervised --labeled " + d + "/labeled.csv --vocabulary ACDE --out " + d + "/fit.json"), 0);
  EXPECT_TRUE(fs::exists(fx.dir / "fit.json"));
}
