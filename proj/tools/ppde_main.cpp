#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ppde/cli.hpp"

namespace cli = ppde::cli;

namespace {

int run(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ppde::ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kExitConfig;
  } catch (const ppde::ValidationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Product-of-experts protein sequence sampling"};
  app.require_subcommand(1);

  std::string config_path;
  cli::Overrides ov;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_path_length, chains;
  std::optional<std::int64_t> steps;
  std::optional<std::string> out;

  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration file")->required();
    sub->add_option("--seed", seed, "override the master seed");
    sub->add_option("--max-path-length", max_path_length, "override U");
    sub->add_option("--chains", chains, "override the number of chains");
    sub->add_option("--steps", steps, "override steps per chain");
    sub->add_option("--out", out, "output directory");
  };
  auto overrides = [&] {
    cli::Overrides o;
    o.seed = seed;
    o.max_path_length = max_path_length;
    o.chains = chains;
    o.steps = steps;
    if (out) o.out = *out;
    return o;
  };

  auto* sample = app.add_subcommand("sample", "run the configured sampler");
  add_run_flags(sample);

  auto* calibrate = app.add_subcommand("calibrate-lambda", "choose lambda from labeled data");
  add_run_flags(calibrate);
  std::optional<std::string> labeled_for_lambda;
  calibrate->add_option("--labeled", labeled_for_lambda, "labeled CSV (sequence,activity)");

  auto* fit = app.add_subcommand("fit-supervised", "fit a ridge linear expert");
  std::string fit_labeled, fit_out, fit_vocab{ppde::kAminoAcids};
  double ridge = 1.0;
  fit->add_option("--labeled", fit_labeled, "labeled CSV (sequence,activity)")->required();
  fit->add_option("--ridge", ridge, "ridge penalty")->capture_default_str();
  fit->add_option("--vocabulary", fit_vocab, "token alphabet")->capture_default_str();
  fit->add_option("--out", fit_out, "output parameter file")->required();

  auto* verify = app.add_subcommand("verify", "run the exact-enumeration oracle suite");
  std::string preset = "tiny";
  std::optional<std::string> verify_out;
  verify->add_option("--preset", preset, "tiny or small")->capture_default_str();
  verify->add_option("--out", verify_out, "directory for verify_report.txt");

  auto* metrics = app.add_subcommand("metrics", "recompute report.txt and curve.csv from trace.csv");
  std::string trace_path, metrics_out = ".", metrics_vocab{ppde::kAminoAcids}, unique = "exactly_once";
  std::optional<std::size_t> top_k;
  metrics->add_option("--trace", trace_path, "trace.csv")->required();
  metrics->add_option("--out", metrics_out, "output directory")->capture_default_str();
  metrics->add_option("--vocabulary", metrics_vocab, "token alphabet")->capture_default_str();
  metrics->add_option("--top-k", top_k, "population = top K rows instead of per-chain best");
  metrics->add_option("--unique", unique, "exactly_once or distinct")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : cli::kExitConfig;
  }

  if (*sample) {
    return run([&] {
      const auto cfg = cli::load_config(config_path, overrides());
      const auto res = cli::cmd_sample(cfg);
      std::cerr << "wrote " << res.population_rows << " population rows to " << cfg.output_dir.string()
                << '\n';
      return cli::kExitOk;
    });
  }
  if (*calibrate) {
    return run([&] {
      const auto cfg = cli::load_config(config_path, overrides());
      std::optional<std::filesystem::path> p;
      if (labeled_for_lambda) p = *labeled_for_lambda;
      cli::cmd_calibrate_lambda(cfg, p);
      return cli::kExitOk;
    });
  }
  if (*fit) {
    return run([&] {
      ppde::Vocabulary vocab = [&] {
        try {
          return ppde::Vocabulary(fit_vocab);
        } catch (const ppde::Error& e) {
          throw ppde::ValidationError("vocabulary", e.what());
        }
      }();
      cli::cmd_fit_supervised(fit_labeled, ridge, vocab, fit_out);
      return cli::kExitOk;
    });
  }
  if (*verify) {
    return run([&] {
      if (preset != "tiny" && preset != "small") throw ppde::ValidationError("preset", "expected tiny or small");
      std::optional<std::filesystem::path> o;
      if (verify_out) o = *verify_out;
      return cli::cmd_verify(preset, o);
    });
  }
  return run([&] {
    ppde::UniqueMode mode;
    if (unique == "exactly_once") {
      mode = ppde::UniqueMode::exactly_once;
    } else if (unique == "distinct") {
      mode = ppde::UniqueMode::distinct;
    } else {
      throw ppde::ValidationError("unique", "expected exactly_once or distinct");
    }
    cli::cmd_metrics(trace_path, metrics_out, ppde::Vocabulary(metrics_vocab), top_k, mode);
    return cli::kExitOk;
  });
}
