#pragma once

// Population and trace statistics: diversity, mutation counts, nearest-rank
// percentiles and cumulative-max efficiency curves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "ppde/error.hpp"
#include "ppde/seqspace.hpp"
#include "ppde/trace.hpp"

namespace ppde {

enum class UniqueMode {
  exactly_once,  // sequences that occur exactly once in the population
  distinct,      // number of distinct sequences
};

inline double diversity(const std::vector<OneHotSequence>& population,
                        UniqueMode mode = UniqueMode::exactly_once) {
  if (population.empty()) throw EmptyPopulation("diversity of an empty population");
  std::map<std::vector<Token>, std::size_t> counts;
  for (const auto& x : population) {
    require_same_shape(x, population.front());
    ++counts[std::vector<Token>(x.tokens().begin(), x.tokens().end())];
  }
  std::size_t unique = 0;
  if (mode == UniqueMode::distinct) {
    unique = counts.size();
  } else {
    for (const auto& [seq, n] : counts) unique += (n == 1);
  }
  return 100.0 * static_cast<double>(unique) / static_cast<double>(population.size());
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

inline MeanStd mutation_stats(const std::vector<OneHotSequence>& population,
                              const OneHotSequence& wt) {
  if (population.empty()) throw EmptyPopulation("mutation stats of an empty population");
  std::vector<double> d;
  d.reserve(population.size());
  for (const auto& x : population) d.push_back(static_cast<double>(hamming_distance(x, wt)));
  MeanStd out;
  for (double v : d) out.mean += v;
  out.mean /= static_cast<double>(d.size());
  double ss = 0.0;
  for (double v : d) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(d.size()));
  return out;
}

struct PercentileRow {
  double percentile = 0.0;
  double score = 0.0;
};

// Nearest rank: the ceil(p/100 * n)-th smallest score (rank clamped to >= 1).
inline std::vector<PercentileRow> percentile_scores(std::vector<double> scores,
                                                    const std::vector<double>& percentiles = {
                                                        50.0, 80.0, 100.0}) {
  if (scores.empty()) throw EmptyPopulation("percentiles of an empty population");
  std::sort(scores.begin(), scores.end());
  const double n = static_cast<double>(scores.size());
  std::vector<PercentileRow> out;
  for (double p : percentiles) {
    if (!(p >= 0.0 && p <= 100.0)) throw InvalidArgument("percentile must lie in [0, 100]");
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, scores.size());
    out.push_back({p, scores[rank - 1]});
  }
  return out;
}

inline std::vector<double> running_max(const ChainTrace& t) {
  std::vector<double> out;
  out.reserve(t.steps.size());
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& s : t.steps) {
    m = std::max(m, s.logp);
    out.push_back(m);
  }
  return out;
}

// Per-step mean over chains of the running maximum of pi.
inline std::vector<double> cumulative_max_curve(const std::vector<ChainTrace>& traces) {
  if (traces.empty()) throw EmptyPopulation("no traces");
  const std::size_t n = traces.front().steps.size();
  std::vector<double> curve(n, 0.0);
  for (const auto& t : traces) {
    if (t.steps.size() != n) throw ShapeMismatch("traces do not share a step grid");
    for (std::size_t k = 0; k < n; ++k) {
      if (t.steps[k].step != traces.front().steps[k].step) {
        throw ShapeMismatch("traces do not share a step grid");
      }
    }
    const auto rm = running_max(t);
    for (std::size_t k = 0; k < n; ++k) curve[k] += rm[k];
  }
  for (double& c : curve) c /= static_cast<double>(traces.size());
  return curve;
}

// First step whose running max reaches `target` (within tol); nullopt if never.
inline std::optional<std::int64_t> hitting_step(const ChainTrace& t, double target,
                                                double tol = 1e-9) {
  for (const auto& s : t.steps) {
    if (s.logp >= target - tol) return s.step;
  }
  return std::nullopt;
}

struct PopulationReport {
  std::size_t population_size = 0;
  double diversity_pct = 0.0;
  MeanStd mutations;
  std::vector<PercentileRow> percentiles;
};

inline PopulationReport population_report(const std::vector<OneHotSequence>& population,
                                          const std::vector<double>& scores,
                                          const OneHotSequence& wt,
                                          UniqueMode mode = UniqueMode::exactly_once) {
  if (population.size() != scores.size()) throw ShapeMismatch("one score per member required");
  return {population.size(), diversity(population, mode), mutation_stats(population, wt),
          percentile_scores(scores)};
}

// Mutation counts are given directly (e.g. re-read from a trace file).
inline PopulationReport population_report(const std::vector<OneHotSequence>& population,
                                          const std::vector<double>& scores,
                                          const std::vector<std::size_t>& mutations,
                                          UniqueMode mode = UniqueMode::exactly_once) {
  if (population.size() != scores.size() || mutations.size() != scores.size()) {
    throw ShapeMismatch("one score and mutation count per member required");
  }
  MeanStd m;
  for (auto v : mutations) m.mean += static_cast<double>(v);
  m.mean /= static_cast<double>(mutations.size());
  double ss = 0.0;
  for (auto v : mutations) ss += (static_cast<double>(v) - m.mean) * (static_cast<double>(v) - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(mutations.size()));
  return {population.size(), diversity(population, mode), m, percentile_scores(scores)};
}

}  // namespace ppde
