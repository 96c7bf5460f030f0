#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ppde/seqspace.hpp"

namespace ppde {

struct StepRecord {
  std::int64_t step = 0;
  bool accepted = false;
  double logp = 0.0;
  std::size_t mutations = 0;
  // State after the step; empty unless states were recorded.
  std::vector<Token> tokens;
};

struct ChainTrace {
  std::size_t chain_id = 0;
  std::vector<StepRecord> steps;
  OneHotSequence best;
  double best_logp = 0.0;
  std::int64_t best_step = 0;  // 0 means the initial state
};

}  // namespace ppde
