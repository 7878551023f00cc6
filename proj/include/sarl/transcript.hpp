#pragma once

#include <functional>
#include <ostream>

#include "sarl/episode.hpp"
#include "sarl/policy.hpp"

namespace sarl {

// Chooses an action from the current board.
using BoardPolicy = std::function<Action(const Board&)>;

BoardPolicy greedy_policy(const PolicyParams& params);
BoardPolicy noop_policy();
// Plays the given actions in order, then noops.
BoardPolicy scripted_policy(std::vector<Action> actions);

struct TranscriptOptions {
  TaskKind task = TaskKind::Prune;
  int episode_cap = 100;
  int max_steps = -1;  // < 0: until the episode ends
  CounterfactualSeeding seeding = CounterfactualSeeding::Matched;
};

// Writes the initial board, then one frame per step: a "step" line with the
// action, reward, impact penalty, safe reward and red count, followed by the
// board. Returns the number of frames written.
int write_transcript(std::ostream& out, const Board& level, const BoardPolicy& policy, const TranscriptOptions& opt);

}  // namespace sarl
