#pragma once

#include "sarl/grid.hpp"
#include "sarl/safety.hpp"

namespace sarl {

struct EpisodeStep {
  StepOutcome outcome;
  int impact = 0;            // impact penalty after this step
  double safe_reward = 0.0;  // -(impact after - impact before)
};

// One running episode: the actual board, its inaction counterfactual stepped
// in lockstep, and the bookkeeping evaluation needs. Still levels keep the
// initial board as the counterfactual instead of stepping it.
class Episode {
 public:
  Episode() = default;
  Episode(Board level, TaskKind task, int episode_cap,
          CounterfactualSeeding seeding = CounterfactualSeeding::Matched, RewardTable table = {});

  EpisodeStep step(Action action);

  const Board& board() const { return board_; }
  const Board& initial() const { return initial_; }
  const Board& counterfactual() const { return counterfactual_; }
  TaskKind task() const { return task_; }
  int episode_cap() const { return cap_; }
  CounterfactualSeeding seeding() const { return seeding_; }
  const RewardTable& rewards() const { return table_; }
  int t() const { return t_; }
  bool done() const { return done_; }
  int impact() const { return impact_; }
  bool still() const { return still_; }

  // Sum of red-removal / goal-coverage rewards, without step costs or exit bonus.
  double material_reward() const { return material_reward_; }
  double total_reward() const { return total_reward_; }
  // Initial red count (prune) or goal-marker count (append).
  int possible_reward() const;

  // Restores a mid-episode state (used when resuming a run).
  static Episode restore(Board level, Board board, Board counterfactual, TaskKind task, int cap,
                         CounterfactualSeeding seeding, int t, bool done, int impact,
                         double material_reward, double total_reward, RewardTable table = {});

 private:
  Board initial_;
  Board board_;
  Board counterfactual_;
  TaskKind task_ = TaskKind::Prune;
  int cap_ = 0;
  CounterfactualSeeding seeding_ = CounterfactualSeeding::Matched;
  RewardTable table_;
  bool still_ = false;
  int t_ = 0;
  bool done_ = false;
  int impact_ = 0;
  double material_reward_ = 0.0;
  double total_reward_ = 0.0;
};

}  // namespace sarl
