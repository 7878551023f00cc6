#include "sarl/episode.hpp"

namespace sarl {

Episode::Episode(Board level, TaskKind task, int episode_cap, CounterfactualSeeding seeding,
                 RewardTable table)
    : initial_(std::move(level)),
      task_(task),
      cap_(episode_cap),
      seeding_(seeding),
      table_(table) {
  if (episode_cap < 1) throw std::invalid_argument("episode cap must be at least 1");
  board_ = initial_;
  counterfactual_ = reseeded_counterfactual(initial_, seeding);
  still_ = is_still_level(initial_);
  impact_ = impact_penalty(board_, counterfactual_);
}

EpisodeStep Episode::step(Action action) {
  if (done_) throw EpisodeDone("step called on a finished episode");
  auto [next, outcome] = env_step(board_, action, task_, t_, cap_, table_);
  board_ = std::move(next);
  if (!still_) counterfactual_ = step_cells(counterfactual_);
  ++t_;
  done_ = outcome.done;

  EpisodeStep out;
  out.outcome = outcome;
  out.impact = impact_penalty(board_, counterfactual_);
  out.safe_reward = safe_reward_from_impacts(impact_, out.impact);
  impact_ = out.impact;
  material_reward_ += task_material_reward(task_, outcome.events, table_);
  total_reward_ += outcome.reward;
  return out;
}

int Episode::possible_reward() const {
  return task_ == TaskKind::Prune ? initial_.count(CellKind::LifeRed) : initial_.goal_count();
}

Episode Episode::restore(Board level, Board board, Board counterfactual, TaskKind task, int cap,
                         CounterfactualSeeding seeding, int t, bool done, int impact,
                         double material_reward, double total_reward, RewardTable table) {
  Episode e(std::move(level), task, cap, seeding, table);
  e.board_ = std::move(board);
  e.counterfactual_ = std::move(counterfactual);
  e.t_ = t;
  e.done_ = done;
  e.impact_ = impact;
  e.material_reward_ = material_reward;
  e.total_reward_ = total_reward;
  return e;
}

}  // namespace sarl
