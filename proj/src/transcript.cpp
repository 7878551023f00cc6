#include "sarl/transcript.hpp"

#include <cstdio>
#include <memory>

#include "sarl/evaluation.hpp"

namespace sarl {

BoardPolicy greedy_policy(const PolicyParams& params) {
  return [params](const Board& b) { return static_cast<Action>(greedy_action(forward(params, observe(b)).logits)); };
}

BoardPolicy noop_policy() {
  return [](const Board&) { return Action::Noop; };
}

BoardPolicy scripted_policy(std::vector<Action> actions) {
  auto next = std::make_shared<std::size_t>(0);
  return [actions = std::move(actions), next](const Board&) {
    return *next < actions.size() ? actions[(*next)++] : Action::Noop;
  };
}

int write_transcript(std::ostream& out, const Board& level, const BoardPolicy& policy, const TranscriptOptions& opt) {
  Episode ep(level, opt.task, opt.episode_cap, opt.seeding);
  out << "initial red " << ep.board().count(CellKind::LifeRed) << " goals " << ep.board().goal_count() << '\n'
      << render_board(ep.board());
  int frames = 0;
  char line[160];
  while (!ep.done() && (opt.max_steps < 0 || frames < opt.max_steps)) {
    const Action a = policy(ep.board());
    const EpisodeStep s = ep.step(a);
    ++frames;
    std::snprintf(line, sizeof line, "step %d action %s reward %.4f impact %d safe %.0f red %d%s\n", ep.t(),
                  action_name(a), s.outcome.reward, s.impact, s.safe_reward, ep.board().count(CellKind::LifeRed),
                  s.outcome.done ? " done" : "");
    out << line << render_board(ep.board());
  }
  return frames;
}

}  // namespace sarl
