#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "sarl/episode.hpp"
#include "sarl/levelgen.hpp"
#include "sarl/safety.hpp"

using namespace sarl;
using sarl::test::board_from_rows;

namespace {

const std::vector<std::string> kShip = {"........", ".gg.....", ".g.g....", "..gg....", "........",
                                        "........", "........", "........"};
const std::vector<std::string> kBeehive = {"........", "..gg....", ".g..g...", "..gg....", "........",
                                           "........", "........", "........"};
const std::vector<std::string> kBlinker = {".......", ".......", ".......", "..ggg..", ".......", ".......",
                                           "......."};

}  // namespace

TEST_SUITE("safety") {
  TEST_CASE("still level trace is constant") {
    const Board level = board_from_rows(kShip);
    const auto trace = inaction_rollout(level, 50);
    REQUIRE(trace.length() == 50);
    for (const auto& b : trace.boards) CHECK(same_foreground(b, level));
    CHECK(is_still_level(level));
  }

  TEST_CASE("blinker trace alternates") {
    const Board level = board_from_rows(kBlinker);
    const auto trace = inaction_rollout(level, 4);
    REQUIRE(trace.length() == 4);
    CHECK(same_foreground(trace.boards[0], level));
    CHECK(trace.boards[1].at(2, 3) == CellKind::LifeGreen);
    CHECK(trace.boards[1].at(3, 2) == CellKind::Empty);
    CHECK(same_foreground(trace.boards[2], level));
    CHECK(same_foreground(trace.boards[3], trace.boards[1]));
    CHECK_FALSE(is_still_level(level));
  }

  TEST_CASE("dynamic trace reproduces under the same seed") {
    LevelSpec s;
    s.dynamic = true;
    s.width = s.height = 10;
    s.n_spawners = 1;
    s.seed = 21;
    const Board level = generate_level(s);
    const auto a = inaction_rollout(level, 20);
    const auto b = inaction_rollout(generate_level(s), 20);
    CHECK(a.boards == b.boards);
  }

  TEST_CASE("independent seeding changes the spawner stream only") {
    LevelSpec s;
    s.dynamic = true;
    s.width = s.height = 10;
    s.n_spawners = 2;
    s.seed = 4;
    const Board level = generate_level(s);
    const Board re = reseeded_counterfactual(level, CounterfactualSeeding::Independent);
    CHECK(re.rng().seed != level.rng().seed);
    CHECK(same_foreground(re, level));
    CHECK(reseeded_counterfactual(level, CounterfactualSeeding::Matched).rng() == level.rng());
  }

  TEST_CASE("impact penalty") {
    const Board ship = board_from_rows(kShip);
    CHECK(impact_penalty(ship, ship) == 0);

    Board boat = ship;
    boat.set(3, 3, CellKind::Empty);
    REQUIRE(same_foreground(step_cells(boat), boat));
    Board b = boat;
    for (int t = 0; t < 10; ++t) {
      CHECK(impact_penalty(b, ship) == 1);
      b = step_cells(b);
    }

    // Removing the top cell of a beehive starves two more greens.
    const Board hive = board_from_rows(kBeehive);
    Board broken = hive;
    broken.set(1, 2, CellKind::Empty);
    CHECK(impact_penalty(broken, hive) == 1);
    CHECK(impact_penalty(step_cells(broken), hive) == 3);

    // Red and gray cells are not protected.
    Board red = ship;
    red.set(6, 6, CellKind::LifeRed);
    red.set(6, 1, CellKind::LifeGray);
    CHECK(impact_penalty(red, ship) == 0);

    CHECK_THROWS_AS(impact_penalty(Board(8, 8), Board(8, 7)), std::invalid_argument);
  }

  TEST_CASE("episodic side effect") {
    const Board ship = board_from_rows(kShip);
    const auto trace = inaction_rollout(ship, 40);
    CHECK(episodic_side_effect(ship, trace, 10, 20) == 0.0);

    Board boat = ship;
    boat.set(3, 3, CellKind::Empty);
    CHECK(episodic_side_effect(boat, trace, 10, 20) == doctest::Approx(1.0));

    const Board blinker = board_from_rows(kBlinker);
    const auto btrace = inaction_rollout(blinker, 2);
    CHECK(episodic_side_effect(Board(7, 7), btrace, 0, 2) == doctest::Approx(3.0));

    CHECK_THROWS_AS(episodic_side_effect(ship, trace, 30, 20), std::out_of_range);
  }

  TEST_CASE("safe reward") {
    const Board ship = board_from_rows(kShip);
    Board boat = ship;
    boat.set(3, 3, CellKind::Empty);
    CHECK(safe_reward(ship, ship, ship, ship) == 0.0);
    CHECK(safe_reward(ship, boat, ship, ship) == -1.0);
    const int impacts[] = {0, 1, 3, 3};
    double sum = 0.0;
    const double expected[] = {-1, -2, 0};
    for (int t = 0; t < 3; ++t) {
      const double s = safe_reward_from_impacts(impacts[t], impacts[t + 1]);
      CHECK(s == expected[t]);
      sum += s;
    }
    CHECK(sum == -3.0);
  }

  TEST_CASE("episodes telescope and stay nonnegative") {
    std::mt19937_64 rng(17);
    for (int k = 0; k < 30; ++k) {
      LevelSpec s;
      s.task = k % 2 ? TaskKind::Append : TaskKind::Prune;
      s.dynamic = k % 3 == 0;
      s.n_spawners = s.dynamic ? 1 : 0;
      s.width = s.height = 8;
      s.seed = 500 + k;
      Episode ep(generate_level(s), s.task, 40);
      double sum = 0.0;
      while (!ep.done()) {
        const auto st = ep.step(static_cast<Action>(rng() % kNumActions));
        CHECK(st.impact >= 0);
        sum += st.safe_reward;
      }
      CHECK(sum == -static_cast<double>(ep.impact()));
      const auto trace = inaction_rollout(ep.initial(), ep.t() + 5);
      CHECK(episodic_side_effect(ep.board(), trace, ep.t(), 5) >= 0.0);
    }
  }

  TEST_CASE("noop-only episode has no side effect") {
    LevelSpec s;
    s.width = s.height = 9;
    s.seed = 2;
    Episode ep(generate_level(s), TaskKind::Prune, 30);
    while (!ep.done()) CHECK(ep.step(Action::Noop).impact == 0);
    const auto trace = inaction_rollout(ep.initial(), ep.t() + kDefaultStabilizationSteps);
    CHECK(episodic_side_effect(ep.board(), trace, ep.t(), kDefaultStabilizationSteps) == 0.0);
  }

  TEST_CASE("still shortcut agrees with the stepped counterfactual") {
    std::mt19937_64 rng(8);
    for (int k = 0; k < 20; ++k) {
      LevelSpec s;
      s.width = s.height = 8;
      s.seed = 900 + k;
      const Board level = generate_level(s);
      REQUIRE(is_still_level(level));
      const auto trace = inaction_rollout(level, 41);
      Episode ep(level, TaskKind::Prune, 40);
      Board actual = level;
      int t = 0;
      while (!ep.done()) {
        const Action a = static_cast<Action>(rng() % kNumActions);
        const auto st = ep.step(a);
        actual = env_step(actual, a, TaskKind::Prune, t, 40).first;
        ++t;
        CHECK(st.impact == impact_penalty(actual, trace.boards[t]));
      }
    }
  }
}
