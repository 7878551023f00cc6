// sarl: generate level banks, train agents, evaluate and inspect checkpoints.
//
// Exit codes: 0 ok, 2 usage or config error, 3 IO error, 4 numerical abort.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sarl/config.hpp"
#include "sarl/evaluation.hpp"
#include "sarl/levelgen.hpp"
#include "sarl/train.hpp"
#include "sarl/transcript.hpp"

namespace fs = std::filesystem;
using namespace sarl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

// ------------------------------------------------------------ generate-levels

struct GenerateArgs {
  std::string task = "prune";
  bool dynamic = false;
  bool still = false;
  int n = -1;
  std::uint64_t base_seed = kTestSeedBase;
  int width = 10, height = 10;
  int pattern_cells = 8, goal_markers = 1, spawners = 0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  if (a.n < 1) throw UsageError("--n must be at least 1");
  if (a.still && a.dynamic) throw UsageError("--still and --dynamic are exclusive");
  LevelSpec shape;
  shape.task = parse_task(a.task);
  shape.dynamic = a.dynamic;
  shape.width = a.width;
  shape.height = a.height;
  shape.n_pattern_cells = a.pattern_cells;
  shape.n_goal_markers = a.goal_markers;
  shape.n_spawners = a.spawners;
  const auto boards = build_test_bank(shape, a.n, a.base_seed);
  write_bank(a.out, boards, a.base_seed);
  std::printf("wrote %d levels to %s\n", a.n, a.out.c_str());
  return 0;
}

// ------------------------------------------------------------ train

struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string run_dir;
  bool resume = false;
};

int cmd_train(const TrainArgs& a) {
  const fs::path dir = a.run_dir;
  const fs::path snapshot = dir / kConfigSnapshotName;
  ParsedConfig parsed;
  if (a.resume) {
    if (!a.config.empty() || !a.sets.empty()) throw UsageError("--resume takes its config from the run directory");
    if (!fs::exists(snapshot)) throw IoError("no config snapshot in " + dir.string());
    parsed = parse_config(read_file(snapshot));
  } else {
    parsed = parse_config(a.config.empty() ? std::string() : read_file(a.config), a.sets);
    if (fs::exists(dir / kMetricsName) || fs::exists(snapshot)) {
      throw UsageError("run directory " + dir.string() + " already holds a run; use --resume or a new directory");
    }
  }
  for (const auto& w : parsed.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const RunConfig& cfg = parsed.config;

  fs::create_directories(dir);
  if (!a.resume) write_file(snapshot, format_config(cfg));

  Trainer trainer(cfg, test_bank_for(cfg));
  if (a.resume) {
    const fs::path state = dir / kResumeDirName;
    if (fs::exists(state / "state.json")) {
      trainer.load_state(state);
    } else {
      // Nothing was saved before the interruption; start over.
      fs::remove(dir / kMetricsName);
    }
    // Drop metrics rows written after the saved state.
    if (fs::exists(dir / kMetricsName)) {
      std::istringstream in(read_file(dir / kMetricsName));
      std::string line, kept;
      std::size_t n = 0;
      while (std::getline(in, line) && n <= trainer.rows().size()) {
        kept += line + '\n';
        ++n;
      }
      write_file(dir / kMetricsName, kept);
    }
    std::printf("resuming at %lld env steps\n", static_cast<long long>(trainer.env_steps()));
  }
  try {
    trainer.run(dir);
  } catch (const NonFiniteLoss& e) {
    write_file(dir / "diagnostic.txt", std::string("numerical abort: ") + e.what() + "\n" + trainer.diagnostic());
    std::fprintf(stderr, "numerical abort: %s (see %s)\n", e.what(), (dir / "diagnostic.txt").c_str());
    return kExitNumerical;
  }
  for (const auto& c : trainer.champions()) {
    if (c.best_score) {
      std::printf("champion %-12s %.4f at %lld steps\n", metric_name(c.metric), *c.best_score,
                  static_cast<long long>(c.step_found));
    }
  }
  std::printf("done: %lld env steps, %lld updates\n", static_cast<long long>(trainer.env_steps()),
              static_cast<long long>(trainer.updates()));
  return 0;
}

// ------------------------------------------------------------ eval

struct EvalArgs {
  std::string checkpoint;
  std::string bank;
  std::string task = "prune";
  int episode_cap = 100;
  int t_stab = kDefaultStabilizationSteps;
  bool sampled = false;
  std::uint64_t seed = 0;
  std::string csv;
};

int cmd_eval(const EvalArgs& a) {
  const PolicyParams params = load_checkpoint(a.checkpoint);
  const auto bank = load_bank(a.bank);
  if (bank.empty()) throw IoError("bank " + a.bank + " is empty");
  for (const auto& b : bank) {
    if (b.width() != params.arch.width || b.height() != params.arch.height) {
      throw UsageError("bank level size does not match the checkpoint's architecture");
    }
  }
  EvalOptions opt;
  opt.task = parse_task(a.task);
  opt.episode_cap = a.episode_cap;
  opt.t_stab = a.t_stab;
  opt.greedy = !a.sampled;
  opt.sample_seed = a.seed;
  const EvalScore s = evaluate(params, bank, opt);
  std::printf("levels %zu\nmean_length %.4f +- %.4f\nmean_perf_ratio %.4f +- %.4f\nmean_side_effect %.4f +- %.4f\n",
              bank.size(), s.mean_episode_length, s.stderr_length, s.mean_performance_ratio, s.stderr_performance,
              s.mean_side_effect, s.stderr_side_effect);
  if (!a.csv.empty()) {
    const bool fresh = !fs::exists(a.csv);
    std::ofstream out(a.csv, std::ios::app);
    if (fresh) out << "checkpoint,bank,task,mean_length,mean_perf_ratio,mean_side_effect,stderr_length,"
                      "stderr_perf_ratio,stderr_side_effect\n";
    char line[512];
    std::snprintf(line, sizeof line, "%s,%s,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", a.checkpoint.c_str(),
                  a.bank.c_str(), a.task.c_str(), s.mean_episode_length, s.mean_performance_ratio,
                  s.mean_side_effect, s.stderr_length, s.stderr_performance, s.stderr_side_effect);
    out << line;
    if (!out) throw IoError("cannot write " + a.csv);
  }
  return 0;
}

// ------------------------------------------------------------ inspect

struct InspectArgs {
  std::string checkpoint;
  std::string policy;
  std::string actions;
  std::string level;
  std::string task = "prune";
  int episode_cap = 100;
  int max_steps = -1;
  std::string out;
};

int cmd_inspect(const InspectArgs& a) {
  const int sources = !a.checkpoint.empty() + !a.policy.empty() + !a.actions.empty();
  if (sources != 1) throw UsageError("give exactly one of --checkpoint, --policy or --actions");
  const Board level = parse_level(read_file(a.level));
  BoardPolicy policy;
  if (!a.checkpoint.empty()) {
    const PolicyParams params = load_checkpoint(a.checkpoint);
    if (params.arch.width != level.width() || params.arch.height != level.height()) {
      throw UsageError("level size does not match the checkpoint's architecture");
    }
    policy = greedy_policy(params);
  } else if (!a.policy.empty()) {
    if (a.policy != "noop") throw UsageError("unknown built-in policy '" + a.policy + "' (only noop)");
    policy = noop_policy();
  } else {
    std::vector<Action> seq;
    std::stringstream ss(a.actions);
    std::string tok;
    while (std::getline(ss, tok, ',')) seq.push_back(parse_action(tok));
    policy = scripted_policy(std::move(seq));
  }
  TranscriptOptions opt;
  opt.task = parse_task(a.task);
  opt.episode_cap = a.episode_cap;
  opt.max_steps = a.max_steps;
  if (a.out.empty()) {
    write_transcript(std::cout, level, policy, opt);
  } else {
    std::ofstream out(a.out);
    write_transcript(out, level, policy, opt);
    if (!out) throw IoError("cannot write " + a.out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safety-regularized agents on Life-like gridworlds"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate-levels", "Write a bank of generated levels plus manifest");
  g->add_option("--task", gen.task, "prune or append")->check(CLI::IsMember({"prune", "append"}));
  g->add_flag("--still", gen.still, "Still-life levels (default)");
  g->add_flag("--dynamic", gen.dynamic, "Levels with oscillators and spawners");
  g->add_option("--n", gen.n, "Number of levels")->required();
  g->add_option("--base-seed", gen.base_seed, "Seed of the first level");
  g->add_option("--width", gen.width);
  g->add_option("--height", gen.height);
  g->add_option("--pattern-cells", gen.pattern_cells, "Minimum living cells placed in patterns");
  g->add_option("--goal-markers", gen.goal_markers, "Goal markers (append)");
  g->add_option("--spawners", gen.spawners, "Spawners (dynamic)");
  g->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train an agent; writes config snapshot, metrics.csv and checkpoints");
  t->add_option("--config", tr.config, "INI config file");
  t->add_option("--set", tr.sets, "Override, e.g. --set sarl.beta=0.005");
  t->add_option("--run-dir", tr.run_dir, "Run directory")->required();
  t->add_flag("--resume", tr.resume, "Continue the run in --run-dir from its last saved state");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a level bank");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--bank", ev.bank, "Directory with manifest.tsv")->required();
  e->add_option("--task", ev.task)->check(CLI::IsMember({"prune", "append"}));
  e->add_option("--episode-cap", ev.episode_cap)->check(CLI::PositiveNumber);
  e->add_option("--t-stab", ev.t_stab)->check(CLI::PositiveNumber);
  e->add_flag("--sampled", ev.sampled, "Sample actions instead of argmax");
  e->add_option("--seed", ev.seed, "Sampling seed");
  e->add_option("--csv", ev.csv, "Append the score to this CSV");

  InspectArgs in;
  auto* i = app.add_subcommand("inspect", "Print an episode transcript");
  i->add_option("--checkpoint", in.checkpoint);
  i->add_option("--policy", in.policy, "Built-in policy: noop");
  i->add_option("--actions", in.actions, "Comma-separated action script");
  i->add_option("--level", in.level, "Level file")->required();
  i->add_option("--task", in.task)->check(CLI::IsMember({"prune", "append"}));
  i->add_option("--episode-cap", in.episode_cap)->check(CLI::PositiveNumber);
  i->add_option("--max-steps", in.max_steps);
  i->add_option("--out", in.out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*i) return cmd_inspect(in);
  } catch (const UsageError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitConfig;
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return kExitConfig;
  } catch (const IoError& err) {
    std::fprintf(stderr, "io error: %s\n", err.what());
    return kExitIo;
  } catch (const fs::filesystem_error& err) {
    std::fprintf(stderr, "io error: %s\n", err.what());
    return kExitIo;
  } catch (const CheckpointError& err) {
    std::fprintf(stderr, "checkpoint error: %s\n", err.what());
    return kExitIo;
  } catch (const LevelParseError& err) {
    std::fprintf(stderr, "level error: %s\n", err.what());
    return kExitIo;
  } catch (const NonFiniteLoss& err) {
    std::fprintf(stderr, "numerical abort: %s\n", err.what());
    return kExitNumerical;
  } catch (const GenerationFailed& err) {
    std::fprintf(stderr, "generation failed: %s\n", err.what());
    return kExitConfig;
  } catch (const std::invalid_argument& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitConfig;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "io error: %s\n", err.what());
    return kExitIo;
  }
  return 0;
}
