#include "sarl/train.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sarl/rng.hpp"
#include "sarl/sarl.hpp"

namespace sarl {

namespace {

using json = nlohmann::json;

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string rng_text(const std::mt19937_64& e) {
  std::ostringstream o;
  o << e;
  return o.str();
}

void rng_restore(std::mt19937_64& e, const std::string& s) {
  std::istringstream in(s);
  in >> e;
  if (!in) throw std::runtime_error("corrupt rng state in resume file");
}

json board_json(const Board& b) {
  json j;
  j["cells"] = format_level(without_agent(b));
  if (b.agent()) j["agent"] = {b.agent()->row, b.agent()->col};
  j["seed"] = b.rng().seed;
  j["tick"] = b.rng().tick;
  return j;
}

Board board_from_json(const json& j) {
  Board b = parse_level(j.at("cells").get<std::string>(), j.at("seed").get<std::uint64_t>());
  b.rng().tick = j.at("tick").get<std::uint64_t>();
  if (j.contains("agent")) b.set_agent(Pos{j["agent"][0].get<int>(), j["agent"][1].get<int>()});
  return b;
}

json pool_json(const EnvPool& pool) {
  const EnvPool::State s = pool.state();
  json j;
  j["level_rng"] = s.level_rng;
  j["level_seeds"] = s.level_seeds;
  j["finished"] = s.finished;
  j["finished_reward"] = s.finished_reward;
  for (const Episode& e : s.episodes) {
    j["episodes"].push_back({{"level", board_json(e.initial())},
                             {"board", board_json(e.board())},
                             {"counterfactual", board_json(e.counterfactual())},
                             {"t", e.t()},
                             {"done", e.done()},
                             {"impact", e.impact()},
                             {"material", e.material_reward()},
                             {"total", e.total_reward()}});
  }
  return j;
}

void pool_restore(EnvPool& pool, const json& j) {
  EnvPool::State s;
  s.level_rng = j.at("level_rng").get<std::string>();
  s.level_seeds = j.at("level_seeds").get<std::vector<std::uint64_t>>();
  s.finished = j.at("finished").get<std::int64_t>();
  s.finished_reward = j.at("finished_reward").get<double>();
  const auto& o = pool.options();
  for (const auto& e : j.at("episodes")) {
    s.episodes.push_back(Episode::restore(board_from_json(e.at("level")), board_from_json(e.at("board")),
                                          board_from_json(e.at("counterfactual")), o.shape.task, o.episode_cap,
                                          o.seeding, e.at("t").get<int>(), e.at("done").get<bool>(),
                                          e.at("impact").get<int>(), e.at("material").get<double>(),
                                          e.at("total").get<double>(), o.rewards));
  }
  pool.restore(s);
}

json score_json(const EvalScore& s) {
  return {{"mean_length", s.mean_episode_length}, {"mean_perf", s.mean_performance_ratio},
          {"mean_side", s.mean_side_effect},      {"se_length", s.stderr_length},
          {"se_perf", s.stderr_performance},      {"se_side", s.stderr_side_effect},
          {"env_steps", s.env_steps_at_eval}};
}

EvalScore score_from_json(const json& j) {
  EvalScore s;
  s.mean_episode_length = j.at("mean_length");
  s.mean_performance_ratio = j.at("mean_perf");
  s.mean_side_effect = j.at("mean_side");
  s.stderr_length = j.at("se_length");
  s.stderr_performance = j.at("se_perf");
  s.stderr_side_effect = j.at("se_side");
  s.env_steps_at_eval = j.at("env_steps");
  return s;
}

void save_adam(const std::filesystem::path& dir, const std::string& name, const Adam& adam, const Architecture& arch) {
  PolicyParams m{arch, adam.first_moment(), 0};
  PolicyParams v{arch, adam.second_moment(), 0};
  save_checkpoint(dir / (name + "_adam_m.ckpt"), m);
  save_checkpoint(dir / (name + "_adam_v.ckpt"), v);
}

void load_adam(const std::filesystem::path& dir, const std::string& name, Adam& adam, std::uint64_t t) {
  adam.restore(load_checkpoint(dir / (name + "_adam_m.ckpt")).flat, load_checkpoint(dir / (name + "_adam_v.ckpt")).flat,
               t);
}

EnvPool::Options pool_options(const RunConfig& cfg) {
  EnvPool::Options o;
  o.shape = cfg.level;
  o.n_envs = cfg.n_envs;
  o.episode_cap = cfg.episode_cap;
  o.seed_begin = cfg.train_seed_begin;
  o.seed_end = cfg.train_seed_end;
  o.seeding = cfg.seeding;
  return o;
}

// Epochs of minibatch updates on one advantage-filled batch.
template <typename StepFn>
void run_epochs(const TransitionBatch& batch, const PpoConfig& ppo, std::mt19937_64& rng, StepFn&& step) {
  for (int epoch = 0; epoch < ppo.epochs; ++epoch) {
    for (const auto& mb : minibatches(batch.size(), ppo.batch_size, rng)) step(mb);
  }
}

}  // namespace

std::string metrics_header() {
  return "env_steps,wall_time,algorithm,task,variant,mean_length,mean_perf_ratio,mean_side_effect,"
         "stderr_length,stderr_perf_ratio,stderr_side_effect,champion_length,champion_performance,"
         "champion_side_effect,reg_weight";
}

std::string format_metrics_row(const MetricsRow& r) {
  std::ostringstream o;
  o << r.env_steps << ',' << (r.wall_time ? num(*r.wall_time) : "") << ',' << r.algorithm << ',' << r.task << ','
    << r.variant << ',' << num(r.mean_length) << ',' << num(r.mean_perf_ratio) << ',' << num(r.mean_side_effect)
    << ',' << num(r.stderr_length) << ',' << num(r.stderr_perf_ratio) << ',' << num(r.stderr_side_effect) << ','
    << r.champion[0] << ',' << r.champion[1] << ',' << r.champion[2] << ',' << num(r.reg_weight);
  return o.str();
}

std::filesystem::path champion_path(const std::filesystem::path& run_dir, ChampionMetric m) {
  return run_dir / (std::string("champion_") + metric_name(m) + ".ckpt");
}

std::vector<Board> test_bank_for(const RunConfig& cfg) {
  if (!cfg.test_dir.empty()) return load_bank(cfg.test_dir);
  return build_test_bank(cfg.level, cfg.test_n, cfg.test_base_seed);
}

Trainer::Trainer(RunConfig cfg, std::vector<Board> test_bank)
    : cfg_(std::move(cfg)), bank_(std::move(test_bank)), schedule_(cfg_.eval_every) {
  cfg_.validate();
  if (bank_.empty()) throw ConfigError("test bank is empty");
  const Architecture arch = cfg_.architecture();
  for (const Board& b : bank_) {
    if (b.width() != arch.width || b.height() != arch.height) {
      throw ConfigError("test bank level size does not match the configured level size");
    }
  }
  const std::uint64_t seed = cfg_.master_seed;

  eval_opt_.episode_cap = cfg_.episode_cap;
  eval_opt_.task = cfg_.level.task;
  eval_opt_.t_stab = cfg_.t_stab;
  eval_opt_.seeding = cfg_.seeding;
  eval_opt_.greedy = cfg_.eval_greedy;
  eval_opt_.sample_seed = derive_seed(seed, SeedStream::Eval);

  theta_ = init_params(arch, derive_seed(seed, SeedStream::Init));
  adam_theta_ = Adam(theta_.flat.size(), cfg_.ppo.lr);
  task_envs_ = EnvPool(pool_options(cfg_), derive_seed(seed, SeedStream::LevelGen));
  rollout_rng_.seed(derive_seed(seed, SeedStream::Rollout));
  minibatch_rng_.seed(derive_seed(seed, SeedStream::Minibatch));

  if (cfg_.algorithm == Algorithm::SARL) {
    if (cfg_.sarl.zero_shot) {
      psi_ = load_checkpoint(*cfg_.sarl.safe_checkpoint_path);
      if (!(psi_->arch == arch)) {
        throw CheckpointError("safe checkpoint architecture does not match the task agent's");
      }
    } else {
      psi_ = init_params(arch, derive_seed(seed, SeedStream::SafeInit));
      adam_psi_ = Adam(psi_->flat.size(), cfg_.ppo.lr);
      safe_envs_.emplace(pool_options(cfg_), derive_seed(seed, SeedStream::SafeLevelGen));
      safe_rollout_rng_.seed(derive_seed(seed, SeedStream::SafeRollout));
      safe_minibatch_rng_.seed(derive_seed(seed, SeedStream::SafeMinibatch));
    }
  }
  for (std::size_t i = 0; i < kChampionMetrics.size(); ++i) champions_[i].metric = kChampionMetrics[i];
}

bool Trainer::has_safe_phase() const { return safe_envs_.has_value(); }

void Trainer::task_phase() {
  const double penalty = cfg_.algorithm == Algorithm::RewardPenalty ? cfg_.penalty_weight : 0.0;
  TransitionBatch batch =
      collect_rollout(theta_, task_envs_, cfg_.ppo.steps_per_iter, RewardChannel::Task, rollout_rng_, penalty);
  env_steps_ += static_cast<std::int64_t>(batch.size());
  compute_advantages(batch, cfg_.ppo.gamma, cfg_.ppo.gae_lambda);
  // psi is read as a fixed snapshot for the whole phase.
  const PolicyParams* psi = cfg_.algorithm == Algorithm::SARL ? &*psi_ : nullptr;
  stats_.sinkhorn_unconverged = 0;
  run_epochs(batch, cfg_.ppo, minibatch_rng_, [&](const std::vector<std::size_t>& mb) {
    ObjectiveResult r = sarl_objective_gradient(theta_, psi, batch, mb, cfg_.ppo, cfg_.sarl);
    stats_.task_loss = r.ppo;
    stats_.distance = r.dist.value;
    stats_.sinkhorn_unconverged += r.dist.unconverged;
    adam_theta_.step(theta_, r.grad);
    ++updates_;
    if (on_theta_update) on_theta_update(theta_);
  });
}

void Trainer::safe_phase() {
  TransitionBatch batch =
      collect_rollout(*psi_, *safe_envs_, cfg_.ppo.steps_per_iter, RewardChannel::Safety, safe_rollout_rng_);
  compute_advantages(batch, cfg_.ppo.gamma, cfg_.ppo.gae_lambda);
  run_epochs(batch, cfg_.ppo, safe_minibatch_rng_, [&](const std::vector<std::size_t>& mb) {
    PpoLossResult r = safe_objective(*psi_, batch, mb);
    stats_.safe_loss = r.breakdown;
    adam_psi_.step(*psi_, r.grad);
  });
}

PpoLossResult Trainer::safe_objective(const PolicyParams& psi, const TransitionBatch& batch,
                                      std::span<const std::size_t> indices) const {
  return ppo_loss(psi, batch, indices, cfg_.ppo);
}

void Trainer::iterate() {
  task_phase();
  if (has_safe_phase()) safe_phase();
  ++iterations_;
}

MetricsRow Trainer::evaluate_now() {
  EvalScore score = evaluate(theta_, bank_, eval_opt_);
  score.env_steps_at_eval = env_steps_;
  MetricsRow row;
  row.env_steps = env_steps_;
  if (cfg_.record_wall_time) {
    row.wall_time = wall_offset_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  row.algorithm = algorithm_name(cfg_.algorithm);
  row.task = task_name(cfg_.level.task);
  row.variant = cfg_.level.dynamic ? "dynamic" : "still";
  row.mean_length = score.mean_episode_length;
  row.mean_perf_ratio = score.mean_performance_ratio;
  row.mean_side_effect = score.mean_side_effect;
  row.stderr_length = score.stderr_length;
  row.stderr_perf_ratio = score.stderr_performance;
  row.stderr_side_effect = score.stderr_side_effect;
  row.reg_weight = cfg_.regularization_weight();
  for (std::size_t i = 0; i < champions_.size(); ++i) {
    bool replaced = false;
    champions_[i] = champion_update(champions_[i], score, theta_, &replaced);
    row.champion[i] = replaced;
  }
  rows_.push_back(row);
  return row;
}

void Trainer::write_eval_outputs(const std::filesystem::path& dir, const MetricsRow& row) const {
  const auto metrics = dir / kMetricsName;
  const bool fresh = !std::filesystem::exists(metrics);
  std::ofstream out(metrics, std::ios::app);
  if (fresh) out << metrics_header() << '\n';
  out << format_metrics_row(row) << '\n';
  if (!out) throw std::filesystem::filesystem_error("cannot write metrics", metrics, std::make_error_code(std::errc::io_error));
  for (std::size_t i = 0; i < champions_.size(); ++i) {
    if (row.champion[i]) save_checkpoint(champion_path(dir, champions_[i].metric), champions_[i].best_params);
  }
}

void Trainer::run(const std::optional<std::filesystem::path>& run_dir) {
  start_ = std::chrono::steady_clock::now();
  if (run_dir) std::filesystem::create_directories(*run_dir);
  while (env_steps_ < cfg_.total_env_steps) {
    iterate();
    if (schedule_.advance(env_steps_) > 0) {
      const MetricsRow row = evaluate_now();
      if (run_dir) {
        write_eval_outputs(*run_dir, row);
        save_state(*run_dir / kResumeDirName);
      }
    }
  }
  if (run_dir) {
    save_checkpoint(*run_dir / "final_task.ckpt", theta_);
    if (psi_) save_checkpoint(*run_dir / "final_safe.ckpt", *psi_);
  }
}

void Trainer::save_state(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json j;
  j["env_steps"] = env_steps_;
  j["updates"] = updates_;
  j["iterations"] = iterations_;
  j["next_eval"] = schedule_.next_boundary();
  j["rows"] = rows_.size();
  j["wall_time"] = wall_offset_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  j["rollout_rng"] = rng_text(rollout_rng_);
  j["minibatch_rng"] = rng_text(minibatch_rng_);
  j["task_envs"] = pool_json(task_envs_);
  j["adam_theta_t"] = adam_theta_.steps();
  save_checkpoint(dir / "theta.ckpt", theta_);
  save_adam(dir, "theta", adam_theta_, theta_.arch);
  if (psi_) save_checkpoint(dir / "psi.ckpt", *psi_);
  if (safe_envs_) {
    j["safe_rollout_rng"] = rng_text(safe_rollout_rng_);
    j["safe_minibatch_rng"] = rng_text(safe_minibatch_rng_);
    j["safe_envs"] = pool_json(*safe_envs_);
    j["adam_psi_t"] = adam_psi_.steps();
    save_adam(dir, "psi", adam_psi_, psi_->arch);
  }
  for (const auto& c : champions_) {
    json cj;
    if (c.best_score) {
      cj["best"] = *c.best_score;
      cj["step_found"] = c.step_found;
      cj["eval"] = score_json(*c.best_eval);
      save_checkpoint(dir / (std::string("champion_") + metric_name(c.metric) + ".ckpt"), c.best_params);
    }
    j["champions"][metric_name(c.metric)] = cj;
  }
  j["metrics"] = json::array();
  for (const auto& r : rows_) {
    json rj = {{"env_steps", r.env_steps},
               {"algorithm", r.algorithm},
               {"task", r.task},
               {"variant", r.variant},
               {"mean", {r.mean_length, r.mean_perf_ratio, r.mean_side_effect}},
               {"stderr", {r.stderr_length, r.stderr_perf_ratio, r.stderr_side_effect}},
               {"champion", r.champion},
               {"reg_weight", r.reg_weight}};
    if (r.wall_time) rj["wall_time"] = *r.wall_time;
    j["metrics"].push_back(rj);
  }
  const auto tmp = dir / "state.json.tmp";
  {
    std::ofstream out(tmp);
    out << j.dump(1) << '\n';
    if (!out) throw std::filesystem::filesystem_error("cannot write resume state", tmp, std::make_error_code(std::errc::io_error));
  }
  std::filesystem::rename(tmp, dir / "state.json");
}

void Trainer::load_state(const std::filesystem::path& dir) {
  std::ifstream in(dir / "state.json");
  if (!in) throw CheckpointError("no resume state in " + dir.string());
  json j;
  try {
    in >> j;
    env_steps_ = j.at("env_steps");
    updates_ = j.at("updates");
    iterations_ = j.at("iterations");
    schedule_.restore(j.at("next_eval").get<std::int64_t>());
    wall_offset_ = j.at("wall_time");
    rng_restore(rollout_rng_, j.at("rollout_rng"));
    rng_restore(minibatch_rng_, j.at("minibatch_rng"));
    pool_restore(task_envs_, j.at("task_envs"));
    theta_ = load_checkpoint(dir / "theta.ckpt");
    load_adam(dir, "theta", adam_theta_, j.at("adam_theta_t").get<std::uint64_t>());
    if (psi_) psi_ = load_checkpoint(dir / "psi.ckpt");
    if (safe_envs_) {
      rng_restore(safe_rollout_rng_, j.at("safe_rollout_rng"));
      rng_restore(safe_minibatch_rng_, j.at("safe_minibatch_rng"));
      pool_restore(*safe_envs_, j.at("safe_envs"));
      load_adam(dir, "psi", adam_psi_, j.at("adam_psi_t").get<std::uint64_t>());
    }
    for (auto& c : champions_) {
      const json& cj = j.at("champions").at(metric_name(c.metric));
      if (cj.contains("best")) {
        c.best_score = cj.at("best").get<double>();
        c.step_found = cj.at("step_found");
        c.best_eval = score_from_json(cj.at("eval"));
        c.best_params = load_checkpoint(dir / (std::string("champion_") + metric_name(c.metric) + ".ckpt"));
      }
    }
    rows_.clear();
    for (const auto& rj : j.at("metrics")) {
      MetricsRow r;
      r.env_steps = rj.at("env_steps");
      r.algorithm = rj.at("algorithm");
      r.task = rj.at("task");
      r.variant = rj.at("variant");
      const auto mean = rj.at("mean").get<std::array<double, 3>>();
      const auto se = rj.at("stderr").get<std::array<double, 3>>();
      r.mean_length = mean[0];
      r.mean_perf_ratio = mean[1];
      r.mean_side_effect = mean[2];
      r.stderr_length = se[0];
      r.stderr_perf_ratio = se[1];
      r.stderr_side_effect = se[2];
      r.champion = rj.at("champion").get<std::array<bool, 3>>();
      r.reg_weight = rj.at("reg_weight");
      if (rj.contains("wall_time")) r.wall_time = rj.at("wall_time").get<double>();
      rows_.push_back(r);
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt resume state: ") + e.what());
  }
}

std::string Trainer::diagnostic() const {
  std::ostringstream o;
  o << "env_steps " << env_steps_ << "\nupdates " << updates_ << "\niterations " << iterations_ << '\n';
  o << "theta_hash " << param_hash(theta_) << '\n';
  if (psi_) o << "psi_hash " << param_hash(*psi_) << '\n';
  const auto& l = stats_.task_loss;
  o << "last_task_loss total=" << num(l.total) << " clip=" << num(l.clip_term) << " value=" << num(l.value_term)
    << " entropy=" << num(l.entropy_term) << " distance=" << num(stats_.distance) << '\n';
  std::size_t bad = 0;
  for (double v : theta_.flat) bad += !std::isfinite(v);
  o << "theta_nonfinite " << bad << '\n';
  return o.str();
}

}  // namespace sarl
