#include "sarl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace sarl {

namespace pt = boost::property_tree;

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::PlainPPO: return "ppo";
    case Algorithm::RewardPenalty: return "penalty";
    case Algorithm::SARL: return "sarl";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "ppo" || s == "plain") return Algorithm::PlainPPO;
  if (s == "penalty" || s == "reward-penalty") return Algorithm::RewardPenalty;
  if (s == "sarl") return Algorithm::SARL;
  throw ConfigError("unknown algorithm '" + s + "' (expected ppo, penalty or sarl)");
}

Architecture RunConfig::architecture() const {
  Architecture a;
  a.height = level.height;
  a.width = level.width;
  a.hidden = hidden;
  a.egocentric = egocentric;
  return a;
}

double RunConfig::regularization_weight() const {
  switch (algorithm) {
    case Algorithm::SARL: return sarl.beta;
    case Algorithm::RewardPenalty: return penalty_weight;
    default: return 0.0;
  }
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (total_env_steps < 1) fail("run.total_env_steps must be positive");
  if (eval_every < 1) fail("run.eval_every must be positive");
  if (n_envs < 1) fail("run.n_envs must be positive");
  if (episode_cap < 1) fail("run.episode_cap must be positive");
  if (train_seed_end <= train_seed_begin) fail("level.train_seed_end must exceed level.train_seed_begin");
  if (test_n < 1) fail("test_bank.n must be positive");
  if (t_stab < 1) fail("safety.t_stab must be positive");
  if (hidden.empty()) fail("network.hidden needs at least one layer");
  for (int h : hidden) {
    if (h < 1) fail("network.hidden sizes must be positive");
  }
  if (algorithm == Algorithm::RewardPenalty && !(penalty_weight >= 0.0 && std::isfinite(penalty_weight))) {
    fail("penalty.weight must be finite and >= 0");
  }
  try {
    ppo.validate();
    if (algorithm == Algorithm::SARL) sarl.validate();
    if (level.width < 6 || level.height < 6) fail("level size must be at least 6x6");
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

// Settings the algorithm ignores are not part of the snapshot, so they do not
// take part in equality either.
bool RunConfig::operator==(const RunConfig& o) const { return format_config(*this) == format_config(o); }

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  std::string s = text;
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t start = s.find_first_not_of(" \t");
  if (start == std::string::npos) throw ConfigError(key + ": empty value");
  s = s.substr(start);
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError(key + ": bad number '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_number<int>(key, tok));
  return out;
}

// Reads values out of the tree and remembers which keys were used.
class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key) {
    used_.insert(section + "." + key);
    auto s = tree_.get_child_optional(section);
    if (!s) return std::nullopt;
    auto v = s->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return *v;
  }
  template <typename T>
  void num(const std::string& section, const std::string& key, T& out) {
    if (auto v = raw(section, key)) out = parse_number<T>(section + "." + key, *v);
  }
  void flag(const std::string& section, const std::string& key, bool& out) {
    if (auto v = raw(section, key)) out = parse_bool(section + "." + key, *v);
  }
  bool has_section(const std::string& section) const { return tree_.get_child_optional(section).has_value(); }

  void check_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) throw ConfigError("setting '" + section + "' outside a section");
      for (const auto& [key, _] : body) {
        if (!used_.count(section + "." + key)) throw ConfigError("unknown setting " + section + "." + key);
      }
    }
  }

 private:
  const pt::ptree& tree_;
  std::set<std::string> used_;
};

}  // namespace

ParsedConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override must look like section.key=value: '" + o + "'");
    }
    const std::string section = o.substr(0, dot), key = o.substr(dot + 1, eq - dot - 1);
    if (!tree.get_child_optional(section)) tree.add_child(section, pt::ptree());
    tree.get_child(section).put(pt::ptree::path_type(key, '\0'), o.substr(eq + 1));
  }

  ParsedConfig out;
  RunConfig& c = out.config;
  Reader r(tree);

  if (auto v = r.raw("run", "algorithm")) c.algorithm = parse_algorithm(*v);
  r.num("run", "master_seed", c.master_seed);
  r.num("run", "total_env_steps", c.total_env_steps);
  r.num("run", "eval_every", c.eval_every);
  r.num("run", "n_envs", c.n_envs);
  r.num("run", "episode_cap", c.episode_cap);
  r.flag("run", "record_wall_time", c.record_wall_time);

  if (auto v = r.raw("level", "task")) {
    try {
      c.level.task = parse_task(*v);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("level.task: ") + e.what());
    }
  }
  if (auto v = r.raw("level", "variant")) {
    if (*v == "still") c.level.dynamic = false;
    else if (*v == "dynamic") c.level.dynamic = true;
    else throw ConfigError("level.variant must be still or dynamic");
  }
  r.num("level", "width", c.level.width);
  r.num("level", "height", c.level.height);
  r.num("level", "n_pattern_cells", c.level.n_pattern_cells);
  r.num("level", "n_goal_markers", c.level.n_goal_markers);
  r.num("level", "n_spawners", c.level.n_spawners);
  r.num("level", "train_seed_begin", c.train_seed_begin);
  r.num("level", "train_seed_end", c.train_seed_end);
  if (auto v = r.raw("level", "counterfactual")) {
    if (*v == "matched") c.seeding = CounterfactualSeeding::Matched;
    else if (*v == "independent") c.seeding = CounterfactualSeeding::Independent;
    else throw ConfigError("level.counterfactual must be matched or independent");
  }

  r.num("test_bank", "n", c.test_n);
  r.num("test_bank", "base_seed", c.test_base_seed);
  if (auto v = r.raw("test_bank", "dir")) c.test_dir = *v;

  r.num("ppo", "gamma", c.ppo.gamma);
  r.num("ppo", "gae_lambda", c.ppo.gae_lambda);
  r.num("ppo", "clip", c.ppo.clip);
  r.num("ppo", "value_clip", c.ppo.value_clip);
  r.num("ppo", "value_coef", c.ppo.value_coef);
  r.num("ppo", "entropy_coef", c.ppo.entropy_coef);
  r.num("ppo", "entropy_clip", c.ppo.entropy_clip);
  r.num("ppo", "lr", c.ppo.lr);
  r.num("ppo", "batch_size", c.ppo.batch_size);
  r.num("ppo", "epochs", c.ppo.epochs);
  r.num("ppo", "steps_per_iter", c.ppo.steps_per_iter);

  if (auto v = r.raw("network", "hidden")) c.hidden = parse_int_list("network.hidden", *v);
  r.flag("network", "egocentric", c.egocentric);

  r.flag("sarl", "zero_shot", c.sarl.zero_shot);
  c.sarl.beta = c.sarl.zero_shot ? kDefaultZeroShotBeta : kDefaultSarlBeta;
  r.num("sarl", "beta", c.sarl.beta);
  if (auto v = r.raw("sarl", "distance")) {
    try {
      c.sarl.distance = parse_distance(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("sarl.distance: ") + e.what());
    }
  }
  r.num("sarl", "sinkhorn_epsilon", c.sarl.sinkhorn_epsilon);
  r.num("sarl", "sinkhorn_iters", c.sarl.sinkhorn_iters);
  if (auto v = r.raw("sarl", "cost_matrix")) {
    try {
      c.sarl.cost_matrix = parse_cost_matrix(*v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("sarl.cost_matrix: ") + e.what());
    }
  }
  if (auto v = r.raw("sarl", "safe_checkpoint")) {
    if (!v->empty()) c.sarl.safe_checkpoint_path = *v;
  }

  r.num("penalty", "weight", c.penalty_weight);
  r.num("safety", "t_stab", c.t_stab);
  r.flag("eval", "greedy", c.eval_greedy);

  r.check_unknown();

  if (c.algorithm != Algorithm::SARL && r.has_section("sarl")) {
    out.warnings.push_back(std::string("[sarl] is ignored for algorithm ") + algorithm_name(c.algorithm));
  }
  if (c.algorithm != Algorithm::RewardPenalty && r.has_section("penalty")) {
    out.warnings.push_back(std::string("[penalty] is ignored for algorithm ") + algorithm_name(c.algorithm));
  }
  c.validate();
  return out;
}

ParsedConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::filesystem::filesystem_error("cannot open config", path, std::make_error_code(std::errc::no_such_file_or_directory));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string format_config(const RunConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "[run]\n"
    << "algorithm = " << algorithm_name(c.algorithm) << "\n"
    << "master_seed = " << c.master_seed << "\n"
    << "total_env_steps = " << c.total_env_steps << "\n"
    << "eval_every = " << c.eval_every << "\n"
    << "n_envs = " << c.n_envs << "\n"
    << "episode_cap = " << c.episode_cap << "\n"
    << "record_wall_time = " << b(c.record_wall_time) << "\n\n";
  o << "[level]\n"
    << "task = " << task_name(c.level.task) << "\n"
    << "variant = " << (c.level.dynamic ? "dynamic" : "still") << "\n"
    << "width = " << c.level.width << "\n"
    << "height = " << c.level.height << "\n"
    << "n_pattern_cells = " << c.level.n_pattern_cells << "\n"
    << "n_goal_markers = " << c.level.n_goal_markers << "\n"
    << "n_spawners = " << c.level.n_spawners << "\n"
    << "train_seed_begin = " << c.train_seed_begin << "\n"
    << "train_seed_end = " << c.train_seed_end << "\n"
    << "counterfactual = " << (c.seeding == CounterfactualSeeding::Matched ? "matched" : "independent") << "\n\n";
  o << "[test_bank]\n"
    << "n = " << c.test_n << "\n"
    << "base_seed = " << c.test_base_seed << "\n"
    << "dir = " << c.test_dir << "\n\n";
  o << "[ppo]\n"
    << "gamma = " << fmt_double(c.ppo.gamma) << "\n"
    << "gae_lambda = " << fmt_double(c.ppo.gae_lambda) << "\n"
    << "clip = " << fmt_double(c.ppo.clip) << "\n"
    << "value_clip = " << fmt_double(c.ppo.value_clip) << "\n"
    << "value_coef = " << fmt_double(c.ppo.value_coef) << "\n"
    << "entropy_coef = " << fmt_double(c.ppo.entropy_coef) << "\n"
    << "entropy_clip = " << fmt_double(c.ppo.entropy_clip) << "\n"
    << "lr = " << fmt_double(c.ppo.lr) << "\n"
    << "batch_size = " << c.ppo.batch_size << "\n"
    << "epochs = " << c.ppo.epochs << "\n"
    << "steps_per_iter = " << c.ppo.steps_per_iter << "\n\n";
  o << "[network]\nhidden = ";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) o << (i ? "," : "") << c.hidden[i];
  o << "\negocentric = " << b(c.egocentric) << "\n\n";
  if (c.algorithm == Algorithm::SARL) {
    std::string cost;
    for (std::size_t i = 0; i < c.sarl.cost_matrix.values.size(); ++i) {
      cost += (i ? "," : "") + fmt_double(c.sarl.cost_matrix.values[i]);
    }
    o << "[sarl]\n"
      << "beta = " << fmt_double(c.sarl.beta) << "\n"
      << "distance = " << distance_name(c.sarl.distance) << "\n"
      << "sinkhorn_epsilon = " << fmt_double(c.sarl.sinkhorn_epsilon) << "\n"
      << "sinkhorn_iters = " << c.sarl.sinkhorn_iters << "\n"
      << "cost_matrix = " << cost << "\n"
      << "zero_shot = " << b(c.sarl.zero_shot) << "\n"
      << "safe_checkpoint = " << c.sarl.safe_checkpoint_path.value_or("") << "\n\n";
  }
  if (c.algorithm == Algorithm::RewardPenalty) o << "[penalty]\nweight = " << fmt_double(c.penalty_weight) << "\n\n";
  o << "[safety]\nt_stab = " << c.t_stab << "\n\n";
  o << "[eval]\ngreedy = " << b(c.eval_greedy) << "\n";
  return o.str();
}

}  // namespace sarl
