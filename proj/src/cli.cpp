#include "turnrl/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "turnrl/checks.hpp"
#include "turnrl/config.hpp"
#include "turnrl/env.hpp"
#include "turnrl/rollout.hpp"
#include "turnrl/trainer.hpp"

#ifndef TURNRL_VERSION
#define TURNRL_VERSION "0.0.0"
#endif
#ifndef TURNRL_GIT_REV
#define TURNRL_GIT_REV "unknown"
#endif

namespace turnrl::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Raised for problems the user must fix before anything runs.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string version_tag() { return std::string(TURNRL_VERSION) + "+" + TURNRL_GIT_REV; }

struct CommonOptions {
  std::vector<std::string> configs;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

config::Document load_document(const std::optional<std::string>& path, const CommonOptions& o) {
  config::Document doc;
  if (path) {
    try {
      doc = config::load(*path);
    } catch (const trainer::ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  for (const auto& s : o.overrides) config::apply_override(doc, s);
  if (o.seed) doc["trainer.seed"] = std::to_string(*o.seed);
  return doc;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

// Self-describing run directory: manifest plus INI snapshot.
class RunDirectory {
 public:
  RunDirectory(fs::path dir, const trainer::TrainConfig& config, std::string command, bool csv)
      : dir_(std::move(dir)) {
    make_dir(dir_);
    manifest_["tool"] = "turnrl";
    manifest_["version"] = version_tag();
    manifest_["command"] = std::move(command);
    ordered_json cfg = ordered_json::object();
    for (const auto& [k, v] : config::to_document(config)) cfg[k] = v;
    manifest_["config"] = cfg;
    ordered_json paths;
    paths["config"] = "config.ini";
    paths["metrics"] = "metrics.jsonl";
    paths["metrics_csv"] = csv ? ordered_json("metrics.csv") : ordered_json(nullptr);
    paths["actor_checkpoint"] = "actor.ckpt";
    paths["critic_checkpoint"] =
        config.algorithm == trainer::Algorithm::grpo ? ordered_json(nullptr) : ordered_json("critic.ckpt");
    manifest_["paths"] = paths;
    manifest_["started_at"] = timestamp();
    manifest_["finished_at"] = nullptr;
    manifest_["status"] = "running";
    write_file(dir_ / "config.ini", config::to_ini(config));
    flush();
    metrics_.open(dir_ / "metrics.jsonl", std::ios::binary);
    if (!metrics_) throw std::runtime_error("cannot write " + (dir_ / "metrics.jsonl").string());
    if (csv) {
      csv_.open(dir_ / "metrics.csv", std::ios::binary);
      csv_ << trainer::metrics_csv_header() << '\n';
    }
  }

  void record(const trainer::IterationMetrics& m) {
    metrics_ << trainer::to_json_line(m) << '\n';
    metrics_.flush();
    if (csv_.is_open()) csv_ << trainer::to_csv_row(m) << '\n';
  }

  void finish(const trainer::TrainResult& result) {
    result.actor.save((dir_ / "actor.ckpt").string());
    if (result.critic) result.critic->save((dir_ / "critic.ckpt").string());
    metrics_.close();
    if (csv_.is_open()) csv_.close();
    manifest_["finished_at"] = timestamp();
    manifest_["status"] = result.halted ? "halted" : "completed";
    if (result.halted) manifest_["halt_reason"] = result.halt_reason;
    flush();
  }

  const fs::path& path() const { return dir_; }

 private:
  void flush() { write_file(dir_ / "manifest.json", manifest_.dump(2) + "\n"); }

  fs::path dir_;
  ordered_json manifest_;
  std::ofstream metrics_;
  std::ofstream csv_;
};

std::string stem_label(const std::string& path, std::map<std::string, int>& seen) {
  std::string label = fs::path(path).stem().string();
  if (label == "manifest") label = fs::path(path).parent_path().filename().string();
  if (label.empty()) label = "run";
  const int n = seen[label]++;
  return n ? label + "-" + std::to_string(n + 1) : label;
}

int cmd_train(const CommonOptions& o, bool csv, std::ostream& out, std::ostream& err) {
  const auto path = o.configs.empty() ? std::nullopt : std::optional(o.configs.front());
  const trainer::TrainConfig c = config::resolve(load_document(path, o));
  const fs::path dir = o.out_dir.empty() ? fs::path("runs") / (std::string(trainer::to_string(c.algorithm)) +
                                                              "-seed" + std::to_string(c.seed))
                                         : fs::path(o.out_dir);
  RunDirectory run(dir, c, "train", csv);
  const auto result = trainer::train(c, [&](const trainer::IterationMetrics& m) { run.record(m); });
  run.finish(result);
  if (result.halted) {
    err << "training halted: " << result.halt_reason << "\n"
        << "last finite parameters saved in " << dir.string() << "\n";
    return kFailure;
  }
  const auto& last = result.metrics.back();
  out << "run " << dir.string() << " iterations=" << result.metrics.size();
  if (last.mean_eval_reward) out << " final_eval_reward=" << *last.mean_eval_reward;
  if (last.solve_rate) out << " final_solve_rate=" << *last.solve_rate;
  out << "\n";
  return kOk;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint, bool random_policy,
             std::optional<std::size_t> episodes, std::optional<double> temperature,
             std::ostream& out) {
  const auto path = o.configs.empty() ? std::nullopt : std::optional(o.configs.front());
  const trainer::TrainConfig c = config::resolve(load_document(path, o));
  if (checkpoint.empty() && !random_policy)
    throw UsageError("eval needs --checkpoint PATH or --random");
  const model::PolicyModel policy = random_policy
                                        ? model::PolicyModel::zeros(trainer::actor_architecture(c))
                                        : model::PolicyModel::from_checkpoint(checkpoint);
  const double temp = temperature.value_or(random_policy ? 1.0 : 0.0);
  const std::size_t n = episodes.value_or(c.eval_episodes);
  const auto stats = rollout::evaluate(policy, c.env, n, trainer::eval_seed(c), temp,
                                       c.max_response_tokens, c.max_turns);
  ordered_json j;
  j["policy"] = random_policy ? "random" : checkpoint;
  j["temperature"] = temp;
  j["episodes"] = stats.episodes;
  j["mean_reward"] = stats.mean_reward;
  j["reward_std"] = stats.reward_std;
  j["standard_error"] = stats.reward_std / std::sqrt(static_cast<double>(stats.episodes));
  j["solve_rate"] = stats.solve_rate;
  out << j.dump() << "\n";
  return kOk;
}

int cmd_compare(const CommonOptions& o, std::ostream& out, std::ostream& err) {
  if (o.configs.empty()) throw UsageError("compare needs at least one config");
  std::vector<trainer::CompareRun> runs;
  std::map<std::string, int> seen;
  for (const auto& path : o.configs)
    runs.push_back({stem_label(path, seen), config::resolve(load_document(path, o))});
  try {
    trainer::check_comparable(runs);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path dir = o.out_dir.empty() ? fs::path("runs") / "compare" : fs::path(o.out_dir);
  make_dir(dir);
  std::vector<std::unique_ptr<RunDirectory>> dirs;
  for (const auto& r : runs)
    dirs.push_back(std::make_unique<RunDirectory>(dir / r.label, r.config, "compare", false));
  const auto result = trainer::compare(
      runs, [&](std::size_t i, const trainer::IterationMetrics& m) { dirs[i]->record(m); });
  bool halted = false;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    dirs[i]->finish(result.runs[i]);
    if (result.runs[i].halted) {
      halted = true;
      err << "run " << runs[i].label << " halted: " << result.runs[i].halt_reason << "\n";
    }
  }
  write_file(dir / "compare.csv", trainer::compare_table_csv(result));
  const std::string summary = trainer::compare_summary_csv(result);
  write_file(dir / "summary.csv", summary);
  out << summary;
  return halted ? kFailure : kOk;
}

int cmd_check(std::uint64_t seed, const std::string& trajectories, const std::string& checkpoint,
              std::ostream& out) {
  if (!checkpoint.empty() && trajectories.empty())
    throw UsageError("--checkpoint needs --trajectories");
  auto results = checks::run_all(seed);
  if (!trajectories.empty()) {
    std::optional<model::PolicyModel> policy;
    if (!checkpoint.empty()) policy.emplace(model::PolicyModel::from_checkpoint(checkpoint));
    results.push_back(checks::trajectory_suite(trajectories, policy ? &*policy : nullptr));
  }
  bool ok = true;
  for (const auto& r : results) {
    out << checks::format(r) << "\n";
    ok = ok && r.passed;
  }
  return ok ? kOk : kFailure;
}

int cmd_dump(const CommonOptions& o, long long n, const std::string& checkpoint, bool greedy,
             std::ostream& out) {
  if (n < 1) throw UsageError("dump needs --n >= 1");
  const auto path = o.configs.empty() ? std::nullopt : std::optional(o.configs.front());
  const trainer::TrainConfig c = config::resolve(load_document(path, o));
  const model::PolicyModel policy =
      checkpoint.empty() ? trainer::initial_actor(c) : model::PolicyModel::from_checkpoint(checkpoint);
  rollout::CollectOptions co = trainer::collect_options(c, 0);
  co.batch_size = static_cast<std::size_t>(n);
  co.group_size = 1;
  if (greedy) co.temperature = 0.0;
  const auto batch = rollout::collect(policy, nullptr, co);

  const fs::path dir = o.out_dir.empty() ? fs::path("dump") : fs::path(o.out_dir);
  make_dir(dir);
  {
    std::ofstream f(dir / "trajectories.jsonl", std::ios::binary);
    rollout::write_dump(f, batch.trajectories);
    if (!f) throw std::runtime_error("cannot write trajectories.jsonl");
  }
  std::string text, instances;
  for (const auto& t : batch.trajectories) {
    text += rollout::render_text(t) + "\n";
    instances += env::dump_instance(env::reset(c.env, t.env_seed).first) + "\n";
  }
  write_file(dir / "trajectories.txt", text);
  write_file(dir / "instances.txt", instances);
  out << "wrote " << batch.trajectories.size() << " trajectories to " << dir.string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-turn RL harness: token-PPO, turn-PPO and GRPO on small text environments",
               "turnrl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_tag());

  CommonOptions common;
  auto add_common = [&](CLI::App* sub, bool many_configs) {
    if (many_configs)
      sub->add_option("configs,--config", common.configs, "config files or run manifests")
          ->check(CLI::ExistingFile);
    else
      sub->add_option("--config", common.configs, "config file or run manifest")
          ->expected(1);
    sub->add_option("--set", common.overrides, "override, key=value (repeatable)");
    sub->add_option("--seed", common.seed, "seed override");
  };

  auto* train = app.add_subcommand("train", "train one configuration");
  add_common(train, false);
  train->add_option("--out", common.out_dir, "run directory");
  bool csv = false;
  train->add_flag("--csv", csv, "also write metrics.csv");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or the random policy");
  add_common(eval, false);
  std::string checkpoint;
  bool random_policy = false;
  std::optional<std::size_t> episodes;
  std::optional<double> temperature;
  eval->add_option("--checkpoint", checkpoint, "actor checkpoint");
  eval->add_flag("--random", random_policy, "uniform policy (zero parameters)");
  eval->add_option("--episodes", episodes, "number of evaluation episodes");
  eval->add_option("--temperature", temperature, "decoding temperature (0 = greedy)");

  auto* compare = app.add_subcommand("compare", "train several configs on shared seeds");
  add_common(compare, true);
  compare->add_option("--out", common.out_dir, "output directory");

  auto* check = app.add_subcommand("check", "run the oracle suites");
  std::uint64_t check_seed = 0;
  std::string trajectories;
  check->add_option("--seed", check_seed, "seed for the random instances");
  check->add_option("--trajectories", trajectories, "trajectory dump to validate");
  check->add_option("--checkpoint", checkpoint, "re-score the dump under this actor");

  auto* dump = app.add_subcommand("dump", "write sample trajectories and instances");
  add_common(dump, false);
  dump->add_option("--out", common.out_dir, "output directory");
  long long n = 0;
  dump->add_option("--n", n, "number of trajectories")->required();
  dump->add_option("--checkpoint", checkpoint, "actor checkpoint (default: initial parameters)");
  bool greedy = false;
  dump->add_flag("--greedy", greedy, "greedy decoding");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(common, csv, out, err);
    if (*eval) return cmd_eval(common, checkpoint, random_policy, episodes, temperature, out);
    if (*compare) return cmd_compare(common, out, err);
    if (*check) return cmd_check(check_seed, trajectories, checkpoint, out);
    if (*dump) return cmd_dump(common, n, checkpoint, greedy, out);
  } catch (const trainer::ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace turnrl::cli
