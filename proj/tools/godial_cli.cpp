// godial: command-line front end for the dialogue-policy experiments.
//
// Every option may also be given in a key = value config file (--config);
// flags on the command line override the file.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "godial/harness.hpp"

namespace fs = std::filesystem;
using namespace godial;

namespace {

/// Config-file reader that accepts `learning_rate` as well as `learning-rate`.
class KeyValueConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigTOML::from_config(input);
    for (auto& item : items) std::replace(item.name.begin(), item.name.end(), '_', '-');
    return items;
  }
};

struct Options {
  ExperimentConfig cfg;
  std::string schema;  // gen-kb input
  std::string kb_file;
  std::string train_goals_file;
  std::string test_goals_file;
  std::string out;
  std::string checkpoint;
  std::size_t n_goals = 120;
  std::uint64_t goal_seed = 1;
  bool transcripts = false;
};

void add_experiment_options(CLI::App& app, Options& o) {
  auto& c = o.cfg;
  auto& h = c.hyper;
  app.add_option("--source-domain", c.source_domain, "Source domain schema (JSON)");
  app.add_option("--target-domain", c.target_domain, "Target domain schema (JSON)");
  app.add_option("--kb-size", c.kb_size, "Records per generated knowledge base")->capture_default_str();
  app.add_option("--kb-seed", c.kb_seed, "Seed for generated KBs and goal sets")->capture_default_str();
  app.add_option("--n-train-goals", c.n_train_goals, "Training goals per domain")->capture_default_str();
  app.add_option("--n-test-goals", c.n_test_goals, "Test goals per domain")->capture_default_str();
  app.add_option("--constraint-fraction", c.constraint_fraction, "Share of slots that become constraints")
      ->capture_default_str();
  app.add_option("--epochs", c.n_epochs, "Training epochs")->capture_default_str();
  app.add_option("--dialogues", c.n_dialogues, "Dialogues per epoch")->capture_default_str();
  app.add_option("--max-turns", c.max_turns, "Turn budget per dialogue")->capture_default_str();
  app.add_option("--gamma", h.gamma, "Discount factor")->capture_default_str();
  app.add_option("--epsilon", h.epsilon, "Exploration rate during training")->capture_default_str();
  app.add_option("--batch-size", h.batch_size, "Minibatch size")->capture_default_str();
  app.add_option("--buffer-capacity", h.buffer_capacity, "Replay buffer capacity")->capture_default_str();
  app.add_option("--target-sync-period", h.target_sync_period, "Epochs between target-network syncs")
      ->capture_default_str();
  app.add_option("--learning-rate", h.learning_rate, "SGD step size")->capture_default_str();
  app.add_option("--grad-clip", h.grad_clip, "Global gradient-norm clip (<= 0 disables)")->capture_default_str();
  app.add_option("--hidden-units", h.hidden_units, "Hidden-layer width")->capture_default_str();
  app.add_option("--ddqn", h.ddqn, "Double DQN targets (true/false)")->capture_default_str();
  app.add_option("--warm-start", c.warm_start, "Warm-start with the scripted agent (true/false)")
      ->capture_default_str();
  app.add_option("--warm-start-ratio", c.warm_start_ratio, "Positive share of the buffer to pre-fill")
      ->capture_default_str();
  app.add_option("--warm-start-max-episodes", c.warm_start_max_episodes, "Cap on warm-start dialogues")
      ->capture_default_str();
  app.add_option("--flush-threshold", c.flush_threshold, "Epoch success rate that triggers the one-off flush")
      ->capture_default_str();
  app.add_option("--transfer-source", c.transfer_source, "Source checkpoint to initialize from");
  app.add_option("--copy-hidden-bias", c.copy_hidden_bias, "Copy hidden biases on transfer (true/false)")
      ->capture_default_str();
  app.add_option("--source-epochs", c.source_epochs, "Epochs for training the source agent")
      ->capture_default_str();
  app.add_option("--portions", c.portions, "Training-goal portions")->delimiter(',')->capture_default_str();
  app.add_option("--arms", c.arms, "Curve arms among tl_ws, ws, tl, none")->delimiter(',')->capture_default_str();
  app.add_option("--repetitions", c.repetitions, "Repetitions per experiment")->capture_default_str();
  app.add_option("--seed", c.seed, "Base seed")->capture_default_str();
  app.add_option("--output-dir", c.output_dir, "Directory for CSV and checkpoint output")->capture_default_str();
  app.add_option("--jobs", c.jobs, "Parallel repetitions")->capture_default_str();
}

Scenario scenario_for(const Options& o) {
  Scenario sc = load_scenario(o.cfg);
  if (!o.kb_file.empty()) {
    sc.target.kb = load_kb(o.kb_file);
    validate_kb(sc.target.kb, sc.target.schema);
  }
  auto load_checked = [&](const std::string& path) {
    auto goals = load_goals(path);
    for (std::size_t g = 0; g < goals.size(); ++g)
      validate_goal(goals[g], sc.target.schema, path + ": goal " + std::to_string(g));
    return goals;
  };
  if (!o.train_goals_file.empty()) sc.target.train_goals = load_checked(o.train_goals_file);
  if (!o.test_goals_file.empty()) sc.target.test_goals = load_checked(o.test_goals_file);
  return sc;
}

std::string in_output_dir(const ExperimentConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  return (fs::path(cfg.output_dir) / name).string();
}

std::string arm_name(const ExperimentConfig& cfg) {
  const bool tl = !cfg.transfer_source.empty();
  if (tl) return cfg.warm_start ? "tl_ws" : "tl";
  return cfg.warm_start ? "ws" : "none";
}

/// Source checkpoint for the experiment subcommands: loaded if given, trained otherwise.
Checkpoint source_checkpoint(const Options& o, const Scenario& sc) {
  if (!o.cfg.transfer_source.empty()) return load_checkpoint(o.cfg.transfer_source, sc.space);
  if (!sc.source) throw std::invalid_argument("this experiment needs --source-domain");
  std::cerr << "training source agent on '" << sc.source->schema.name << "' for " << o.cfg.source_epochs
            << " epochs\n";
  Checkpoint ck = train_source(sc, o.cfg);
  const auto path = in_output_dir(o.cfg, "source_checkpoint.txt");
  save_checkpoint(path, ck);
  std::cerr << "wrote " << path << '\n';
  return ck;
}

int cmd_gen_kb(const Options& o) {
  if (o.schema.empty() || o.out.empty()) throw std::invalid_argument("gen-kb needs --schema and --out");
  const auto schema = load_schema(o.schema);
  save_kb(generate_kb(schema, o.cfg.kb_size, o.cfg.kb_seed), o.out);
  std::cout << "wrote " << o.cfg.kb_size << " records to " << o.out << '\n';
  return 0;
}

int cmd_gen_goals(const Options& o) {
  if (o.kb_file.empty() || o.out.empty()) throw std::invalid_argument("gen-goals needs --kb and --out");
  const auto kb = load_kb(o.kb_file);
  save_goals(sample_goals(kb, o.n_goals, o.cfg.constraint_fraction, o.goal_seed), o.out);
  std::cout << "wrote " << o.n_goals << " goals to " << o.out << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  const Scenario sc = scenario_for(o);
  const TrainResult r = train(o.cfg, sc);
  const Environment env = sc.environment(sc.target, o.cfg.max_turns);
  const auto csv = in_output_dir(o.cfg, "curve.csv");
  emit_csv(curve_rows(r.curve, arm_name(o.cfg), 0), csv);
  const auto ck = o.out.empty() ? in_output_dir(o.cfg, "checkpoint.txt") : o.out;
  save_checkpoint(ck, make_checkpoint(r, env, sc.target.schema));
  if (o.transcripts) {
    std::string text;
    const Policy greedy = greedy_policy(r.agent);
    for (std::size_t g = 0; g < sc.target.test_goals.size(); ++g)
      text += run_dialogue(greedy, sc.target.test_goals[g], env, derive_seed(o.cfg.seed, stream::kEval, g),
                           {.transcript = true})
                  .transcript +
              "\n";
    write_text_file(in_output_dir(o.cfg, "transcripts.txt"), text);
  }
  const auto& last = r.curve.back();
  std::printf("epochs %zu  train %.3f  test %.3f  warm-start dialogues %zu\n", r.curve.size(),
              last.train_success_rate, last.eval_success_rate, r.warm_start_episodes);
  std::cout << "wrote " << csv << " and " << ck << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty()) throw std::invalid_argument("eval needs --checkpoint");
  const Scenario sc = scenario_for(o);
  const Checkpoint ck = load_checkpoint(o.checkpoint, sc.space);
  if (ck.max_turns != o.cfg.max_turns)
    throw std::invalid_argument("checkpoint was trained with max_turns " + std::to_string(ck.max_turns));
  const Environment env = sc.environment(sc.target, ck.max_turns);
  const DqnAgent agent(ck.network, ck.hyper);
  const double train_rate = evaluate(agent, sc.target.train_goals, env, o.cfg.seed);
  const double test_rate = evaluate(agent, sc.target.test_goals, env, o.cfg.seed);
  std::printf("train %.4f  test %.4f\n", train_rate, test_rate);
  return 0;
}

int cmd_transfer_init(const Options& o) {
  if (o.checkpoint.empty() || o.cfg.target_domain.empty())
    throw std::invalid_argument("transfer-init needs --source and --target-domain");
  const Checkpoint source = load_checkpoint_raw(o.checkpoint);
  const DomainSchema target = load_schema(o.cfg.target_domain);
  const UnifiedSpace space = unify({source.domain, target});
  if (space.fingerprint() != source.space)
    throw CheckpointError(o.checkpoint + ": checkpoint space differs from unify(source, target)");
  const TransferMap map = common_indices(source.domain, target, space);
  Checkpoint out = source;
  out.domain = target;
  out.network = initialize_from_source(source, map, derive_seed(o.cfg.seed, stream::kNetInit),
                                       {o.cfg.copy_hidden_bias});
  const auto path = o.out.empty() ? in_output_dir(o.cfg, "transfer_init.txt") : o.out;
  save_checkpoint(path, out);
  std::cout << "common slots " << map.common_slot_indices.size() << ", common actions "
            << map.common_action_indices.size() << "; wrote " << path << '\n';
  return 0;
}

int cmd_portions(const Options& o) {
  const Scenario sc = scenario_for(o);
  const Checkpoint ck = source_checkpoint(o, sc);
  const auto rows = portion_experiment(o.cfg, sc, ck);
  const auto path = in_output_dir(o.cfg, "portions.csv");
  emit_csv(rows, path);
  for (auto p : o.cfg.portions) {
    for (const char* arm : {"baseline", "transfer"}) {
      std::vector<double> test;
      for (const auto& r : rows)
        if (r.portion == p && r.arm == arm) test.push_back(r.test_rate);
      const Interval ci = test.size() >= 2 ? confidence_interval(test) : Interval{test.front(), 0.0};
      std::printf("portion %3zu  %-8s  test %.3f +- %.3f\n", p, arm, ci.mean, ci.half_width);
    }
  }
  std::cout << "wrote " << path << '\n';
  return 0;
}

int cmd_curves(const Options& o) {
  const Scenario sc = scenario_for(o);
  bool needs_source = false;
  for (const auto& a : o.cfg.arms) needs_source = needs_source || a == "tl_ws" || a == "tl";
  std::optional<Checkpoint> ck;
  if (needs_source) ck = source_checkpoint(o, sc);
  const auto rows = curve_experiment(o.cfg, sc, ck);
  const auto path = in_output_dir(o.cfg, "curves.csv");
  emit_csv(rows, path);
  for (const auto& arm : o.cfg.arms) {
    std::vector<double> final_train;
    for (const auto& r : rows)
      if (r.arm == arm && r.epoch + 1 == o.cfg.n_epochs) final_train.push_back(r.train_rate);
    const Interval ci =
        final_train.size() >= 2 ? confidence_interval(final_train) : Interval{final_train.front(), 0.0};
    std::printf("%-6s final train %.3f +- %.3f\n", arm.c_str(), ci.mean, ci.half_width);
  }
  std::cout << "wrote " << path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep Q-learning dialogue policies with cross-domain transfer"};
  app.set_config("--config", "", "Key = value config file; command-line flags take precedence");
  app.config_formatter(std::make_shared<KeyValueConfig>());
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  add_experiment_options(app, o);
  app.add_option("--out", o.out, "Output file (gen-kb, gen-goals, train checkpoint, transfer-init)");
  app.add_option("--kb", o.kb_file, "Knowledge base file (gen-goals input; train/eval override)");
  app.add_option("--train-goals", o.train_goals_file, "Training goals file overriding the generated set");
  app.add_option("--test-goals", o.test_goals_file, "Test goals file overriding the generated set");

  auto* gen_kb = app.add_subcommand("gen-kb", "Generate a knowledge base from a schema");
  gen_kb->add_option("--schema", o.schema, "Domain schema (JSON)")->required();
  auto* gen_goals = app.add_subcommand("gen-goals", "Sample user goals from a knowledge base");
  gen_goals->add_option("--n-goals", o.n_goals, "Number of goals")->capture_default_str();
  gen_goals->add_option("--goal-seed", o.goal_seed, "Sampling seed")->capture_default_str();
  auto* train_cmd = app.add_subcommand("train", "Train one agent on the target domain");
  train_cmd->add_flag("-v,--transcripts", o.transcripts, "Write greedy test-dialogue transcripts");
  auto* eval_cmd = app.add_subcommand("eval", "Greedy success rates of a checkpoint");
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Agent checkpoint")->required();
  auto* init_cmd = app.add_subcommand("transfer-init", "Initialize a target-domain checkpoint from a source one");
  init_cmd->add_option("--source", o.checkpoint, "Source agent checkpoint")->required();
  auto* portions_cmd = app.add_subcommand("portions", "Training-goal portion experiment (CSV)");
  auto* curves_cmd = app.add_subcommand("curves", "Learning-curve experiment over the tl/ws arms (CSV)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    o.cfg.validate();
    if (*gen_kb) return cmd_gen_kb(o);
    if (*gen_goals) return cmd_gen_goals(o);
    if (*train_cmd) return cmd_train(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*init_cmd) return cmd_transfer_init(o);
    if (*portions_cmd) return cmd_portions(o);
    if (*curves_cmd) return cmd_curves(o);
  } catch (const std::exception& e) {
    std::cerr << "godial: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
