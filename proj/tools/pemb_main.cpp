// pemb: policy-embedding experiment pipeline.
//
// Subcommands run one pipeline stage each against a seeded run config:
//   gen-population, collect, split, train-embed, eval-embed, train-rl, report
// plus run-all, which chains them. Artifacts land under the config's out_dir.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "pemb/errors.hpp"
#include "pemb/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitFailure = 4;

struct CommonOptions {
  std::string config_path;
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
};

void add_common(CLI::App* cmd, CommonOptions& options) {
  cmd->add_option("-c,--config", options.config_path, "run config file (JSON)")
      ->required();
  cmd->add_option("--out", options.out_override, "override the config's out_dir");
  cmd->add_option("--seed", options.seed_override, "override the config's seed")
      ->each([&options](const std::string&) { options.has_seed_override = true; });
}

pemb::cli::RunConfig resolve_config(const CommonOptions& options) {
  pemb::cli::RunConfig config = pemb::cli::load_run_config(options.config_path);
  if (!options.out_override.empty()) config.out_dir = options.out_override;
  if (options.has_seed_override) config.seed = options.seed_override;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"policy embedding toolkit"};
  app.require_subcommand(1);

  CommonOptions options;
  using Stage = void (*)(const pemb::cli::RunConfig&);
  struct Command {
    const char* name;
    const char* help;
    Stage stage;
  };
  const Command commands[] = {
      {"gen-population", "generate the scripted agent population", pemb::cli::cmd_gen_population},
      {"collect", "roll out the interaction graph episodes", pemb::cli::cmd_collect},
      {"split", "produce the configured generalization splits", pemb::cli::cmd_split},
      {"train-embed", "train representation functions per variant and split",
       pemb::cli::cmd_train_embed},
      {"eval-embed", "clustering, outcome-prediction, and projection evaluations",
       pemb::cli::cmd_eval_embed},
      {"train-rl", "embedding-conditioned policy optimization",
       pemb::cli::cmd_train_rl},
      {"report", "collate artifacts into the report bundle", pemb::cli::cmd_report},
      {"run-all", "run every stage in order", pemb::cli::cmd_run_all},
  };

  Stage selected = nullptr;
  for (const Command& command : commands) {
    CLI::App* sub = app.add_subcommand(command.name, command.help);
    add_common(sub, options);
    sub->callback([&selected, &command]() { selected = command.stage; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    selected(resolve_config(options));
    return kExitOk;
  } catch (const pemb::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
}
