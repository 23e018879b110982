#ifndef PEMB_CONFIG_HPP_
#define PEMB_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pemb/embed.hpp"
#include "pemb/eval.hpp"
#include "pemb/graph.hpp"
#include "pemb/rl.hpp"

namespace pemb::cli {

struct SplitConfig {
  graph::SplitMode mode = graph::SplitMode::kWeak;
  double train_fraction = 0.6;         // weak splits
  std::array<int, 3> counts{0, 0, 0};  // strong splits
};

struct EmbedConfig {
  std::vector<embed::TrainVariant> variants{embed::TrainVariant::kImitation,
                                            embed::TrainVariant::kIdentification,
                                            embed::TrainVariant::kHybrid};
  int embed_dim = 16;
  int epochs = 30;
  double learning_rate = 1e-3;
  std::vector<int> encoder_hidden{100, 100};
  std::vector<int> decoder_hidden{64, 64};
  std::vector<double> lambda_grid{0.01, 0.05, 0.1, 0.5};
  double lambda_id = 1.0;  // identification-only training weight
  embed::UpdateMode update_mode = embed::UpdateMode::kPerNegative;
};

struct EvalConfig {
  int pca_components = 3;
  int pca_agents = 5;
  eval::ClassifierConfig classifier;
};

struct ArenaRlConfig {
  int train_partners = 5;
  int test_partners = 5;
  std::vector<rl::EmbeddingMode> modes{rl::EmbeddingMode::kNone,
                                       rl::EmbeddingMode::kOnline,
                                       rl::EmbeddingMode::kOffline};
  rl::RlConfig run;
  int head_to_head_games = 50;
};

struct SpeakerRlConfig {
  std::array<int, 3> split{6, 4, 4};  // of the 14 strongest listeners
  int seeds = 5;
  rl::SpeakerRlConfig run;
};

struct RlSection {
  bool enabled = false;
  int seeds = 3;
  ArenaRlConfig arena;
  SpeakerRlConfig speaker;
};

enum class PopulationKind : std::uint8_t { kGenerated = 0, kContrast = 1 };

// One experiment, fully seeded; every artifact is a pure function of this
// structure in single-threaded mode.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  env::EnvKind env_kind = env::EnvKind::kArena;
  int horizon = 0;  // 0 keeps the environment default
  PopulationKind population_kind = PopulationKind::kGenerated;
  int population_size = 8;  // arena styles; signal populations are fixed at 28
  int episodes_per_edge = 10;
  std::vector<SplitConfig> splits{{graph::SplitMode::kWeak, 0.6, {0, 0, 0}}};
  EmbedConfig embed;
  EvalConfig eval;
  RlSection rl;
};

// Parses a config file (JSON; // comments allowed). Relative out_dir is
// resolved against the PEMB_OUT_ROOT environment variable when set.
RunConfig load_run_config(const std::filesystem::path& path);

// Serialized form of the in-memory config, written into the run directory so
// artifacts are replayable without the original file.
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

const char* variant_name(embed::TrainVariant variant);
embed::TrainVariant variant_from_name(const std::string& name);
const char* split_mode_name(graph::SplitMode mode);

}  // namespace pemb::cli

#endif  // PEMB_CONFIG_HPP_
