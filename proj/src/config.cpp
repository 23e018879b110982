#include "pemb/config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "pemb/errors.hpp"

namespace pemb::cli {

using nlohmann::json;

const char* variant_name(embed::TrainVariant variant) {
  switch (variant) {
    case embed::TrainVariant::kImitation: return "im";
    case embed::TrainVariant::kIdentification: return "id";
    case embed::TrainVariant::kHybrid: return "hyb";
  }
  return "unknown";
}

embed::TrainVariant variant_from_name(const std::string& name) {
  if (name == "im") return embed::TrainVariant::kImitation;
  if (name == "id") return embed::TrainVariant::kIdentification;
  if (name == "hyb") return embed::TrainVariant::kHybrid;
  throw ConfigError("unknown embedding variant: " + name);
}

const char* split_mode_name(graph::SplitMode mode) {
  return mode == graph::SplitMode::kWeak ? "weak" : "strong";
}

namespace {

rl::EmbeddingMode mode_from_name(const std::string& name) {
  if (name == "none") return rl::EmbeddingMode::kNone;
  if (name == "online") return rl::EmbeddingMode::kOnline;
  if (name == "offline") return rl::EmbeddingMode::kOffline;
  if (name == "zero") return rl::EmbeddingMode::kZero;
  if (name == "rand") return rl::EmbeddingMode::kRand;
  throw ConfigError("unknown embedding mode: " + name);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

SplitConfig parse_split(const json& j) {
  SplitConfig split;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "weak") {
    split.mode = graph::SplitMode::kWeak;
    split.train_fraction = get_or(j, "train_fraction", 0.6);
  } else if (mode == "strong") {
    split.mode = graph::SplitMode::kStrong;
    split.counts = j.at("counts").get<std::array<int, 3>>();
  } else {
    throw ConfigError("unknown split mode: " + mode);
  }
  return split;
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }

  try {
    RunConfig config;
    config.seed = get_or<std::uint64_t>(j, "seed", 0);
    const std::string env = get_or<std::string>(j, "env", "arena");
    if (env == "arena") config.env_kind = env::EnvKind::kArena;
    else if (env == "signal") config.env_kind = env::EnvKind::kSignal;
    else throw ConfigError("unknown env kind: " + env);

    std::filesystem::path out = j.at("out_dir").get<std::string>();
    if (out.is_relative()) {
      if (const char* root = std::getenv("PEMB_OUT_ROOT")) {
        out = std::filesystem::path(root) / out;
      }
    }
    config.out_dir = out;

    config.horizon = get_or(j, "horizon", 0);
    if (config.horizon < 0) throw ConfigError("horizon must be positive when set");
    const std::string pop_kind = get_or<std::string>(j, "population_kind", "generated");
    if (pop_kind == "generated") config.population_kind = PopulationKind::kGenerated;
    else if (pop_kind == "contrast") config.population_kind = PopulationKind::kContrast;
    else throw ConfigError("unknown population_kind: " + pop_kind);

    config.population_size = get_or(j, "population_size", 8);
    config.episodes_per_edge = get_or(j, "episodes_per_edge", 10);
    if (config.population_size < 2) throw ConfigError("population_size must be >= 2");
    if (config.episodes_per_edge < 2) throw ConfigError("episodes_per_edge must be >= 2");

    if (j.contains("splits")) {
      config.splits.clear();
      for (const json& s : j.at("splits")) config.splits.push_back(parse_split(s));
      if (config.splits.empty()) throw ConfigError("splits must not be empty");
    }

    if (j.contains("embed")) {
      const json& e = j.at("embed");
      if (e.contains("variants")) {
        config.embed.variants.clear();
        for (const json& v : e.at("variants")) {
          config.embed.variants.push_back(variant_from_name(v.get<std::string>()));
        }
      }
      config.embed.embed_dim = get_or(e, "embed_dim", config.embed.embed_dim);
      config.embed.epochs = get_or(e, "epochs", config.embed.epochs);
      config.embed.learning_rate = get_or(e, "learning_rate", config.embed.learning_rate);
      config.embed.encoder_hidden =
          get_or(e, "encoder_hidden", config.embed.encoder_hidden);
      config.embed.decoder_hidden =
          get_or(e, "decoder_hidden", config.embed.decoder_hidden);
      config.embed.lambda_grid = get_or(e, "lambda_grid", config.embed.lambda_grid);
      config.embed.lambda_id = get_or(e, "lambda_id", config.embed.lambda_id);
      const std::string update = get_or<std::string>(e, "update_mode", "per_negative");
      if (update == "per_negative") config.embed.update_mode = embed::UpdateMode::kPerNegative;
      else if (update == "batched") config.embed.update_mode = embed::UpdateMode::kBatched;
      else throw ConfigError("unknown update_mode: " + update);
      if (config.embed.embed_dim < 1) throw ConfigError("embed_dim must be positive");
      if (config.embed.epochs < 1) throw ConfigError("epochs must be positive");
      if (config.embed.lambda_grid.empty()) throw ConfigError("lambda_grid must not be empty");
    }

    if (j.contains("eval")) {
      const json& e = j.at("eval");
      config.eval.pca_components = get_or(e, "pca_components", 3);
      config.eval.pca_agents = get_or(e, "pca_agents", 5);
      if (e.contains("classifier")) {
        const json& c = e.at("classifier");
        config.eval.classifier.hidden = get_or(c, "hidden", config.eval.classifier.hidden);
        config.eval.classifier.epochs = get_or(c, "epochs", config.eval.classifier.epochs);
        config.eval.classifier.batch_size =
            get_or(c, "batch_size", config.eval.classifier.batch_size);
        config.eval.classifier.learning_rate =
            get_or(c, "learning_rate", config.eval.classifier.learning_rate);
      }
    }

    if (j.contains("rl")) {
      const json& r = j.at("rl");
      config.rl.enabled = get_or(r, "enabled", true);
      config.rl.seeds = get_or(r, "seeds", 3);
      if (config.rl.seeds < 1) throw ConfigError("rl.seeds must be positive");
      if (r.contains("arena")) {
        const json& a = r.at("arena");
        config.rl.arena.train_partners = get_or(a, "train_partners", 5);
        config.rl.arena.test_partners = get_or(a, "test_partners", 5);
        if (a.contains("modes")) {
          config.rl.arena.modes.clear();
          for (const json& m : a.at("modes")) {
            config.rl.arena.modes.push_back(mode_from_name(m.get<std::string>()));
          }
        }
        config.rl.arena.run.iterations = get_or(a, "iterations", config.rl.arena.run.iterations);
        config.rl.arena.run.batch_episodes =
            get_or(a, "batch_episodes", config.rl.arena.run.batch_episodes);
        config.rl.arena.run.eval_every = get_or(a, "eval_every", config.rl.arena.run.eval_every);
        config.rl.arena.run.eval_games = get_or(a, "eval_games", config.rl.arena.run.eval_games);
        config.rl.arena.run.learning_rate =
            get_or(a, "learning_rate", config.rl.arena.run.learning_rate);
        config.rl.arena.run.hidden = get_or(a, "hidden", config.rl.arena.run.hidden);
        config.rl.arena.head_to_head_games =
            get_or(a, "head_to_head_games", config.rl.arena.head_to_head_games);
      }
      if (r.contains("speaker")) {
        const json& s = r.at("speaker");
        config.rl.speaker.split = get_or(s, "split", config.rl.speaker.split);
        config.rl.speaker.seeds = get_or(s, "seeds", 5);
        config.rl.speaker.run.iterations =
            get_or(s, "iterations", config.rl.speaker.run.iterations);
        config.rl.speaker.run.batch_episodes =
            get_or(s, "batch_episodes", config.rl.speaker.run.batch_episodes);
        config.rl.speaker.run.eval_every =
            get_or(s, "eval_every", config.rl.speaker.run.eval_every);
        config.rl.speaker.run.valid_episodes_per_listener =
            get_or(s, "valid_episodes_per_listener",
                   config.rl.speaker.run.valid_episodes_per_listener);
        config.rl.speaker.run.test_episodes_per_listener =
            get_or(s, "test_episodes_per_listener",
                   config.rl.speaker.run.test_episodes_per_listener);
        config.rl.speaker.run.learning_rate =
            get_or(s, "learning_rate", config.rl.speaker.run.learning_rate);
        config.rl.speaker.run.hidden = get_or(s, "hidden", config.rl.speaker.run.hidden);
      }
    }

    return config;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  json splits = json::array();
  for (const SplitConfig& s : config.splits) {
    if (s.mode == graph::SplitMode::kWeak) {
      splits.push_back({{"mode", "weak"}, {"train_fraction", s.train_fraction}});
    } else {
      splits.push_back({{"mode", "strong"}, {"counts", s.counts}});
    }
  }
  json variants = json::array();
  for (embed::TrainVariant v : config.embed.variants) variants.push_back(variant_name(v));
  json modes = json::array();
  for (rl::EmbeddingMode m : config.rl.arena.modes) {
    modes.push_back(rl::embedding_mode_name(m));
  }

  json j{
      {"seed", config.seed},
      {"out_dir", config.out_dir.string()},
      {"env", config.env_kind == env::EnvKind::kArena ? "arena" : "signal"},
      {"horizon", config.horizon},
      {"population_kind",
       config.population_kind == PopulationKind::kGenerated ? "generated" : "contrast"},
      {"population_size", config.population_size},
      {"episodes_per_edge", config.episodes_per_edge},
      {"splits", splits},
      {"embed",
       {{"variants", variants},
        {"embed_dim", config.embed.embed_dim},
        {"epochs", config.embed.epochs},
        {"learning_rate", config.embed.learning_rate},
        {"encoder_hidden", config.embed.encoder_hidden},
        {"decoder_hidden", config.embed.decoder_hidden},
        {"lambda_grid", config.embed.lambda_grid},
        {"lambda_id", config.embed.lambda_id},
        {"update_mode", config.embed.update_mode == embed::UpdateMode::kPerNegative
                            ? "per_negative"
                            : "batched"}}},
      {"eval",
       {{"pca_components", config.eval.pca_components},
        {"pca_agents", config.eval.pca_agents},
        {"classifier",
         {{"hidden", config.eval.classifier.hidden},
          {"epochs", config.eval.classifier.epochs},
          {"batch_size", config.eval.classifier.batch_size},
          {"learning_rate", config.eval.classifier.learning_rate}}}}},
      {"rl",
       {{"enabled", config.rl.enabled},
        {"seeds", config.rl.seeds},
        {"arena",
         {{"train_partners", config.rl.arena.train_partners},
          {"test_partners", config.rl.arena.test_partners},
          {"modes", modes},
          {"iterations", config.rl.arena.run.iterations},
          {"batch_episodes", config.rl.arena.run.batch_episodes},
          {"eval_every", config.rl.arena.run.eval_every},
          {"eval_games", config.rl.arena.run.eval_games},
          {"learning_rate", config.rl.arena.run.learning_rate},
          {"hidden", config.rl.arena.run.hidden},
          {"head_to_head_games", config.rl.arena.head_to_head_games}}},
        {"speaker",
         {{"split", config.rl.speaker.split},
          {"seeds", config.rl.speaker.seeds},
          {"iterations", config.rl.speaker.run.iterations},
          {"batch_episodes", config.rl.speaker.run.batch_episodes},
          {"eval_every", config.rl.speaker.run.eval_every},
          {"valid_episodes_per_listener",
           config.rl.speaker.run.valid_episodes_per_listener},
          {"test_episodes_per_listener",
           config.rl.speaker.run.test_episodes_per_listener},
          {"learning_rate", config.rl.speaker.run.learning_rate},
          {"hidden", config.rl.speaker.run.hidden}}}}},
  };
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config copy: " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace pemb::cli
