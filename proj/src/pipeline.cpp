#include "pemb/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "pemb/csv.hpp"
#include "pemb/errors.hpp"

namespace pemb::cli {

using nlohmann::json;

namespace {

// Seed stream tags per stage.
constexpr std::uint64_t kPopulationStream = 0x01;
constexpr std::uint64_t kGraphStream = 0x02;
constexpr std::uint64_t kSplitStream = 0x03;
constexpr std::uint64_t kTrainStream = 0x04;
constexpr std::uint64_t kClassifierStream = 0x05;
constexpr std::uint64_t kRlPartnerStream = 0x06;
constexpr std::uint64_t kRlRunStream = 0x07;
constexpr std::uint64_t kSpeakerStream = 0x08;

std::filesystem::path population_path(const RunConfig& config) {
  return config.out_dir / "population.json";
}
std::filesystem::path graph_dir(const RunConfig& config) {
  return config.out_dir / "graph";
}
std::filesystem::path split_path(const RunConfig& config, graph::SplitMode mode) {
  return config.out_dir / "splits" / (std::string(split_mode_name(mode)) + ".json");
}
std::filesystem::path model_dir(const RunConfig& config, graph::SplitMode mode,
                                embed::TrainVariant variant) {
  return config.out_dir / "embed" / split_mode_name(mode) / variant_name(variant);
}

env::MarkovGameSpec game_spec(const RunConfig& config) {
  env::MarkovGameSpec spec = config.env_kind == env::EnvKind::kArena
                                 ? env::MarkovGameSpec::arena()
                                 : env::MarkovGameSpec::signal();
  if (config.horizon > 0) spec.horizon = config.horizon;
  return spec;
}

graph::InteractionGraph load_run_graph(const RunConfig& config) {
  return graph::load_graph(graph_dir(config));
}

graph::SplitSpec load_run_split(const RunConfig& config, graph::SplitMode mode) {
  return graph::load_split(split_path(config, mode));
}

embed::TrainConfig make_train_config(const RunConfig& config,
                                     embed::TrainVariant variant, graph::SplitMode mode) {
  embed::TrainConfig tc;
  tc.variant = variant;
  tc.update_mode = config.embed.update_mode;
  tc.embed_dim = config.embed.embed_dim;
  tc.epochs = config.embed.epochs;
  tc.learning_rate = config.embed.learning_rate;
  tc.encoder_hidden = config.embed.encoder_hidden;
  tc.decoder_hidden = config.embed.decoder_hidden;
  tc.lambda_grid = config.embed.lambda_grid;
  tc.seed = derive_seed(config.seed, kTrainStream,
                        (static_cast<std::uint64_t>(mode) << 8) |
                            static_cast<std::uint64_t>(variant));
  switch (variant) {
    case embed::TrainVariant::kImitation: tc.lambda = 0.0; break;
    case embed::TrainVariant::kIdentification: tc.lambda = config.embed.lambda_id; break;
    case embed::TrainVariant::kHybrid:
      tc.lambda = config.embed.lambda_grid.front();
      break;
  }
  return tc;
}

void write_curves(const std::filesystem::path& path,
                  const std::vector<embed::EpochStats>& curve) {
  CsvWriter csv(path, {"epoch", "train_loss", "valid_loss"});
  for (const embed::EpochStats& row : curve) {
    csv.row({fmt_int(row.epoch), fmt_double(row.train_loss), fmt_double(row.valid_loss)});
  }
}

}  // namespace

int collection_threads() {
  if (const char* env_threads = std::getenv("PEMB_THREADS")) {
    const int n = std::atoi(env_threads);
    if (n >= 1) return n;
  }
  return 1;
}

void cmd_gen_population(const RunConfig& config) {
  std::filesystem::create_directories(config.out_dir);
  save_run_config(config, config.out_dir / "run_config.json");
  const std::uint64_t seed = derive_seed(config.seed, kPopulationStream);
  if (config.env_kind == env::EnvKind::kArena) {
    agents::save_arena_population(
        config.population_kind == PopulationKind::kContrast
            ? agents::make_contrast_arena_population(config.population_size)
            : agents::make_arena_population(config.population_size, seed),
        population_path(config));
  } else {
    agents::save_signal_population(agents::make_signal_population(seed),
                                   population_path(config));
  }
}

void cmd_collect(const RunConfig& config) {
  const env::MarkovGameSpec spec = game_spec(config);
  const std::uint64_t seed = derive_seed(config.seed, kGraphStream);
  const int threads = collection_threads();
  graph::InteractionGraph g;
  if (config.env_kind == env::EnvKind::kArena) {
    g = graph::build_arena_graph(agents::load_arena_population(population_path(config)),
                                 config.episodes_per_edge, spec, seed, threads);
  } else {
    g = graph::build_signal_graph(agents::load_signal_population(population_path(config)),
                                  config.episodes_per_edge, spec, seed, threads);
  }
  graph::save_graph(g, graph_dir(config));
}

void cmd_split(const RunConfig& config) {
  const graph::InteractionGraph g = load_run_graph(config);
  std::filesystem::create_directories(config.out_dir / "splits");
  std::set<graph::SplitMode> seen;
  for (const SplitConfig& sc : config.splits) {
    if (!seen.insert(sc.mode).second) {
      throw ConfigError("duplicate split mode in config");
    }
    const std::uint64_t seed =
        derive_seed(config.seed, kSplitStream, static_cast<std::uint64_t>(sc.mode));
    graph::SplitSpec split;
    if (sc.mode == graph::SplitMode::kWeak) {
      split = graph::split_weak(g, sc.train_fraction, seed);
      if (split.degenerate_holdout) {
        std::fprintf(stderr, "warning: weak split holdout is degenerate (<= 1 edge)\n");
      }
    } else {
      split = graph::split_strong(g, sc.counts, seed);
    }
    graph::save_split(split, split_path(config, sc.mode));
  }
}

void cmd_train_embed(const RunConfig& config) {
  const graph::InteractionGraph g = load_run_graph(config);
  for (const SplitConfig& sc : config.splits) {
    const graph::SplitSpec split = load_run_split(config, sc.mode);
    for (embed::TrainVariant variant : config.embed.variants) {
      const std::filesystem::path dir = model_dir(config, sc.mode, variant);
      std::filesystem::create_directories(dir);
      embed::TrainConfig tc = make_train_config(config, variant, sc.mode);

      embed::TrainResult result;
      double chosen_lambda = tc.lambda;
      if (variant == embed::TrainVariant::kHybrid) {
        embed::LambdaSelection selection = embed::select_lambda(g, split, tc);
        CsvWriter table(dir / "lambda_table.csv", {"lambda", "valid_loss", "selected"});
        for (const embed::LambdaRow& row : selection.table) {
          table.row({fmt_double(row.lambda), fmt_double(row.valid_loss),
                     row.lambda == selection.lambda_star ? "1" : "0"});
        }
        chosen_lambda = selection.lambda_star;
        result = std::move(selection.best);
      } else {
        result = embed::train_embedding(g, split, tc);
      }

      embed::save_encoder(result.encoder, dir, "encoder");
      embed::save_conditional_policy(result.policy, dir, "decoder");
      write_curves(dir / "curves.csv", result.curve);
      std::ofstream meta(dir / "result.json");
      meta << json{{"variant", variant_name(variant)},
                   {"mode", split_mode_name(sc.mode)},
                   {"lambda", chosen_lambda},
                   {"epochs", tc.epochs},
                   {"final_valid_loss", result.final_valid_loss}}
                  .dump(2)
           << '\n';
    }
  }
}

namespace {

void eval_outcome_for(const RunConfig& config, const graph::InteractionGraph& g,
                      const graph::SplitSpec& split, graph::SplitMode mode,
                      embed::TrainVariant variant, const embed::Encoder& encoder,
                      CsvWriter& out) {
  const eval::OutcomeDataset train_rows = eval::build_outcome_dataset(
      encoder, g, split, graph::Phase::kTrain, /*augment_swap=*/true);
  const eval::OutcomeDataset test_rows = eval::build_outcome_dataset(
      encoder, g, split, graph::Phase::kTest, /*augment_swap=*/false);
  const eval::OutcomeClassifier classifier = eval::train_outcome_classifier(
      train_rows, config.eval.classifier,
      derive_seed(config.seed, kClassifierStream,
                  (static_cast<std::uint64_t>(mode) << 8) |
                      static_cast<std::uint64_t>(variant)));
  out.row({split_mode_name(mode), variant_name(variant),
           fmt_double(eval::classifier_accuracy(classifier, test_rows)),
           fmt_double(eval::majority_class_rate(test_rows)),
           fmt_int(static_cast<long long>(test_rows.rows.size())),
           fmt_int(static_cast<long long>(train_rows.rows.size()))});
}

}  // namespace

void cmd_eval_embed(const RunConfig& config) {
  const graph::InteractionGraph g = load_run_graph(config);
  const std::filesystem::path eval_dir = config.out_dir / "eval";
  std::filesystem::create_directories(eval_dir);

  CsvWriter iicr_csv(eval_dir / "iicr.csv",
                     {"mode", "variant", "phase", "iicr", "agents", "embeddings"});
  std::optional<CsvWriter> outcome_csv;
  if (config.env_kind == env::EnvKind::kArena) {
    outcome_csv.emplace(eval_dir / "outcome.csv",
                        std::vector<std::string>{"mode", "variant", "accuracy",
                                                 "majority_rate", "test_rows",
                                                 "train_rows"});
  }

  const int k = std::min(config.eval.pca_components, config.embed.embed_dim);
  std::vector<std::string> pca_header{"mode", "agent", "episode"};
  for (int c = 1; c <= k; ++c) pca_header.push_back("pc" + std::to_string(c));
  CsvWriter pca_csv(eval_dir / "pca.csv", pca_header);

  for (const SplitConfig& sc : config.splits) {
    const graph::SplitSpec split = load_run_split(config, sc.mode);
    for (embed::TrainVariant variant : config.embed.variants) {
      const std::filesystem::path dir = model_dir(config, sc.mode, variant);
      const embed::Encoder encoder = embed::load_encoder(dir, "encoder");

      const eval::EmbeddingSet set =
          eval::build_embedding_set(encoder, g, split, graph::Phase::kTest);
      iicr_csv.row({split_mode_name(sc.mode), variant_name(variant), "test",
                    fmt_double(eval::iicr(set)),
                    fmt_int(static_cast<long long>(set.per_agent.size())),
                    fmt_int(static_cast<long long>(set.total()))});

      if (outcome_csv) {
        try {
          eval_outcome_for(config, g, split, sc.mode, variant, encoder, *outcome_csv);
        } catch (const DegenerateError& e) {
          std::fprintf(stderr, "warning: outcome eval skipped (%s/%s): %s\n",
                       split_mode_name(sc.mode), variant_name(variant), e.what());
        }
      }

      if (variant == embed::TrainVariant::kHybrid) {
        // Embeddings of the first few agents' test interactions, projected.
        std::vector<nn::Vec> points;
        std::vector<std::pair<int, long>> labels;
        int agents_taken = 0;
        for (int agent : g.embedded_agents()) {
          const auto ids = graph::episodes_for_agent(g, split, agent, graph::Phase::kTest);
          if (ids.empty()) continue;
          if (++agents_taken > config.eval.pca_agents) break;
          for (long id : ids) {
            points.push_back(
                embed::embed_episode(encoder, env::agent_view(g.episode(id), agent)));
            labels.push_back({agent, id});
          }
        }
        if (static_cast<int>(points.size()) >= k + 1) {
          const eval::PcaResult pca = eval::pca_project(points, k);
          for (std::size_t p = 0; p < points.size(); ++p) {
            std::vector<std::string> row{split_mode_name(sc.mode),
                                         fmt_int(labels[p].first),
                                         fmt_int(labels[p].second)};
            for (int c = 0; c < k; ++c) row.push_back(fmt_double(pca.coordinates[p][c]));
            pca_csv.row(row);
          }
        } else {
          std::fprintf(stderr, "warning: pca skipped (%s): too few embeddings\n",
                       split_mode_name(sc.mode));
        }
      }
    }
  }
}

namespace {

void train_rl_arena(const RunConfig& config) {
  const graph::InteractionGraph g = load_run_graph(config);
  const env::MarkovGameSpec spec = game_spec(config);
  const auto styles = agents::load_arena_population(population_path(config));

  const ArenaRlConfig& arena = config.rl.arena;
  if (arena.train_partners + arena.test_partners > static_cast<int>(styles.size())) {
    throw ConfigError("train-rl: partner sets exceed the population size");
  }

  const embed::Encoder encoder = embed::load_encoder(
      model_dir(config, graph::SplitMode::kWeak, embed::TrainVariant::kHybrid),
      "encoder");

  // Seeded partner selection from the pool.
  std::vector<int> pool(styles.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  Rng pool_rng(derive_seed(config.seed, kRlPartnerStream));
  pool_rng.shuffle(pool);
  std::vector<rl::ArenaPartner> train_partners, test_partners;
  for (int i = 0; i < arena.train_partners; ++i) {
    train_partners.push_back({pool[i], styles[pool[i]]});
  }
  for (int i = 0; i < arena.test_partners; ++i) {
    const int id = pool[arena.train_partners + i];
    test_partners.push_back({id, styles[id]});
  }

  std::vector<int> all_ids;
  for (const auto& p : train_partners) all_ids.push_back(p.id);
  for (const auto& p : test_partners) all_ids.push_back(p.id);
  const std::map<int, nn::Vec> offline_table =
      rl::offline_embedding_table(encoder, g, all_ids);

  const std::filesystem::path rl_dir = config.out_dir / "rl";
  std::filesystem::create_directories(rl_dir);
  CsvWriter fig5(rl_dir / "fig5_winrates.csv",
                 {"seed", "mode", "iteration", "train_win", "train_loss", "train_draw",
                  "test_win", "test_loss", "test_draw", "test_ci_half"});
  CsvWriter fig6(rl_dir / "fig6_ablations.csv",
                 {"seed", "policy_mode", "eval_embedding", "test_win", "test_loss",
                  "test_draw", "test_ci_half"});
  CsvWriter fig7(rl_dir / "fig7_matrix.csv",
                 {"seed", "first", "second", "win", "loss", "draw", "ci_half"});

  auto build_provider = [&](rl::EmbeddingMode mode) {
    rl::EmbeddingProvider provider =
        rl::make_provider(mode, encoder.embed_dim, &encoder);
    if (mode == rl::EmbeddingMode::kOffline || mode == rl::EmbeddingMode::kRand) {
      provider.offline = offline_table;
    }
    return provider;
  };

  for (int seed_idx = 0; seed_idx < config.rl.seeds; ++seed_idx) {
    std::map<rl::EmbeddingMode, rl::ConditionedAgentResult> arms;
    for (rl::EmbeddingMode mode : arena.modes) {
      rl::RlConfig run = arena.run;
      run.embed_dim = encoder.embed_dim;
      // One seed per seed_idx across modes: paired arms differ only through
      // their embedding inputs.
      run.seed = derive_seed(config.seed, kRlRunStream,
                             static_cast<std::uint64_t>(seed_idx));
      rl::EmbeddingProvider provider = build_provider(mode);
      rl::ConditionedAgentResult result = rl::train_conditioned_agent(
          spec, train_partners, test_partners, provider, run);
      for (const rl::CurvePoint& point : result.curve) {
        fig5.row({fmt_int(seed_idx), rl::embedding_mode_name(mode),
                  fmt_int(point.iteration), fmt_double(point.train.win),
                  fmt_double(point.train.loss), fmt_double(point.train.draw),
                  fmt_double(point.test.win), fmt_double(point.test.loss),
                  fmt_double(point.test.draw), fmt_double(point.test.ci_half)});
      }
      arms.emplace(mode, std::move(result));
    }

    const auto offline_arm = arms.find(rl::EmbeddingMode::kOffline);
    if (offline_arm != arms.end()) {
      // Paired ablation evaluations: same evaluation seeds, embeddings differ.
      const std::uint64_t eval_seed =
          derive_seed(config.seed, kRlRunStream,
                      (static_cast<std::uint64_t>(seed_idx) << 8) | 0x77);
      for (rl::EmbeddingMode eval_mode :
           {rl::EmbeddingMode::kOffline, rl::EmbeddingMode::kZero,
            rl::EmbeddingMode::kRand}) {
        rl::EmbeddingProvider provider = build_provider(eval_mode);
        const rl::MatchStats stats = rl::evaluate_arena_policy(
            spec, offline_arm->second.policy, test_partners, provider,
            arena.run.eval_games, eval_seed);
        fig6.row({fmt_int(seed_idx), "offline", rl::embedding_mode_name(eval_mode),
                  fmt_double(stats.win_rate()), fmt_double(stats.loss_rate()),
                  fmt_double(stats.draw_rate()),
                  fmt_double(stats.win_rate_half_width())});
      }
    }

    // Final-policy head-to-head pairings among trained arms; conditioned
    // sides provision online (fresh agents have no offline data).
    auto h2h_provider = [&](rl::EmbeddingMode mode) {
      if (mode == rl::EmbeddingMode::kNone) {
        return rl::make_provider(rl::EmbeddingMode::kNone, encoder.embed_dim);
      }
      return rl::make_provider(rl::EmbeddingMode::kOnline, encoder.embed_dim, &encoder);
    };
    const std::array<std::pair<rl::EmbeddingMode, rl::EmbeddingMode>, 3> pairings{
        {{rl::EmbeddingMode::kOffline, rl::EmbeddingMode::kNone},
         {rl::EmbeddingMode::kOnline, rl::EmbeddingMode::kNone},
         {rl::EmbeddingMode::kOffline, rl::EmbeddingMode::kOnline}}};
    for (const auto& [first_mode, second_mode] : pairings) {
      const auto first = arms.find(first_mode);
      const auto second = arms.find(second_mode);
      if (first == arms.end() || second == arms.end()) continue;
      rl::EmbeddingProvider fp = h2h_provider(first_mode);
      rl::EmbeddingProvider sp = h2h_provider(second_mode);
      const rl::MatchStats stats = rl::head_to_head(
          spec, first->second.policy, fp, second->second.policy, sp,
          arena.head_to_head_games,
          derive_seed(config.seed, kRlRunStream,
                      (static_cast<std::uint64_t>(seed_idx) << 16) |
                          (static_cast<std::uint64_t>(first_mode) << 8) |
                          static_cast<std::uint64_t>(second_mode)));
      fig7.row({fmt_int(seed_idx), rl::embedding_mode_name(first_mode),
                rl::embedding_mode_name(second_mode), fmt_double(stats.win_rate()),
                fmt_double(stats.loss_rate()), fmt_double(stats.draw_rate()),
                fmt_double(stats.win_rate_half_width())});
    }
  }
}

void train_rl_signal(const RunConfig& config) {
  const graph::InteractionGraph g = load_run_graph(config);
  const env::MarkovGameSpec spec = game_spec(config);
  const agents::SignalPopulation population =
      agents::load_signal_population(population_path(config));

  const SpeakerRlConfig& speaker = config.rl.speaker;
  const int n = static_cast<int>(population.listeners.size());
  const int keep = speaker.split[0] + speaker.split[1] + speaker.split[2];
  if (keep > n) throw ConfigError("train-rl: speaker split exceeds the listener count");

  // The strongest listeners cooperate most reliably; keep the best 14.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (population.listeners[a].obedience != population.listeners[b].obedience) {
      return population.listeners[a].obedience > population.listeners[b].obedience;
    }
    return a < b;
  });
  std::vector<int> kept(order.begin(), order.begin() + keep);
  Rng split_rng(derive_seed(config.seed, kSpeakerStream));
  split_rng.shuffle(kept);

  auto listeners_of = [&](int begin, int count) {
    std::vector<rl::ListenerPartner> out;
    for (int i = begin; i < begin + count; ++i) {
      const int global_id = n + kept[i];  // listener ids follow the speaker block
      out.push_back({global_id, population.listeners[kept[i]]});
    }
    return out;
  };
  const std::vector<rl::ListenerPartner> train_listeners = listeners_of(0, speaker.split[0]);
  const std::vector<rl::ListenerPartner> valid_listeners =
      listeners_of(speaker.split[0], speaker.split[1]);
  const std::vector<rl::ListenerPartner> test_listeners =
      listeners_of(speaker.split[0] + speaker.split[1], speaker.split[2]);

  std::vector<int> all_ids;
  for (const auto& l : train_listeners) all_ids.push_back(l.id);
  for (const auto& l : valid_listeners) all_ids.push_back(l.id);
  for (const auto& l : test_listeners) all_ids.push_back(l.id);

  const std::filesystem::path rl_dir = config.out_dir / "rl";
  std::filesystem::create_directories(rl_dir);
  CsvWriter table3(rl_dir / "table3_rows.csv",
                   {"seed", "arm", "train_reward", "valid_reward", "test_reward"});

  std::vector<std::pair<std::string, const embed::Encoder*>> arms;
  std::vector<embed::Encoder> encoders;
  encoders.reserve(config.embed.variants.size());
  arms.push_back({"baseline", nullptr});
  for (embed::TrainVariant variant : config.embed.variants) {
    encoders.push_back(embed::load_encoder(
        model_dir(config, graph::SplitMode::kWeak, variant), "encoder"));
    arms.push_back({std::string("emb_") + variant_name(variant), &encoders.back()});
  }

  for (std::size_t arm_idx = 0; arm_idx < arms.size(); ++arm_idx) {
    const auto& [arm_name, arm_encoder] = arms[arm_idx];
    (void)arm_idx;
    for (int seed_idx = 0; seed_idx < speaker.seeds; ++seed_idx) {
      rl::SpeakerRlConfig run = speaker.run;
      run.embed_dim = config.embed.embed_dim;
      // Arms share the per-seed stream so the comparison is paired.
      run.seed = derive_seed(config.seed, kSpeakerStream,
                             0x100 + static_cast<std::uint64_t>(seed_idx));
      rl::EmbeddingProvider provider =
          arm_encoder == nullptr
              ? rl::make_provider(rl::EmbeddingMode::kNone, run.embed_dim)
              : rl::make_provider(rl::EmbeddingMode::kOffline, run.embed_dim, arm_encoder);
      if (arm_encoder != nullptr) {
        provider.offline = rl::offline_embedding_table(*arm_encoder, g, all_ids);
      }
      const rl::ConditionedSpeakerResult result = rl::train_conditioned_speaker(
          spec, train_listeners, valid_listeners, test_listeners, provider, run);
      table3.row({fmt_int(seed_idx), arm_name, fmt_double(result.mean_train_reward),
                  fmt_double(result.mean_valid_reward),
                  fmt_double(result.mean_test_reward)});
    }
  }
}

}  // namespace

void cmd_train_rl(const RunConfig& config) {
  if (!config.rl.enabled) {
    throw ConfigError("train-rl: rl section is disabled in this config");
  }
  if (config.env_kind == env::EnvKind::kArena) {
    train_rl_arena(config);
  } else {
    train_rl_signal(config);
  }
}

// --- report collation ---

namespace {

struct ReportEntry {
  std::string file;
  std::string anchor;
  std::string description;
  bool present = false;
};

using Table = std::vector<std::vector<std::string>>;

std::map<std::string, std::size_t> header_index(const Table& table) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < table.front().size(); ++i) index[table.front()[i]] = i;
  return index;
}

// Mean of a numeric column grouped by a key column.
std::map<std::string, double> grouped_mean(const Table& table, const std::string& key,
                                           const std::string& value) {
  const auto idx = header_index(table);
  std::map<std::string, double> sums;
  std::map<std::string, int> counts;
  for (std::size_t r = 1; r < table.size(); ++r) {
    const std::string& k = table[r][idx.at(key)];
    sums[k] += std::strtod(table[r][idx.at(value)].c_str(), nullptr);
    counts[k] += 1;
  }
  for (auto& [k, v] : sums) v /= counts[k];
  return sums;
}

}  // namespace

void cmd_report(const RunConfig& config) {
  const std::filesystem::path report_dir = config.out_dir / "report";
  std::filesystem::create_directories(report_dir);
  const std::filesystem::path eval_dir = config.out_dir / "eval";
  const std::filesystem::path rl_dir = config.out_dir / "rl";

  std::vector<ReportEntry> entries;
  std::vector<std::string> gaps;
  const bool arena = config.env_kind == env::EnvKind::kArena;

  auto have = [](const std::filesystem::path& p) { return std::filesystem::exists(p); };

  // Clustering / accuracy tables: variant rows, weak and strong columns.
  {
    const char* file = arena ? "table1_iicr.csv" : "table2_iicr.csv";
    ReportEntry entry{file, arena ? "table1" : "table2",
                      arena ? "IICR and outcome-prediction accuracy by variant and split"
                            : "IICR by variant and split"};
    if (have(eval_dir / "iicr.csv")) {
      const Table iicr = read_csv(eval_dir / "iicr.csv");
      const auto idx = header_index(iicr);
      std::map<std::string, std::map<std::string, std::string>> cells;  // variant -> col
      for (std::size_t r = 1; r < iicr.size(); ++r) {
        cells[iicr[r][idx.at("variant")]]["iicr_" + iicr[r][idx.at("mode")]] =
            iicr[r][idx.at("iicr")];
      }
      if (arena && have(eval_dir / "outcome.csv")) {
        const Table outcome = read_csv(eval_dir / "outcome.csv");
        const auto oidx = header_index(outcome);
        for (std::size_t r = 1; r < outcome.size(); ++r) {
          cells[outcome[r][oidx.at("variant")]]["acc_" + outcome[r][oidx.at("mode")]] =
              outcome[r][oidx.at("accuracy")];
          cells[outcome[r][oidx.at("variant")]]
               ["majority_" + outcome[r][oidx.at("mode")]] =
                   outcome[r][oidx.at("majority_rate")];
        }
      }
      std::vector<std::string> header{"variant", "iicr_weak", "iicr_strong"};
      if (arena) {
        header.insert(header.end(),
                      {"acc_weak", "acc_strong", "majority_weak", "majority_strong"});
      }
      CsvWriter csv(report_dir / file, header);
      for (const char* variant : {"im", "id", "hyb"}) {
        const auto it = cells.find(variant);
        if (it == cells.end()) continue;
        std::vector<std::string> row{std::string("Emb-") +
                                     (std::string(variant) == "im"    ? "Im"
                                      : std::string(variant) == "id" ? "Id"
                                                                     : "Hyb")};
        for (std::size_t c = 1; c < header.size(); ++c) {
          const auto cell = it->second.find(header[c]);
          row.push_back(cell == it->second.end() ? "" : cell->second);
        }
        csv.row(row);
      }
      entry.present = true;
    } else {
      gaps.push_back(std::string(file) + ": missing eval/iicr.csv");
    }
    entries.push_back(entry);
  }

  // PCA projections of test-interaction embeddings.
  {
    ReportEntry entry{"fig4_pca.csv", "fig4",
                      "test-episode embeddings projected on leading principal components"};
    if (have(eval_dir / "pca.csv")) {
      const Table pca = read_csv(eval_dir / "pca.csv");
      CsvWriter csv(report_dir / "fig4_pca.csv", pca.front());
      for (std::size_t r = 1; r < pca.size(); ++r) csv.row(pca[r]);
      entry.present = true;
    } else {
      gaps.push_back("fig4_pca.csv: missing eval/pca.csv");
    }
    entries.push_back(entry);
  }

  if (arena) {
    // Win-rate curves per embedding mode, averaged over seeds.
    ReportEntry fig5{"fig5_winrates.csv", "fig5",
                     "train/test win rates of the new agent per embedding mode"};
    if (have(rl_dir / "fig5_winrates.csv")) {
      const Table rows = read_csv(rl_dir / "fig5_winrates.csv");
      const auto idx = header_index(rows);
      std::map<std::pair<std::string, int>, std::array<double, 3>> acc;
      std::map<std::pair<std::string, int>, int> counts;
      for (std::size_t r = 1; r < rows.size(); ++r) {
        const std::pair<std::string, int> key{
            rows[r][idx.at("mode")], std::atoi(rows[r][idx.at("iteration")].c_str())};
        acc[key][0] += std::strtod(rows[r][idx.at("train_win")].c_str(), nullptr);
        acc[key][1] += std::strtod(rows[r][idx.at("test_win")].c_str(), nullptr);
        acc[key][2] += std::strtod(rows[r][idx.at("test_ci_half")].c_str(), nullptr);
        counts[key] += 1;
      }
      CsvWriter csv(report_dir / "fig5_winrates.csv",
                    {"mode", "iteration", "train_win", "test_win", "test_ci_half",
                     "seeds"});
      for (const auto& [key, sums] : acc) {
        const int c = counts[key];
        csv.row({key.first, fmt_int(key.second), fmt_double(sums[0] / c),
                 fmt_double(sums[1] / c), fmt_double(sums[2] / c), fmt_int(c)});
      }
      fig5.present = true;
    } else {
      gaps.push_back("fig5_winrates.csv: missing rl/fig5_winrates.csv");
    }
    entries.push_back(fig5);

    ReportEntry fig6{"fig6_ablations.csv", "fig6",
                     "test win rates of the conditioned policy under replaced embeddings"};
    if (have(rl_dir / "fig6_ablations.csv")) {
      const Table rows = read_csv(rl_dir / "fig6_ablations.csv");
      const auto means = grouped_mean(rows, "eval_embedding", "test_win");
      CsvWriter csv(report_dir / "fig6_ablations.csv",
                    {"eval_embedding", "test_win_mean"});
      for (const auto& [mode, mean] : means) csv.row({mode, fmt_double(mean)});
      fig6.present = true;
    } else {
      gaps.push_back("fig6_ablations.csv: missing rl/fig6_ablations.csv");
    }
    entries.push_back(fig6);

    ReportEntry fig7{"fig7_headtohead_matrix.csv", "fig7",
                     "final head-to-head win rates between newly trained agents"};
    if (have(rl_dir / "fig7_matrix.csv")) {
      const Table rows = read_csv(rl_dir / "fig7_matrix.csv");
      const auto idx = header_index(rows);
      std::map<std::pair<std::string, std::string>, std::array<double, 3>> acc;
      std::map<std::pair<std::string, std::string>, int> counts;
      for (std::size_t r = 1; r < rows.size(); ++r) {
        const std::pair<std::string, std::string> key{rows[r][idx.at("first")],
                                                      rows[r][idx.at("second")]};
        acc[key][0] += std::strtod(rows[r][idx.at("win")].c_str(), nullptr);
        acc[key][1] += std::strtod(rows[r][idx.at("loss")].c_str(), nullptr);
        acc[key][2] += std::strtod(rows[r][idx.at("draw")].c_str(), nullptr);
        counts[key] += 1;
      }
      CsvWriter csv(report_dir / "fig7_headtohead_matrix.csv",
                    {"first", "second", "win_rate", "loss_rate", "draw_rate", "seeds"});
      for (const auto& [key, sums] : acc) {
        const int c = counts[key];
        csv.row({key.first, key.second, fmt_double(sums[0] / c), fmt_double(sums[1] / c),
                 fmt_double(sums[2] / c), fmt_int(c)});
      }
      fig7.present = true;
    } else {
      gaps.push_back("fig7_headtohead_matrix.csv: missing rl/fig7_matrix.csv");
    }
    entries.push_back(fig7);
  } else {
    ReportEntry table3{"table3_speaker_rewards.csv", "table3",
                       "average train and test rewards of speaker policies"};
    if (have(rl_dir / "table3_rows.csv")) {
      const Table rows = read_csv(rl_dir / "table3_rows.csv");
      const auto train_means = grouped_mean(rows, "arm", "train_reward");
      const auto test_means = grouped_mean(rows, "arm", "test_reward");
      CsvWriter csv(report_dir / "table3_speaker_rewards.csv",
                    {"arm", "train_reward", "test_reward"});
      for (const char* arm : {"baseline", "emb_im", "emb_id", "emb_hyb"}) {
        const auto it = train_means.find(arm);
        if (it == train_means.end()) continue;
        csv.row({arm, fmt_double(it->second), fmt_double(test_means.at(arm))});
      }
      table3.present = true;
    } else {
      gaps.push_back("table3_speaker_rewards.csv: missing rl/table3_rows.csv");
    }
    entries.push_back(table3);
  }

  json manifest_entries = json::array();
  int present_count = 0;
  for (const ReportEntry& entry : entries) {
    present_count += entry.present ? 1 : 0;
    manifest_entries.push_back({{"file", entry.file},
                                {"anchor", entry.anchor},
                                {"description", entry.description},
                                {"present", entry.present}});
  }
  std::ofstream manifest(report_dir / "report_manifest.json");
  manifest << json{{"artifacts", manifest_entries},
                   {"present", present_count},
                   {"gaps", gaps}}
                  .dump(2)
           << '\n';
  for (const std::string& gap : gaps) {
    std::fprintf(stderr, "warning: report gap: %s\n", gap.c_str());
  }
}

void cmd_run_all(const RunConfig& config) {
  cmd_gen_population(config);
  cmd_collect(config);
  cmd_split(config);
  cmd_train_embed(config);
  cmd_eval_embed(config);
  if (config.rl.enabled) cmd_train_rl(config);
  cmd_report(config);
}

}  // namespace pemb::cli
