#include "pemb/graph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "pemb/errors.hpp"

namespace pemb::graph {

using nlohmann::json;

std::vector<int> InteractionGraph::incident_edges(int agent_id) const {
  std::vector<int> out;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].a == agent_id || edges[e].b == agent_id) {
      out.push_back(static_cast<int>(e));
    }
  }
  return out;
}

std::vector<int> InteractionGraph::embedded_agents() const {
  std::vector<int> out;
  for (const AgentNode& node : agents) {
    if (topology == Topology::kClique || node.role == env::Role::kListener) {
      out.push_back(node.id);
    }
  }
  return out;
}

const std::vector<int>& SplitSpec::edges_of(Phase phase) const {
  switch (phase) {
    case Phase::kTrain: return train_edges;
    case Phase::kValid: return valid_edges;
    case Phase::kTest: return test_edges;
  }
  throw ConfigError("unknown phase");
}

namespace {

// Runs the preassigned rollouts, in parallel when asked; episode order and
// seeds are fixed beforehand so the artifact is identical for any thread
// count.
void run_rollouts(const env::MarkovGameSpec& spec,
                  const std::vector<const env::Policy*>& first,
                  const std::vector<const env::Policy*>& second,
                  const std::vector<std::uint64_t>& seeds,
                  const std::vector<std::array<int, 2>>& participants,
                  std::vector<env::Episode>& episodes, int threads) {
  const std::size_t n = seeds.size();
  episodes.resize(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      episodes[k] = env::rollout(spec, *first[k], *second[k], seeds[k], participants[k]);
      episodes[k].id = static_cast<long>(k);
    }
  };
  if (threads <= 1) {
    work(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(n, static_cast<std::size_t>(t) * chunk);
    const std::size_t end = std::min(n, begin + chunk);
    if (begin < end) pool.emplace_back(work, begin, end);
  }
  for (auto& th : pool) th.join();
}

}  // namespace

InteractionGraph build_arena_graph(const std::vector<agents::ArenaStyle>& styles,
                                   int episodes_per_edge,
                                   const env::MarkovGameSpec& spec, std::uint64_t seed,
                                   int threads) {
  if (episodes_per_edge < 2) {
    throw ConfigError("build_graph: need at least 2 episodes per edge");
  }
  if (styles.size() < 2) throw ConfigError("build_graph: need at least 2 agents");
  if (spec.kind != env::EnvKind::kArena) {
    throw ConfigError("build_arena_graph: spec is not an arena game");
  }

  InteractionGraph graph;
  graph.topology = Topology::kClique;
  graph.env_kind = spec.kind;
  graph.seed = seed;
  graph.episodes_per_edge = episodes_per_edge;
  const int n = static_cast<int>(styles.size());
  for (int i = 0; i < n; ++i) graph.agents.push_back({i, env::Role::kArenaAgent});

  std::vector<agents::ArenaStylePolicy> policies;
  policies.reserve(styles.size());
  for (const auto& style : styles) policies.emplace_back(style);

  std::vector<const env::Policy*> first, second;
  std::vector<std::uint64_t> seeds;
  std::vector<std::array<int, 2>> participants;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      Edge edge;
      edge.a = i;
      edge.b = j;
      const std::uint64_t edge_key =
          static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n) + j;
      for (int k = 0; k < episodes_per_edge; ++k) {
        edge.episode_ids.push_back(static_cast<long>(seeds.size()));
        seeds.push_back(derive_seed(seed, edge_key, static_cast<std::uint64_t>(k)));
        first.push_back(&policies[i]);
        second.push_back(&policies[j]);
        participants.push_back({i, j});
      }
      graph.edges.push_back(std::move(edge));
    }
  }
  run_rollouts(spec, first, second, seeds, participants, graph.episodes, threads);
  return graph;
}

InteractionGraph build_signal_graph(const agents::SignalPopulation& population,
                                    int episodes_per_edge,
                                    const env::MarkovGameSpec& spec, std::uint64_t seed,
                                    int threads) {
  if (episodes_per_edge < 2) {
    throw ConfigError("build_graph: need at least 2 episodes per edge");
  }
  if (spec.kind != env::EnvKind::kSignal) {
    throw ConfigError("build_signal_graph: spec is not a signal game");
  }

  InteractionGraph graph;
  graph.topology = Topology::kBipartite;
  graph.env_kind = spec.kind;
  graph.seed = seed;
  graph.episodes_per_edge = episodes_per_edge;
  const int n = static_cast<int>(population.speakers.size());
  for (int s = 0; s < n; ++s) graph.agents.push_back({s, env::Role::kSpeaker});
  for (int l = 0; l < n; ++l) graph.agents.push_back({n + l, env::Role::kListener});

  std::vector<agents::SpeakerPolicy> speaker_policies;
  std::vector<agents::ListenerPolicy> listener_policies;
  for (const auto& s : population.speakers) speaker_policies.emplace_back(s);
  for (const auto& l : population.listeners) listener_policies.emplace_back(l);

  std::vector<const env::Policy*> first, second;
  std::vector<std::uint64_t> seeds;
  std::vector<std::array<int, 2>> participants;
  for (int s = 0; s < n; ++s) {
    for (int l : population.speaker_partners[s]) {
      Edge edge;
      edge.a = s;
      edge.b = n + l;
      const std::uint64_t edge_key =
          static_cast<std::uint64_t>(s) * static_cast<std::uint64_t>(2 * n) + (n + l);
      for (int k = 0; k < episodes_per_edge; ++k) {
        edge.episode_ids.push_back(static_cast<long>(seeds.size()));
        seeds.push_back(derive_seed(seed, edge_key, static_cast<std::uint64_t>(k)));
        first.push_back(&speaker_policies[s]);
        second.push_back(&listener_policies[l]);
        participants.push_back({s, n + l});
      }
      graph.edges.push_back(std::move(edge));
    }
  }
  run_rollouts(spec, first, second, seeds, participants, graph.episodes, threads);
  return graph;
}

namespace {

bool covers_all_nodes_connected(const InteractionGraph& graph,
                                const std::vector<int>& edge_subset) {
  if (graph.agents.empty()) return false;
  std::vector<std::vector<int>> adjacency(graph.agents.size());
  for (int e : edge_subset) {
    adjacency[graph.edges[e].a].push_back(graph.edges[e].b);
    adjacency[graph.edges[e].b].push_back(graph.edges[e].a);
  }
  std::vector<char> seen(graph.agents.size(), 0);
  std::vector<int> stack{graph.agents.front().id};
  seen[graph.agents.front().id] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adjacency[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  return reached == graph.agents.size();
}

bool covers_embedded_role(const InteractionGraph& graph,
                          const std::vector<int>& edge_subset) {
  const std::vector<int> embedded = graph.embedded_agents();
  std::vector<char> covered(graph.agents.size(), 0);
  for (int e : edge_subset) {
    covered[graph.edges[e].a] = 1;
    covered[graph.edges[e].b] = 1;
  }
  for (int agent : embedded) {
    if (!covered[agent]) return false;
  }
  return true;
}

}  // namespace

SplitSpec split_weak(const InteractionGraph& graph, double train_fraction,
                     std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split_weak: train_fraction must lie in (0, 1)");
  }
  const int total = static_cast<int>(graph.edges.size());
  if (total < 1) throw ConfigError("split_weak: graph has no edges");
  {
    std::vector<int> all(total);
    std::iota(all.begin(), all.end(), 0);
    if (!covers_all_nodes_connected(graph, all) &&
        graph.topology == Topology::kClique) {
      throw SplitError("split_weak: graph is not connected");
    }
  }

  int n_train = static_cast<int>(std::lround(train_fraction * total));
  n_train = std::clamp(n_train, 1, total);

  Rng rng(derive_seed(seed, 0x57EA));
  SplitSpec split;
  split.mode = SplitMode::kWeak;
  split.seed = seed;

  std::vector<int> order(total);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::iota(order.begin(), order.end(), 0);

    if (graph.topology == Topology::kBipartite) {
      // The ring cannot stay connected under holdout; instead guarantee every
      // embedded-role agent keeps at least one training edge by picking one
      // incident edge per listener first.
      std::vector<int> chosen;
      std::vector<char> taken(total, 0);
      for (int agent : graph.embedded_agents()) {
        std::vector<int> incident = graph.incident_edges(agent);
        const int pick = incident[rng.uniform_int(static_cast<int>(incident.size()))];
        if (!taken[pick]) {
          taken[pick] = 1;
          chosen.push_back(pick);
        }
      }
      std::vector<int> rest;
      for (int e = 0; e < total; ++e)
        if (!taken[e]) rest.push_back(e);
      rng.shuffle(rest);
      while (static_cast<int>(chosen.size()) < n_train && !rest.empty()) {
        chosen.push_back(rest.back());
        rest.pop_back();
      }
      if (!covers_embedded_role(graph, chosen)) continue;
      split.train_edges = chosen;
      std::sort(split.train_edges.begin(), split.train_edges.end());
      rng.shuffle(rest);
      const std::size_t half = rest.size() / 2;
      split.valid_edges.assign(rest.begin(), rest.begin() + half);
      split.test_edges.assign(rest.begin() + half, rest.end());
    } else {
      rng.shuffle(order);
      std::vector<int> train(order.begin(), order.begin() + n_train);
      if (!covers_all_nodes_connected(graph, train)) continue;
      split.train_edges = std::move(train);
      std::sort(split.train_edges.begin(), split.train_edges.end());
      std::vector<int> rest(order.begin() + n_train, order.end());
      const std::size_t half = rest.size() / 2;
      split.valid_edges.assign(rest.begin(), rest.begin() + half);
      split.test_edges.assign(rest.begin() + half, rest.end());
    }
    std::sort(split.valid_edges.begin(), split.valid_edges.end());
    std::sort(split.test_edges.begin(), split.test_edges.end());
    split.degenerate_holdout = (total - static_cast<int>(split.train_edges.size())) <= 1;
    return split;
  }
  throw SplitError("split_weak: could not keep the train graph connected at this fraction");
}

SplitSpec split_strong(const InteractionGraph& graph, std::array<int, 3> counts,
                       std::uint64_t seed) {
  const std::vector<int> embeddable = graph.embedded_agents();
  const int total = static_cast<int>(embeddable.size());
  if (counts[0] + counts[1] + counts[2] != total) {
    throw ConfigError("split_strong: counts must sum to the embedded agent count");
  }
  if (counts[0] < 2 || counts[1] < 1 || counts[2] < 1) {
    throw ConfigError("split_strong: each group needs agents (train at least 2)");
  }

  Rng rng(derive_seed(seed, 0x57B0));
  std::vector<int> order = embeddable;
  rng.shuffle(order);

  SplitSpec split;
  split.mode = SplitMode::kStrong;
  split.seed = seed;
  split.train_nodes.assign(order.begin(), order.begin() + counts[0]);
  split.valid_nodes.assign(order.begin() + counts[0],
                           order.begin() + counts[0] + counts[1]);
  split.test_nodes.assign(order.begin() + counts[0] + counts[1], order.end());
  std::sort(split.train_nodes.begin(), split.train_nodes.end());
  std::sort(split.valid_nodes.begin(), split.valid_nodes.end());
  std::sort(split.test_nodes.begin(), split.test_nodes.end());

  auto group_of = [&](int agent) {
    if (std::binary_search(split.train_nodes.begin(), split.train_nodes.end(), agent))
      return 0;
    if (std::binary_search(split.valid_nodes.begin(), split.valid_nodes.end(), agent))
      return 1;
    if (std::binary_search(split.test_nodes.begin(), split.test_nodes.end(), agent))
      return 2;
    return -1;  // non-embedded role (bipartite speakers)
  };

  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const int ga = group_of(graph.edges[e].a);
    const int gb = group_of(graph.edges[e].b);
    const int idx = static_cast<int>(e);
    if (graph.topology == Topology::kBipartite) {
      // Exactly one endpoint is embedded; its group owns the edge.
      const int g = ga >= 0 ? ga : gb;
      if (g == 0) split.train_edges.push_back(idx);
      else if (g == 1) split.valid_edges.push_back(idx);
      else split.test_edges.push_back(idx);
      continue;
    }
    if (ga == 0 && gb == 0) split.train_edges.push_back(idx);
    else if (ga == 1 && gb == 1) split.valid_edges.push_back(idx);
    else if (ga == 2 && gb == 2) split.test_edges.push_back(idx);
    else if ((ga == 0 && gb == 1) || (ga == 1 && gb == 0))
      split.adapt_valid_edges.push_back(idx);
    else if ((ga == 0 && gb == 2) || (ga == 2 && gb == 0))
      split.adapt_test_edges.push_back(idx);
    // valid-test cross edges stay unused
  }
  return split;
}

std::vector<long> episodes_for_agent(const InteractionGraph& graph,
                                     const SplitSpec& split, int agent_id, Phase phase) {
  std::vector<long> out;
  for (int e : split.edges_of(phase)) {
    const Edge& edge = graph.edges[e];
    if (edge.a == agent_id || edge.b == agent_id) {
      out.insert(out.end(), edge.episode_ids.begin(), edge.episode_ids.end());
    }
  }
  return out;
}

EpisodePairSampler::EpisodePairSampler(std::vector<long> episode_ids, std::uint64_t seed)
    : ids_(std::move(episode_ids)), cursor_(0), rng_(derive_seed(seed, 0x9A12)) {
  if (ids_.size() < 2) {
    throw SamplingError("episode pair sampler needs at least 2 episodes");
  }
  rng_.shuffle(ids_);
}

std::pair<long, long> EpisodePairSampler::next() {
  if (cursor_ + 1 >= ids_.size()) {
    rng_.shuffle(ids_);
    cursor_ = 0;
  }
  const std::pair<long, long> pair{ids_[cursor_], ids_[cursor_ + 1]};
  cursor_ += 2;
  return pair;
}

// --- persistence ---

namespace {

json split_to_json(const SplitSpec& split) {
  return json{{"mode", split.mode == SplitMode::kWeak ? "weak" : "strong"},
              {"seed", split.seed},
              {"train_edges", split.train_edges},
              {"valid_edges", split.valid_edges},
              {"test_edges", split.test_edges},
              {"train_nodes", split.train_nodes},
              {"valid_nodes", split.valid_nodes},
              {"test_nodes", split.test_nodes},
              {"adapt_valid_edges", split.adapt_valid_edges},
              {"adapt_test_edges", split.adapt_test_edges},
              {"degenerate_holdout", split.degenerate_holdout}};
}

SplitSpec split_from_json(const json& j) {
  SplitSpec split;
  split.mode = j.at("mode").get<std::string>() == "weak" ? SplitMode::kWeak
                                                         : SplitMode::kStrong;
  split.seed = j.at("seed").get<std::uint64_t>();
  split.train_edges = j.at("train_edges").get<std::vector<int>>();
  split.valid_edges = j.at("valid_edges").get<std::vector<int>>();
  split.test_edges = j.at("test_edges").get<std::vector<int>>();
  split.train_nodes = j.at("train_nodes").get<std::vector<int>>();
  split.valid_nodes = j.at("valid_nodes").get<std::vector<int>>();
  split.test_nodes = j.at("test_nodes").get<std::vector<int>>();
  split.adapt_valid_edges = j.at("adapt_valid_edges").get<std::vector<int>>();
  split.adapt_test_edges = j.at("adapt_test_edges").get<std::vector<int>>();
  split.degenerate_holdout = j.at("degenerate_holdout").get<bool>();
  return split;
}

}  // namespace

void save_graph(const InteractionGraph& graph, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json agents_json = json::array();
  for (const AgentNode& node : graph.agents) {
    agents_json.push_back({{"id", node.id}, {"role", static_cast<int>(node.role)}});
  }
  json edges_json = json::array();
  for (const Edge& edge : graph.edges) {
    edges_json.push_back(
        {{"a", edge.a}, {"b", edge.b}, {"episode_ids", edge.episode_ids}});
  }
  json j{{"topology", graph.topology == Topology::kClique ? "clique" : "bipartite"},
         {"env", graph.env_kind == env::EnvKind::kArena ? "arena" : "signal"},
         {"seed", graph.seed},
         {"episodes_per_edge", graph.episodes_per_edge},
         {"agents", agents_json},
         {"edges", edges_json}};
  std::ofstream out(dir / "graph.json");
  if (!out) throw IoError("cannot write graph manifest");
  out << j.dump(2) << '\n';
  env::save_episodes_jsonl(graph.episodes, dir / "episodes.jsonl");
  env::save_episodes_binary(graph.episodes, dir / "episodes.bin");
}

InteractionGraph load_graph(const std::filesystem::path& dir) {
  std::ifstream in(dir / "graph.json");
  if (!in) throw IoError("cannot open graph manifest in " + dir.string());
  json j = json::parse(in);
  InteractionGraph graph;
  graph.topology = j.at("topology").get<std::string>() == "clique"
                       ? Topology::kClique
                       : Topology::kBipartite;
  graph.env_kind =
      j.at("env").get<std::string>() == "arena" ? env::EnvKind::kArena : env::EnvKind::kSignal;
  graph.seed = j.at("seed").get<std::uint64_t>();
  graph.episodes_per_edge = j.at("episodes_per_edge").get<int>();
  for (const json& a : j.at("agents")) {
    graph.agents.push_back(
        {a.at("id").get<int>(), static_cast<env::Role>(a.at("role").get<int>())});
  }
  for (const json& e : j.at("edges")) {
    Edge edge;
    edge.a = e.at("a").get<int>();
    edge.b = e.at("b").get<int>();
    edge.episode_ids = e.at("episode_ids").get<std::vector<long>>();
    graph.edges.push_back(std::move(edge));
  }
  const auto binary_store = dir / "episodes.bin";
  graph.episodes = std::filesystem::exists(binary_store)
                       ? env::load_episodes_binary(binary_store)
                       : env::load_episodes_jsonl(dir / "episodes.jsonl");
  return graph;
}

void save_split(const SplitSpec& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write split manifest: " + path.string());
  out << split_to_json(split).dump(2) << '\n';
}

SplitSpec load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split manifest: " + path.string());
  return split_from_json(json::parse(in));
}

}  // namespace pemb::graph
