#ifndef PEMB_GRAPH_HPP_
#define PEMB_GRAPH_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "pemb/agents.hpp"
#include "pemb/env.hpp"

namespace pemb::graph {

enum class Topology : std::uint8_t { kClique = 0, kBipartite = 1 };
enum class SplitMode : std::uint8_t { kWeak = 0, kStrong = 1 };
enum class Phase : std::uint8_t { kTrain = 0, kValid = 1, kTest = 2 };

struct AgentNode {
  int id = -1;
  env::Role role = env::Role::kArenaAgent;
};

struct Edge {
  int a = -1;  // arena: lower agent id; bipartite: speaker id
  int b = -1;
  std::vector<long> episode_ids;
};

// Agents as nodes, per-pair episode sets as edges. Episodes live in one flat
// store indexed by id; edges reference them.
struct InteractionGraph {
  Topology topology = Topology::kClique;
  env::EnvKind env_kind = env::EnvKind::kArena;
  std::uint64_t seed = 0;
  int episodes_per_edge = 0;
  std::vector<AgentNode> agents;
  std::vector<Edge> edges;
  std::vector<env::Episode> episodes;

  const env::Episode& episode(long id) const { return episodes.at(id); }
  std::vector<int> incident_edges(int agent_id) const;
  // The agents the representation function embeds: every agent for cliques,
  // the listener side for bipartite graphs.
  std::vector<int> embedded_agents() const;
};

// Train/valid/test partition of a graph. Weak splits partition edges; strong
// splits partition nodes (the embedded-role side for bipartite graphs) and
// take within-group edges, exposing cross-group edges as adaptation sets.
struct SplitSpec {
  SplitMode mode = SplitMode::kWeak;
  std::uint64_t seed = 0;
  std::vector<int> train_edges, valid_edges, test_edges;
  std::vector<int> train_nodes, valid_nodes, test_nodes;
  std::vector<int> adapt_valid_edges, adapt_test_edges;
  bool degenerate_holdout = false;

  const std::vector<int>& edges_of(Phase phase) const;
};

// Builds a clique over scripted arena styles; agent ids are style indices.
// Every edge holds exactly episodes_per_edge rollouts with seeds derived
// from the graph seed. threads parallelizes collection without changing
// the artifact (per-episode seeds are preassigned).
InteractionGraph build_arena_graph(const std::vector<agents::ArenaStyle>& styles,
                                   int episodes_per_edge,
                                   const env::MarkovGameSpec& spec, std::uint64_t seed,
                                   int threads = 1);

// Builds the sparse bipartite speaker-listener graph from the population's
// ring pairing. Speaker ids are 0..n-1, listener ids n..2n-1.
InteractionGraph build_signal_graph(const agents::SignalPopulation& population,
                                    int episodes_per_edge,
                                    const env::MarkovGameSpec& spec, std::uint64_t seed,
                                    int threads = 1);

// Uniform edge partition with approximately train_fraction of edges kept for
// training and the rest split evenly between validation and test. Clique
// train graphs must stay connected (resampled up to 1000 times); bipartite
// train graphs must keep at least one edge per embedded-role agent, which is
// seeded constructively since the ring cannot stay connected under holdout.
SplitSpec split_weak(const InteractionGraph& graph, double train_fraction,
                     std::uint64_t seed);

// Node partition into (n_train, n_valid, n_test); valid/test edges are the
// within-group interactions, cross-group edges land in the adaptation sets.
SplitSpec split_strong(const InteractionGraph& graph, std::array<int, 3> counts,
                       std::uint64_t seed);

// Episode ids available for one agent within a phase, in stable order.
std::vector<long> episodes_for_agent(const InteractionGraph& graph,
                                     const SplitSpec& split, int agent_id, Phase phase);

// Streams distinct episode pairs for one agent: each pass consumes a fresh
// shuffle two-at-a-time, so no episode repeats within a pass and the two
// pair members always differ.
class EpisodePairSampler {
 public:
  EpisodePairSampler(std::vector<long> episode_ids, std::uint64_t seed);
  std::pair<long, long> next();

 private:
  std::vector<long> ids_;
  std::size_t cursor_;
  Rng rng_;
};

void save_graph(const InteractionGraph& graph, const std::filesystem::path& dir);
InteractionGraph load_graph(const std::filesystem::path& dir);

void save_split(const SplitSpec& split, const std::filesystem::path& path);
SplitSpec load_split(const std::filesystem::path& path);

}  // namespace pemb::graph

#endif  // PEMB_GRAPH_HPP_
