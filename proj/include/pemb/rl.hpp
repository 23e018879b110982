#ifndef PEMB_RL_HPP_
#define PEMB_RL_HPP_

#include <cstdint>
#include <map>
#include <vector>

#include "pemb/agents.hpp"
#include "pemb/embed.hpp"
#include "pemb/env.hpp"
#include "pemb/graph.hpp"
#include "pemb/nn.hpp"

namespace pemb::rl {

using nn::Vec;

// Synthetic participant id for the agent being trained; scripted partners
// keep their population ids.
inline constexpr int kLearnerId = -1;

enum class EmbeddingMode : std::uint8_t {
  kNone = 0,     // baseline: embedding slot stays zero
  kOnline = 1,   // from the learner's own previous interaction
  kOffline = 2,  // precomputed from partner-vs-partner episodes
  kZero = 3,     // ablation: zeros despite a trained encoder
  kRand = 4,     // ablation: a different random partner's true embedding
};

const char* embedding_mode_name(EmbeddingMode mode);

// Policy network over (observation ++ partner embedding). The baseline mode
// feeds zeros through the same architecture, which keeps the parameter
// count of every mode identical.
struct ConditionedRLPolicy {
  nn::DenseNet net;
  int obs_dim = 0;
  int act_arity = 0;
  int embed_dim = 0;

  std::size_t parameter_count() const { return net.parameter_count(); }
};

ConditionedRLPolicy make_rl_policy(int obs_dim, int act_arity, int embed_dim,
                                   const std::vector<int>& hidden, std::uint64_t seed);

// Win/loss/draw tallies with Wilson-interval uncertainty on the win rate.
struct MatchStats {
  int wins = 0;
  int losses = 0;
  int draws = 0;

  int games() const { return wins + losses + draws; }
  double win_rate() const;
  double loss_rate() const;
  double draw_rate() const;
  double win_rate_half_width() const;  // 95% Wilson interval half-width

  void add(const MatchStats& other);
};

// Serves partner embeddings per mode and tracks online history. Online
// embeddings always derive from episodes completed strictly before the
// iteration that consumes them; the audit log records both sides.
struct EmbeddingProvider {
  EmbeddingMode mode = EmbeddingMode::kNone;
  int embed_dim = 0;
  const embed::Encoder* encoder = nullptr;  // frozen; unused for none/zero
  std::map<int, Vec> offline;               // per-partner offline embeddings
  std::map<int, Vec> online;                // last refreshed online embeddings
  std::map<int, long> online_source;        // partner -> iteration of source episode

  struct AuditEntry {
    int partner = 0;
    long used_at = 0;
    long source_iteration = -1;
  };
  mutable std::vector<AuditEntry> audit;

  Vec embedding_for(int partner, long iteration, Rng& rng) const;
  void refresh_online(int partner, const env::AgentEpisode& episode, long iteration);
};

EmbeddingProvider make_provider(EmbeddingMode mode, int embed_dim,
                                const embed::Encoder* encoder = nullptr);

// Offline embeddings: the mean episode embedding of each partner over its
// episodes in the interaction graph.
std::map<int, Vec> offline_embedding_table(const embed::Encoder& encoder,
                                           const graph::InteractionGraph& graph,
                                           const std::vector<int>& partner_ids);

// --- REINFORCE ---

struct RlStep {
  Vec input;  // observation ++ embedding, as fed to the network
  int action = 0;
};

struct RlEpisodeSample {
  std::vector<RlStep> steps;
  double episode_return = 0.0;
};

// Gradient of the negated surrogate (1/B) sum_e (R_e - mean R) sum_t log pi.
// Embedding inputs are constants; nothing flows back into an encoder.
nn::GradientBundle reinforce_gradient(const ConditionedRLPolicy& policy,
                                      const std::vector<RlEpisodeSample>& batch);

double reinforce_surrogate(const ConditionedRLPolicy& policy,
                           const std::vector<RlEpisodeSample>& batch);

void reinforce_update(ConditionedRLPolicy& policy,
                      const std::vector<RlEpisodeSample>& batch, nn::AdamState& state);

// --- competitive training ---

struct ArenaPartner {
  int id = 0;
  agents::ArenaStyle style;
};

struct RlConfig {
  int iterations = 240;
  int batch_episodes = 16;
  int eval_every = 40;
  int eval_games = 50;
  double learning_rate = 3e-3;
  std::vector<int> hidden{64, 64};
  int embed_dim = 16;
  std::uint64_t seed = 0;
};

struct RateTriple {
  double win = 0.0, loss = 0.0, draw = 0.0, ci_half = 0.0;
};

struct CurvePoint {
  int iteration = 0;
  RateTriple train;
  RateTriple test;
};

struct ConditionedAgentResult {
  ConditionedRLPolicy policy;
  std::vector<CurvePoint> curve;
  MatchStats final_train;
  MatchStats final_test;
  // Controlled-comparison audit: the environment seeds and partner order are
  // a pure function of the config seed, so runs differing only in embedding
  // mode see identical schedules.
  std::vector<int> partner_schedule;
  std::vector<std::uint64_t> episode_seeds;
};

// Round-robin REINFORCE against the training partners with periodic frozen
// evaluations (eval_games per partner) against both partner sets.
ConditionedAgentResult train_conditioned_agent(
    const env::MarkovGameSpec& spec, const std::vector<ArenaPartner>& train_partners,
    const std::vector<ArenaPartner>& eval_partners, EmbeddingProvider& provider,
    const RlConfig& config);

// Frozen-policy evaluation; per-partner games with isolated seeds.
MatchStats evaluate_arena_policy(const env::MarkovGameSpec& spec,
                                 const ConditionedRLPolicy& policy,
                                 const std::vector<ArenaPartner>& partners,
                                 const EmbeddingProvider& provider, int games_per_partner,
                                 std::uint64_t seed);

// Pits two trained policies against each other; online histories are isolated
// inside the pairing. Returns stats for the first policy.
MatchStats head_to_head(const env::MarkovGameSpec& spec, const ConditionedRLPolicy& first,
                        EmbeddingProvider& first_provider,
                        const ConditionedRLPolicy& second,
                        EmbeddingProvider& second_provider, int n_games,
                        std::uint64_t seed);

// --- cooperative speaker training ---

struct ListenerPartner {
  int id = 0;
  agents::ListenerSpec spec;
};

struct SpeakerRlConfig {
  int iterations = 300;
  int batch_episodes = 16;
  int eval_every = 30;
  int valid_episodes_per_listener = 20;
  int test_episodes_per_listener = 100;
  double learning_rate = 3e-3;
  std::vector<int> hidden{64, 64};
  int embed_dim = 16;
  std::uint64_t seed = 0;
};

struct SpeakerCurvePoint {
  int iteration = 0;
  double train_reward = 0.0;
  double valid_reward = 0.0;
};

struct ConditionedSpeakerResult {
  ConditionedRLPolicy policy;  // best-validated snapshot
  std::vector<SpeakerCurvePoint> curve;
  double mean_train_reward = 0.0;
  double mean_valid_reward = 0.0;
  double mean_test_reward = 0.0;
};

// REINFORCE over terminal rewards against the training listeners; keeps the
// best-validated snapshot and reports its mean train/test rewards.
ConditionedSpeakerResult train_conditioned_speaker(
    const env::MarkovGameSpec& spec, const std::vector<ListenerPartner>& train_listeners,
    const std::vector<ListenerPartner>& valid_listeners,
    const std::vector<ListenerPartner>& test_listeners, EmbeddingProvider& provider,
    const SpeakerRlConfig& config);

double evaluate_speaker(const env::MarkovGameSpec& spec, const ConditionedRLPolicy& policy,
                        const std::vector<ListenerPartner>& listeners,
                        const EmbeddingProvider& provider, int episodes_per_listener,
                        std::uint64_t seed);

}  // namespace pemb::rl

#endif  // PEMB_RL_HPP_
