#ifndef PEMB_EMBED_HPP_
#define PEMB_EMBED_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pemb/env.hpp"
#include "pemb/graph.hpp"
#include "pemb/nn.hpp"

namespace pemb::embed {

using nn::Vec;

// Episode representation function: a shared pair network maps each
// (observation, one-hot action) pair to an intermediate embedding, and the
// episode embedding is the arithmetic mean over pairs.
struct Encoder {
  nn::DenseNet pair_net;
  int obs_dim = 0;
  int act_arity = 0;
  int embed_dim = 0;
};

// Embedding-conditioned decoder: observation concatenated with an episode
// embedding maps to action logits.
struct ConditionalPolicy {
  nn::DenseNet decoder;
  int obs_dim = 0;
  int act_arity = 0;
  int embed_dim = 0;
};

enum class TrainVariant : std::uint8_t { kImitation = 0, kIdentification = 1, kHybrid = 2 };
enum class UpdateMode : std::uint8_t { kPerNegative = 0, kBatched = 1 };

struct TrainConfig {
  TrainVariant variant = TrainVariant::kHybrid;
  UpdateMode update_mode = UpdateMode::kPerNegative;
  double lambda = 0.1;
  bool disable_imitation = false;  // forces the identification-only path
  double learning_rate = 1e-3;
  int epochs = 50;
  int embed_dim = 16;
  std::vector<int> encoder_hidden{100, 100};
  std::vector<int> decoder_hidden{64, 64};
  std::uint64_t seed = 0;
  std::vector<double> lambda_grid{0.01, 0.05, 0.1, 0.5};
};

Encoder make_encoder(int obs_dim, int act_arity, int embed_dim,
                     const std::vector<int>& hidden, std::uint64_t seed);
ConditionalPolicy make_conditional_policy(int obs_dim, int act_arity, int embed_dim,
                                          const std::vector<int>& hidden,
                                          std::uint64_t seed);

// Observation concatenated with the one-hot action, the pair network input.
Vec encode_pair_input(const Encoder& encoder, const env::Obs& obs, int action);

Vec embed_episode(const Encoder& encoder, const env::AgentEpisode& episode);

// Squashed-distance comparison of a (positive, negative, reference) embedding
// triple: (1 + exp(|r - n| - |r - p|))^-2. Lies in (0, 1); equals 1/4 exactly
// when the two distances agree.
double triplet_loss_value(const Vec& positive, const Vec& negative, const Vec& reference);

struct ImitationResult {
  double loss = 0.0;
  nn::GradientBundle encoder_grads;
  nn::GradientBundle decoder_grads;
};

// Negative conditional log-likelihood of the target episode's actions under
// the policy conditioned on the reference episode's embedding, with exact
// gradients for both parameter sets. The two episodes must be distinct
// episodes of the same agent.
ImitationResult imitation_term(const Encoder& encoder, const ConditionalPolicy& policy,
                               const env::AgentEpisode& target,
                               const env::AgentEpisode& reference);

// Loss-only evaluation (validation / reporting path).
double imitation_loss_value(const Encoder& encoder, const ConditionalPolicy& policy,
                            const env::AgentEpisode& target,
                            const env::AgentEpisode& reference);

struct TripletResult {
  double loss = 0.0;
  nn::GradientBundle encoder_grads;
};

// Agent-identification term over episode embeddings; gradients flow through
// all three embeddings into the shared pair network.
TripletResult triplet_term(const Encoder& encoder, const env::AgentEpisode& positive,
                           const env::AgentEpisode& negative,
                           const env::AgentEpisode& reference);

// Mutable training state: parameters plus their optimizer moments.
struct Trainer {
  Encoder encoder;
  ConditionalPolicy policy;
  nn::AdamState encoder_opt;
  nn::AdamState policy_opt;
};

Trainer make_trainer(int obs_dim, int act_arity, const TrainConfig& config);

struct HybridStepResult {
  double loss_sum = 0.0;
  int updates = 0;
};

// One agent visit of the training loop. Per-negative mode recomputes the
// losses at the current parameters and applies one optimizer update per
// negative episode; batched mode sums the identification terms over all
// negatives and applies a single update.
HybridStepResult hybrid_step(Trainer& trainer, const env::AgentEpisode& positive,
                             const env::AgentEpisode& reference,
                             const std::vector<const env::AgentEpisode*>& negatives,
                             double lambda, UpdateMode mode,
                             bool disable_imitation = false);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct TrainResult {
  Encoder encoder;
  ConditionalPolicy policy;
  std::vector<EpochStats> curve;
  double final_valid_loss = 0.0;
};

// Runs config.epochs passes over the train-phase agents in seeded shuffled
// order; each visit draws a distinct episode pair and (for identification
// variants) one negative per other agent in ascending id order. Aborts with
// TrainingError when the loss stops being finite.
TrainResult train_embedding(const graph::InteractionGraph& graph,
                            const graph::SplitSpec& split, const TrainConfig& config);

// Per-(observation, action) validation imitation loss; the label-free model
// selection metric.
double validation_imitation_loss(const graph::InteractionGraph& graph,
                                 const graph::SplitSpec& split, const Encoder& encoder,
                                 const ConditionalPolicy& policy,
                                 graph::Phase phase = graph::Phase::kValid);

struct LambdaRow {
  double lambda = 0.0;
  double valid_loss = 0.0;
};

struct LambdaSelection {
  double lambda_star = 0.0;
  std::vector<LambdaRow> table;
  TrainResult best;
};

// Trains one model per grid point and keeps the one with the lowest
// validation imitation loss; ties break toward the smaller lambda.
LambdaSelection select_lambda(const graph::InteractionGraph& graph,
                              const graph::SplitSpec& split, const TrainConfig& base);

void save_encoder(const Encoder& encoder, const std::filesystem::path& dir,
                  const std::string& name);
Encoder load_encoder(const std::filesystem::path& dir, const std::string& name);
void save_conditional_policy(const ConditionalPolicy& policy,
                             const std::filesystem::path& dir, const std::string& name);
ConditionalPolicy load_conditional_policy(const std::filesystem::path& dir,
                                          const std::string& name);

}  // namespace pemb::embed

#endif  // PEMB_EMBED_HPP_
