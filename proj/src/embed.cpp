#include "pemb/embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "pemb/errors.hpp"

namespace pemb::embed {

using nlohmann::json;

namespace {

std::vector<int> net_layers(int input_dim, const std::vector<int>& hidden, int output_dim) {
  std::vector<int> layers{input_dim};
  layers.insert(layers.end(), hidden.begin(), hidden.end());
  layers.push_back(output_dim);
  return layers;
}

void check_episode(const env::AgentEpisode& episode, const char* what) {
  if (episode.size() == 0) {
    throw ShapeError(std::string(what) + ": empty episode");
  }
}

}  // namespace

Encoder make_encoder(int obs_dim, int act_arity, int embed_dim,
                     const std::vector<int>& hidden, std::uint64_t seed) {
  Encoder encoder;
  encoder.obs_dim = obs_dim;
  encoder.act_arity = act_arity;
  encoder.embed_dim = embed_dim;
  encoder.pair_net = nn::mlp_init(net_layers(obs_dim + act_arity, hidden, embed_dim), seed);
  return encoder;
}

ConditionalPolicy make_conditional_policy(int obs_dim, int act_arity, int embed_dim,
                                          const std::vector<int>& hidden,
                                          std::uint64_t seed) {
  ConditionalPolicy policy;
  policy.obs_dim = obs_dim;
  policy.act_arity = act_arity;
  policy.embed_dim = embed_dim;
  policy.decoder = nn::mlp_init(net_layers(obs_dim + embed_dim, hidden, act_arity), seed);
  return policy;
}

Vec encode_pair_input(const Encoder& encoder, const env::Obs& obs, int action) {
  if (static_cast<int>(obs.size()) != encoder.obs_dim) {
    throw ShapeError("encoder: observation dimension mismatch");
  }
  if (action < 0 || action >= encoder.act_arity) {
    throw ShapeError("encoder: action index out of range");
  }
  Vec input(obs);
  input.resize(obs.size() + encoder.act_arity, 0.0);
  input[obs.size() + action] = 1.0;
  return input;
}

Vec embed_episode(const Encoder& encoder, const env::AgentEpisode& episode) {
  check_episode(episode, "embed_episode");
  Vec mean(encoder.embed_dim, 0.0);
  for (std::size_t k = 0; k < episode.size(); ++k) {
    const Vec out = nn::mlp_forward(
        encoder.pair_net, encode_pair_input(encoder, episode.observations[k],
                                            episode.actions[k]));
    for (int i = 0; i < encoder.embed_dim; ++i) mean[i] += out[i];
  }
  const double inv = 1.0 / static_cast<double>(episode.size());
  for (double& x : mean) x *= inv;
  return mean;
}

namespace {

// Embedding plus the per-pair forward caches needed for the backward pass.
struct EmbeddingWork {
  Vec embedding;
  std::vector<nn::ForwardCache> caches;
};

EmbeddingWork embed_with_caches(const Encoder& encoder, const env::AgentEpisode& episode) {
  EmbeddingWork work;
  work.embedding.assign(encoder.embed_dim, 0.0);
  work.caches.resize(episode.size());
  for (std::size_t k = 0; k < episode.size(); ++k) {
    const Vec out = nn::mlp_forward(
        encoder.pair_net,
        encode_pair_input(encoder, episode.observations[k], episode.actions[k]),
        &work.caches[k]);
    for (int i = 0; i < encoder.embed_dim; ++i) work.embedding[i] += out[i];
  }
  const double inv = 1.0 / static_cast<double>(episode.size());
  for (double& x : work.embedding) x *= inv;
  return work;
}

// Chains d(loss)/d(embedding) through the mean into the pair network.
void backprop_embedding(const Encoder& encoder, const EmbeddingWork& work,
                        const Vec& embedding_grad, nn::GradientBundle& accum) {
  const double inv = 1.0 / static_cast<double>(work.caches.size());
  Vec outer(embedding_grad);
  for (double& x : outer) x *= inv;
  for (const nn::ForwardCache& cache : work.caches) {
    nn::mlp_backward_accum(encoder.pair_net, cache, outer, 1.0, accum, nullptr);
  }
}

void check_imitation_contract(const env::AgentEpisode& target,
                              const env::AgentEpisode& reference) {
  check_episode(target, "imitation_term");
  check_episode(reference, "imitation_term");
  if (target.agent_id != reference.agent_id) {
    throw SamplingError("imitation_term: episodes must come from the same agent");
  }
  if (target.source_id >= 0 && target.source_id == reference.source_id) {
    throw SamplingError("imitation_term: target and reference must be distinct episodes");
  }
}

}  // namespace

ImitationResult imitation_term(const Encoder& encoder, const ConditionalPolicy& policy,
                               const env::AgentEpisode& target,
                               const env::AgentEpisode& reference) {
  check_imitation_contract(target, reference);

  ImitationResult result;
  result.encoder_grads = nn::zero_gradients(encoder.pair_net);
  result.decoder_grads = nn::zero_gradients(policy.decoder);

  const EmbeddingWork reference_work = embed_with_caches(encoder, reference);

  Vec embedding_grad(policy.embed_dim, 0.0);
  nn::ForwardCache cache;
  Vec input_grad;
  for (std::size_t t = 0; t < target.size(); ++t) {
    Vec input(target.observations[t]);
    if (static_cast<int>(input.size()) != policy.obs_dim) {
      throw ShapeError("imitation_term: observation dimension mismatch");
    }
    input.insert(input.end(), reference_work.embedding.begin(),
                 reference_work.embedding.end());
    const Vec logits = nn::mlp_forward(policy.decoder, input, &cache);
    const auto [log_prob, logit_grad] = nn::categorical_log_prob(logits, target.actions[t]);
    result.loss -= log_prob;
    // d(-log pi)/d(logits) = softmax - onehot
    Vec loss_grad(logit_grad.size());
    for (std::size_t i = 0; i < logit_grad.size(); ++i) loss_grad[i] = -logit_grad[i];
    nn::mlp_backward_accum(policy.decoder, cache, loss_grad, 1.0, result.decoder_grads,
                           &input_grad);
    for (int i = 0; i < policy.embed_dim; ++i) {
      embedding_grad[i] += input_grad[policy.obs_dim + i];
    }
  }
  backprop_embedding(encoder, reference_work, embedding_grad, result.encoder_grads);
  return result;
}

double imitation_loss_value(const Encoder& encoder, const ConditionalPolicy& policy,
                            const env::AgentEpisode& target,
                            const env::AgentEpisode& reference) {
  check_imitation_contract(target, reference);
  const Vec embedding = embed_episode(encoder, reference);
  double loss = 0.0;
  for (std::size_t t = 0; t < target.size(); ++t) {
    Vec input(target.observations[t]);
    input.insert(input.end(), embedding.begin(), embedding.end());
    const Vec logits = nn::mlp_forward(policy.decoder, input);
    loss -= nn::categorical_log_prob(logits, target.actions[t]).first;
  }
  return loss;
}

double triplet_loss_value(const Vec& positive, const Vec& negative, const Vec& reference) {
  if (positive.size() != reference.size() || negative.size() != reference.size()) {
    throw ShapeError("triplet_loss_value: embedding dimension mismatch");
  }
  double dn = 0.0, dp = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    dn += (reference[i] - negative[i]) * (reference[i] - negative[i]);
    dp += (reference[i] - positive[i]) * (reference[i] - positive[i]);
  }
  const double s = std::sqrt(dn) - std::sqrt(dp);
  // (1 + e^s)^-2 via the stable inverse q = 1/(1 + e^s).
  const double q = s > 0.0 ? std::exp(-s) / (1.0 + std::exp(-s)) : 1.0 / (1.0 + std::exp(s));
  return q * q;
}

TripletResult triplet_term(const Encoder& encoder, const env::AgentEpisode& positive,
                           const env::AgentEpisode& negative,
                           const env::AgentEpisode& reference) {
  check_episode(positive, "triplet_term");
  check_episode(negative, "triplet_term");
  check_episode(reference, "triplet_term");
  if (positive.agent_id != reference.agent_id) {
    throw SamplingError("triplet_term: positive and reference must share an agent");
  }
  if (positive.source_id >= 0 && positive.source_id == reference.source_id) {
    throw SamplingError("triplet_term: positive and reference must be distinct episodes");
  }
  if (negative.agent_id == positive.agent_id) {
    throw SamplingError("triplet_term: negative must come from a different agent");
  }

  const EmbeddingWork pos = embed_with_caches(encoder, positive);
  const EmbeddingWork neg = embed_with_caches(encoder, negative);
  const EmbeddingWork ref = embed_with_caches(encoder, reference);

  const int d = encoder.embed_dim;
  Vec rn(d), rp(d);
  double dn = 0.0, dp = 0.0;
  for (int i = 0; i < d; ++i) {
    rn[i] = ref.embedding[i] - neg.embedding[i];
    rp[i] = ref.embedding[i] - pos.embedding[i];
    dn += rn[i] * rn[i];
    dp += rp[i] * rp[i];
  }
  const double norm_rn = std::sqrt(dn);
  const double norm_rp = std::sqrt(dp);
  const double s = norm_rn - norm_rp;
  const double q = s > 0.0 ? std::exp(-s) / (1.0 + std::exp(-s)) : 1.0 / (1.0 + std::exp(s));

  TripletResult result;
  result.loss = q * q;
  result.encoder_grads = nn::zero_gradients(encoder.pair_net);

  // dL/ds for L = q^2 with q = (1 + e^s)^-1.
  const double dL_ds = -2.0 * q * q * (1.0 - q);

  Vec grad_ref(d, 0.0), grad_neg(d, 0.0), grad_pos(d, 0.0);
  for (int i = 0; i < d; ++i) {
    const double unit_rn = norm_rn > 0.0 ? rn[i] / norm_rn : 0.0;
    const double unit_rp = norm_rp > 0.0 ? rp[i] / norm_rp : 0.0;
    grad_ref[i] = dL_ds * (unit_rn - unit_rp);
    grad_neg[i] = dL_ds * -unit_rn;
    grad_pos[i] = dL_ds * unit_rp;
  }
  backprop_embedding(encoder, pos, grad_pos, result.encoder_grads);
  backprop_embedding(encoder, neg, grad_neg, result.encoder_grads);
  backprop_embedding(encoder, ref, grad_ref, result.encoder_grads);
  return result;
}

Trainer make_trainer(int obs_dim, int act_arity, const TrainConfig& config) {
  Trainer trainer;
  trainer.encoder = make_encoder(obs_dim, act_arity, config.embed_dim,
                                 config.encoder_hidden, derive_seed(config.seed, 1));
  trainer.policy = make_conditional_policy(obs_dim, act_arity, config.embed_dim,
                                           config.decoder_hidden,
                                           derive_seed(config.seed, 2));
  trainer.encoder_opt = nn::adam_init(trainer.encoder.pair_net, config.learning_rate);
  trainer.policy_opt = nn::adam_init(trainer.policy.decoder, config.learning_rate);
  return trainer;
}

HybridStepResult hybrid_step(Trainer& trainer, const env::AgentEpisode& positive,
                             const env::AgentEpisode& reference,
                             const std::vector<const env::AgentEpisode*>& negatives,
                             double lambda, UpdateMode mode, bool disable_imitation) {
  if (lambda < 0.0) throw ConfigError("hybrid_step: lambda must be non-negative");
  if (negatives.empty()) {
    throw ConfigError("hybrid_step: need at least one negative agent");
  }

  HybridStepResult result;
  if (mode == UpdateMode::kPerNegative) {
    for (const env::AgentEpisode* neg : negatives) {
      nn::GradientBundle encoder_grads = nn::zero_gradients(trainer.encoder.pair_net);
      nn::GradientBundle decoder_grads = nn::zero_gradients(trainer.policy.decoder);
      double loss = 0.0;
      if (!disable_imitation) {
        ImitationResult im = imitation_term(trainer.encoder, trainer.policy, positive,
                                            reference);
        loss += im.loss;
        encoder_grads.add_scaled(im.encoder_grads, 1.0);
        decoder_grads.add_scaled(im.decoder_grads, 1.0);
      }
      if (lambda > 0.0) {
        TripletResult id = triplet_term(trainer.encoder, positive, *neg, reference);
        loss += lambda * id.loss;
        encoder_grads.add_scaled(id.encoder_grads, lambda);
      }
      nn::adam_step(trainer.encoder.pair_net, encoder_grads, trainer.encoder_opt);
      nn::adam_step(trainer.policy.decoder, decoder_grads, trainer.policy_opt);
      result.loss_sum += loss;
      result.updates += 1;
    }
    return result;
  }

  // Batched: imitation once plus the summed identification over negatives,
  // one update.
  nn::GradientBundle encoder_grads = nn::zero_gradients(trainer.encoder.pair_net);
  nn::GradientBundle decoder_grads = nn::zero_gradients(trainer.policy.decoder);
  double loss = 0.0;
  if (!disable_imitation) {
    ImitationResult im = imitation_term(trainer.encoder, trainer.policy, positive, reference);
    loss += im.loss;
    encoder_grads.add_scaled(im.encoder_grads, 1.0);
    decoder_grads.add_scaled(im.decoder_grads, 1.0);
  }
  if (lambda > 0.0) {
    for (const env::AgentEpisode* neg : negatives) {
      TripletResult id = triplet_term(trainer.encoder, positive, *neg, reference);
      loss += lambda * id.loss;
      encoder_grads.add_scaled(id.encoder_grads, lambda);
    }
  }
  nn::adam_step(trainer.encoder.pair_net, encoder_grads, trainer.encoder_opt);
  nn::adam_step(trainer.policy.decoder, decoder_grads, trainer.policy_opt);
  result.loss_sum = loss;
  result.updates = 1;
  return result;
}

namespace {

struct TrainContext {
  std::vector<int> agents;
  std::map<int, std::vector<long>> episode_ids;       // per agent, train phase
  std::map<std::pair<long, int>, env::AgentEpisode> views;

  const env::AgentEpisode& view(const graph::InteractionGraph& g, long id, int agent) {
    const auto key = std::make_pair(id, agent);
    auto it = views.find(key);
    if (it == views.end()) {
      it = views.emplace(key, env::agent_view(g.episode(id), agent)).first;
    }
    return it->second;
  }
};

TrainContext build_train_context(const graph::InteractionGraph& graph,
                                 const graph::SplitSpec& split) {
  TrainContext ctx;
  for (int agent : graph.embedded_agents()) {
    std::vector<long> ids =
        graph::episodes_for_agent(graph, split, agent, graph::Phase::kTrain);
    if (ids.empty()) continue;
    if (ids.size() < 2) {
      throw TrainingError("train_embedding: agent " + std::to_string(agent) +
                          " has fewer than 2 training episodes");
    }
    ctx.agents.push_back(agent);
    ctx.episode_ids[agent] = std::move(ids);
  }
  if (ctx.agents.size() < 2) {
    throw TrainingError("train_embedding: need at least 2 agents with training episodes");
  }
  return ctx;
}

std::pair<int, int> embedded_dims(const graph::InteractionGraph& graph) {
  env::MarkovGameSpec spec = graph.env_kind == env::EnvKind::kArena
                                 ? env::MarkovGameSpec::arena()
                                 : env::MarkovGameSpec::signal();
  const int slot = graph.topology == graph::Topology::kBipartite ? 1 : 0;
  return {spec.observation_dim(slot), spec.action_arity(slot)};
}

}  // namespace

double validation_imitation_loss(const graph::InteractionGraph& graph,
                                 const graph::SplitSpec& split, const Encoder& encoder,
                                 const ConditionalPolicy& policy, graph::Phase phase) {
  double loss_sum = 0.0;
  std::size_t pair_count = 0;
  for (int agent : graph.embedded_agents()) {
    const std::vector<long> ids = graph::episodes_for_agent(graph, split, agent, phase);
    if (ids.size() < 2) continue;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const env::AgentEpisode reference = env::agent_view(graph.episode(ids[k]), agent);
      const env::AgentEpisode target =
          env::agent_view(graph.episode(ids[(k + 1) % ids.size()]), agent);
      loss_sum += imitation_loss_value(encoder, policy, target, reference);
      pair_count += target.size();
    }
  }
  if (pair_count == 0) {
    throw ConfigError("validation_imitation_loss: no evaluable episode pairs in phase");
  }
  return loss_sum / static_cast<double>(pair_count);
}

TrainResult train_embedding(const graph::InteractionGraph& graph,
                            const graph::SplitSpec& split, const TrainConfig& config) {
  if (config.lambda < 0.0) throw ConfigError("train_embedding: lambda must be >= 0");
  if (config.epochs < 1) throw ConfigError("train_embedding: epochs must be positive");

  TrainContext ctx = build_train_context(graph, split);
  const auto [obs_dim, act_arity] = embedded_dims(graph);

  Trainer trainer = make_trainer(obs_dim, act_arity, config);

  // The identification path engages only when a variant asks for it and the
  // weight is nonzero; a zero-weight hybrid reduces exactly to imitation.
  const bool drop_imitation =
      config.variant == TrainVariant::kIdentification || config.disable_imitation;
  const bool use_identification =
      config.variant != TrainVariant::kImitation && config.lambda > 0.0;
  if (drop_imitation && !use_identification) {
    throw ConfigError("train_embedding: identification-only training needs lambda > 0");
  }

  std::map<int, graph::EpisodePairSampler> samplers;
  for (int agent : ctx.agents) {
    samplers.emplace(agent,
                     graph::EpisodePairSampler(
                         ctx.episode_ids[agent],
                         derive_seed(config.seed, 3, static_cast<std::uint64_t>(agent))));
  }
  Rng rng(derive_seed(config.seed, 4));

  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<int> order = ctx.agents;
    rng.shuffle(order);
    double loss_sum = 0.0;
    int update_count = 0;
    for (int agent : order) {
      const auto [id_pos, id_ref] = samplers.at(agent).next();
      const env::AgentEpisode& positive = ctx.view(graph, id_pos, agent);
      const env::AgentEpisode& reference = ctx.view(graph, id_ref, agent);

      if (!use_identification) {
        ImitationResult im =
            imitation_term(trainer.encoder, trainer.policy, positive, reference);
        nn::adam_step(trainer.encoder.pair_net, im.encoder_grads, trainer.encoder_opt);
        nn::adam_step(trainer.policy.decoder, im.decoder_grads, trainer.policy_opt);
        loss_sum += im.loss;
        update_count += 1;
      } else {
        std::vector<const env::AgentEpisode*> negatives;
        for (int other : ctx.agents) {
          if (other == agent) continue;
          const std::vector<long>& pool = ctx.episode_ids[other];
          const long id_neg = pool[rng.uniform_int(static_cast<int>(pool.size()))];
          negatives.push_back(&ctx.view(graph, id_neg, other));
        }
        HybridStepResult step =
            hybrid_step(trainer, positive, reference, negatives, config.lambda,
                        config.update_mode, drop_imitation);
        loss_sum += step.loss_sum;
        update_count += step.updates;
      }
    }
    const double train_loss = loss_sum / std::max(1, update_count);
    if (!std::isfinite(train_loss)) {
      throw TrainingError("train_embedding: loss diverged at epoch " +
                          std::to_string(epoch));
    }
    double valid_loss = std::numeric_limits<double>::quiet_NaN();
    if (!split.valid_edges.empty()) {
      valid_loss = validation_imitation_loss(graph, split, trainer.encoder,
                                             trainer.policy, graph::Phase::kValid);
    }
    result.curve.push_back({epoch, train_loss, valid_loss});
  }

  result.encoder = std::move(trainer.encoder);
  result.policy = std::move(trainer.policy);
  result.final_valid_loss =
      result.curve.empty() ? 0.0 : result.curve.back().valid_loss;
  return result;
}

LambdaSelection select_lambda(const graph::InteractionGraph& graph,
                              const graph::SplitSpec& split, const TrainConfig& base) {
  if (base.lambda_grid.empty()) {
    throw ConfigError("select_lambda: empty lambda grid");
  }
  if (split.valid_edges.empty()) {
    throw ConfigError("select_lambda: validation edges required");
  }
  LambdaSelection selection;
  bool have_best = false;
  for (double lambda : base.lambda_grid) {
    TrainConfig config = base;
    config.lambda = lambda;
    TrainResult result = train_embedding(graph, split, config);
    selection.table.push_back({lambda, result.final_valid_loss});
    if (!have_best || result.final_valid_loss < selection.best.final_valid_loss) {
      have_best = true;
      selection.lambda_star = lambda;
      selection.best = std::move(result);
    }
  }
  return selection;
}

// --- persistence ---

namespace {

void save_meta(const std::filesystem::path& path, int obs_dim, int act_arity,
               int embed_dim) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model metadata: " + path.string());
  out << json{{"obs_dim", obs_dim}, {"act_arity", act_arity}, {"embed_dim", embed_dim}}
             .dump(2)
      << '\n';
}

json load_meta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model metadata: " + path.string());
  return json::parse(in);
}

}  // namespace

void save_encoder(const Encoder& encoder, const std::filesystem::path& dir,
                  const std::string& name) {
  std::filesystem::create_directories(dir);
  nn::save_net(encoder.pair_net, dir / (name + ".bin"));
  save_meta(dir / (name + ".json"), encoder.obs_dim, encoder.act_arity,
            encoder.embed_dim);
}

Encoder load_encoder(const std::filesystem::path& dir, const std::string& name) {
  Encoder encoder;
  encoder.pair_net = nn::load_net(dir / (name + ".bin"));
  const json meta = load_meta(dir / (name + ".json"));
  encoder.obs_dim = meta.at("obs_dim").get<int>();
  encoder.act_arity = meta.at("act_arity").get<int>();
  encoder.embed_dim = meta.at("embed_dim").get<int>();
  return encoder;
}

void save_conditional_policy(const ConditionalPolicy& policy,
                             const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  nn::save_net(policy.decoder, dir / (name + ".bin"));
  save_meta(dir / (name + ".json"), policy.obs_dim, policy.act_arity, policy.embed_dim);
}

ConditionalPolicy load_conditional_policy(const std::filesystem::path& dir,
                                          const std::string& name) {
  ConditionalPolicy policy;
  policy.decoder = nn::load_net(dir / (name + ".bin"));
  const json meta = load_meta(dir / (name + ".json"));
  policy.obs_dim = meta.at("obs_dim").get<int>();
  policy.act_arity = meta.at("act_arity").get<int>();
  policy.embed_dim = meta.at("embed_dim").get<int>();
  return policy;
}

}  // namespace pemb::embed
