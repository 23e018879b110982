#include "pemb/rl.hpp"

#include <algorithm>
#include <cmath>

#include "pemb/errors.hpp"

namespace pemb::rl {

const char* embedding_mode_name(EmbeddingMode mode) {
  switch (mode) {
    case EmbeddingMode::kNone: return "none";
    case EmbeddingMode::kOnline: return "online";
    case EmbeddingMode::kOffline: return "offline";
    case EmbeddingMode::kZero: return "zero";
    case EmbeddingMode::kRand: return "rand";
  }
  return "unknown";
}

ConditionedRLPolicy make_rl_policy(int obs_dim, int act_arity, int embed_dim,
                                   const std::vector<int>& hidden, std::uint64_t seed) {
  ConditionedRLPolicy policy;
  policy.obs_dim = obs_dim;
  policy.act_arity = act_arity;
  policy.embed_dim = embed_dim;
  std::vector<int> layers{obs_dim + embed_dim};
  layers.insert(layers.end(), hidden.begin(), hidden.end());
  layers.push_back(act_arity);
  policy.net = nn::mlp_init(layers, seed);
  return policy;
}

double MatchStats::win_rate() const {
  return games() == 0 ? 0.0 : static_cast<double>(wins) / games();
}
double MatchStats::loss_rate() const {
  return games() == 0 ? 0.0 : static_cast<double>(losses) / games();
}
double MatchStats::draw_rate() const {
  return games() == 0 ? 0.0 : static_cast<double>(draws) / games();
}

double MatchStats::win_rate_half_width() const {
  const int n = games();
  if (n == 0) return 0.0;
  const double z = 1.959963984540054;
  const double p = win_rate();
  const double z2 = z * z;
  return z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * static_cast<double>(n) * n)) /
         (1.0 + z2 / n);
}

void MatchStats::add(const MatchStats& other) {
  wins += other.wins;
  losses += other.losses;
  draws += other.draws;
}

Vec EmbeddingProvider::embedding_for(int partner, long iteration, Rng& rng) const {
  AuditEntry entry{partner, iteration, -1};
  Vec out(embed_dim, 0.0);
  switch (mode) {
    case EmbeddingMode::kNone:
    case EmbeddingMode::kZero:
      break;
    case EmbeddingMode::kOffline: {
      const auto it = offline.find(partner);
      if (it == offline.end()) {
        throw ConfigError("embedding provider: no offline embedding for partner " +
                          std::to_string(partner));
      }
      out = it->second;
      break;
    }
    case EmbeddingMode::kOnline: {
      const auto it = online.find(partner);
      if (it != online.end()) {
        out = it->second;
        entry.source_iteration = online_source.at(partner);
      }
      // before any interaction exists the embedding stays zero
      break;
    }
    case EmbeddingMode::kRand: {
      std::vector<int> others;
      for (const auto& [id, e] : offline) {
        if (id != partner) others.push_back(id);
      }
      if (others.empty()) {
        throw ConfigError("embedding provider: random mode needs at least 2 partners");
      }
      out = offline.at(others[rng.uniform_int(static_cast<int>(others.size()))]);
      break;
    }
  }
  audit.push_back(entry);
  return out;
}

void EmbeddingProvider::refresh_online(int partner, const env::AgentEpisode& episode,
                                       long iteration) {
  if (!encoder) throw ConfigError("embedding provider: online mode needs an encoder");
  online[partner] = embed::embed_episode(*encoder, episode);
  online_source[partner] = iteration;
}

EmbeddingProvider make_provider(EmbeddingMode mode, int embed_dim,
                                const embed::Encoder* encoder) {
  if ((mode == EmbeddingMode::kOnline || mode == EmbeddingMode::kOffline ||
       mode == EmbeddingMode::kRand) &&
      encoder == nullptr) {
    throw ConfigError("embedding provider: mode requires a frozen encoder");
  }
  EmbeddingProvider provider;
  provider.mode = mode;
  provider.embed_dim = embed_dim;
  provider.encoder = encoder;
  return provider;
}

std::map<int, Vec> offline_embedding_table(const embed::Encoder& encoder,
                                           const graph::InteractionGraph& graph,
                                           const std::vector<int>& partner_ids) {
  std::map<int, Vec> table;
  for (int id : partner_ids) {
    Vec mean(encoder.embed_dim, 0.0);
    int count = 0;
    for (int e : graph.incident_edges(id)) {
      for (long episode_id : graph.edges[e].episode_ids) {
        const Vec emb =
            embed::embed_episode(encoder, env::agent_view(graph.episode(episode_id), id));
        for (int i = 0; i < encoder.embed_dim; ++i) mean[i] += emb[i];
        ++count;
      }
    }
    if (count == 0) {
      throw ConfigError("offline embeddings: partner " + std::to_string(id) +
                        " has no episodes in the graph");
    }
    for (double& x : mean) x /= static_cast<double>(count);
    table[id] = std::move(mean);
  }
  return table;
}

// --- REINFORCE ---

namespace {

void check_batch(const ConditionedRLPolicy& policy,
                 const std::vector<RlEpisodeSample>& batch) {
  if (batch.empty()) throw ConfigError("reinforce: empty batch");
  for (const RlEpisodeSample& episode : batch) {
    if (!std::isfinite(episode.episode_return)) {
      throw NumericError("reinforce: non-finite return");
    }
    for (const RlStep& step : episode.steps) {
      if (static_cast<int>(step.input.size()) != policy.net.input_dim()) {
        throw ShapeError("reinforce: step input does not match the policy network");
      }
    }
  }
}

double batch_baseline(const std::vector<RlEpisodeSample>& batch) {
  double mean = 0.0;
  for (const RlEpisodeSample& episode : batch) mean += episode.episode_return;
  return mean / static_cast<double>(batch.size());
}

}  // namespace

double reinforce_surrogate(const ConditionedRLPolicy& policy,
                           const std::vector<RlEpisodeSample>& batch) {
  check_batch(policy, batch);
  const double baseline = batch_baseline(batch);
  double surrogate = 0.0;
  for (const RlEpisodeSample& episode : batch) {
    const double advantage = episode.episode_return - baseline;
    for (const RlStep& step : episode.steps) {
      const Vec logits = nn::mlp_forward(policy.net, step.input);
      surrogate += advantage * nn::categorical_log_prob(logits, step.action).first;
    }
  }
  return surrogate / static_cast<double>(batch.size());
}

nn::GradientBundle reinforce_gradient(const ConditionedRLPolicy& policy,
                                      const std::vector<RlEpisodeSample>& batch) {
  check_batch(policy, batch);
  const double baseline = batch_baseline(batch);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  nn::GradientBundle grads = nn::zero_gradients(policy.net);
  nn::ForwardCache cache;
  for (const RlEpisodeSample& episode : batch) {
    const double advantage = episode.episode_return - baseline;
    if (advantage == 0.0) continue;
    for (const RlStep& step : episode.steps) {
      const Vec logits = nn::mlp_forward(policy.net, step.input, &cache);
      const auto [log_prob, logit_grad] = nn::categorical_log_prob(logits, step.action);
      (void)log_prob;
      // loss = -surrogate, so flip the maximization gradient
      Vec loss_grad(logit_grad.size());
      for (std::size_t i = 0; i < logit_grad.size(); ++i) {
        loss_grad[i] = -advantage * inv_batch * logit_grad[i];
      }
      nn::mlp_backward_accum(policy.net, cache, loss_grad, 1.0, grads, nullptr);
    }
  }
  return grads;
}

void reinforce_update(ConditionedRLPolicy& policy,
                      const std::vector<RlEpisodeSample>& batch, nn::AdamState& state) {
  const nn::GradientBundle grads = reinforce_gradient(policy, batch);
  if (!grads.finite()) throw NumericError("reinforce: non-finite gradient");
  nn::adam_step(policy.net, grads, state);
}

// --- rollout adapters ---

namespace {

// Learner side of a rollout: samples from the conditioned network with a
// fixed partner embedding for the whole episode.
struct LearnerPolicy : env::Policy {
  const ConditionedRLPolicy* policy;
  Vec embedding;
  env::Role policy_role;

  LearnerPolicy(const ConditionedRLPolicy* p, Vec e, env::Role r)
      : policy(p), embedding(std::move(e)), policy_role(r) {}

  env::Role role() const override { return policy_role; }

  int act(const env::Obs& obs, int, Rng& rng) const override {
    Vec input(obs);
    input.insert(input.end(), embedding.begin(), embedding.end());
    const Vec probs = nn::softmax(nn::mlp_forward(policy->net, input));
    double u = rng.uniform();
    for (std::size_t a = 0; a < probs.size(); ++a) {
      u -= probs[a];
      if (u < 0.0) return static_cast<int>(a);
    }
    return static_cast<int>(probs.size()) - 1;
  }
};

RlEpisodeSample sample_from_episode(const env::Episode& episode, const Vec& embedding,
                                    double episode_return) {
  RlEpisodeSample sample;
  sample.episode_return = episode_return;
  sample.steps.reserve(episode.steps.size());
  for (const env::Step& step : episode.steps) {
    RlStep rl_step;
    rl_step.input = step.observations[0];
    rl_step.input.insert(rl_step.input.end(), embedding.begin(), embedding.end());
    rl_step.action = step.actions[0];
    sample.steps.push_back(std::move(rl_step));
  }
  return sample;
}

double arena_return(const env::Episode& episode) {
  switch (*episode.arena_outcome) {
    case env::ArenaOutcome::kWinFirst: return 1.0;
    case env::ArenaOutcome::kWinSecond: return -1.0;
    case env::ArenaOutcome::kDraw: return 0.0;
  }
  return 0.0;
}

}  // namespace

MatchStats evaluate_arena_policy(const env::MarkovGameSpec& spec,
                                 const ConditionedRLPolicy& policy,
                                 const std::vector<ArenaPartner>& partners,
                                 const EmbeddingProvider& provider, int games_per_partner,
                                 std::uint64_t seed) {
  if (games_per_partner < 1) throw ConfigError("evaluate_arena_policy: need games >= 1");
  MatchStats stats;
  for (const ArenaPartner& partner : partners) {
    agents::ArenaStylePolicy opponent(partner.style);
    Rng rand_rng(derive_seed(seed, 0xEB, static_cast<std::uint64_t>(partner.id)));
    for (int g = 0; g < games_per_partner; ++g) {
      const Vec embedding = provider.embedding_for(partner.id, -1, rand_rng);
      LearnerPolicy learner(&policy, embedding, env::Role::kArenaAgent);
      const std::uint64_t game_seed =
          derive_seed(seed, static_cast<std::uint64_t>(partner.id),
                      static_cast<std::uint64_t>(g));
      const env::Episode episode =
          env::rollout(spec, learner, opponent, game_seed, {kLearnerId, partner.id});
      switch (*episode.arena_outcome) {
        case env::ArenaOutcome::kWinFirst: ++stats.wins; break;
        case env::ArenaOutcome::kWinSecond: ++stats.losses; break;
        case env::ArenaOutcome::kDraw: ++stats.draws; break;
      }
    }
  }
  return stats;
}

namespace {

RateTriple rates_of(const MatchStats& stats) {
  RateTriple triple;
  triple.win = stats.win_rate();
  triple.loss = stats.loss_rate();
  triple.draw = stats.draw_rate();
  triple.ci_half = stats.win_rate_half_width();
  return triple;
}

}  // namespace

ConditionedAgentResult train_conditioned_agent(
    const env::MarkovGameSpec& spec, const std::vector<ArenaPartner>& train_partners,
    const std::vector<ArenaPartner>& eval_partners, EmbeddingProvider& provider,
    const RlConfig& config) {
  if (train_partners.empty()) throw ConfigError("train_conditioned_agent: no partners");
  for (const ArenaPartner& tp : train_partners) {
    for (const ArenaPartner& ep : eval_partners) {
      if (tp.id == ep.id) {
        throw ConfigError("train_conditioned_agent: partner sets must be disjoint");
      }
    }
  }

  ConditionedAgentResult result;
  result.policy = make_rl_policy(spec.observation_dim(0), spec.action_arity(0),
                                 config.embed_dim, config.hidden,
                                 derive_seed(config.seed, 0xF0));
  nn::AdamState opt = nn::adam_init(result.policy.net, config.learning_rate);
  Rng rand_rng(derive_seed(config.seed, 0xF1));

  for (int it = 0; it < config.iterations; ++it) {
    const ArenaPartner& partner = train_partners[it % train_partners.size()];
    result.partner_schedule.push_back(partner.id);
    agents::ArenaStylePolicy opponent(partner.style);

    const Vec embedding = provider.embedding_for(partner.id, it, rand_rng);
    std::vector<RlEpisodeSample> batch;
    batch.reserve(config.batch_episodes);
    env::Episode last_episode;
    for (int b = 0; b < config.batch_episodes; ++b) {
      LearnerPolicy learner(&result.policy, embedding, env::Role::kArenaAgent);
      const std::uint64_t game_seed =
          derive_seed(config.seed, 0xE0, static_cast<std::uint64_t>(it) * 1000 + b);
      result.episode_seeds.push_back(game_seed);
      env::Episode episode =
          env::rollout(spec, learner, opponent, game_seed, {kLearnerId, partner.id});
      batch.push_back(sample_from_episode(episode, embedding, arena_return(episode)));
      last_episode = std::move(episode);
    }
    reinforce_update(result.policy, batch, opt);
    if (provider.mode == EmbeddingMode::kOnline) {
      provider.refresh_online(partner.id, env::agent_view(last_episode, partner.id), it);
    }

    if ((it + 1) % config.eval_every == 0 || it + 1 == config.iterations) {
      CurvePoint point;
      point.iteration = it + 1;
      const MatchStats train_stats = evaluate_arena_policy(
          spec, result.policy, train_partners, provider, config.eval_games,
          derive_seed(config.seed, 0xEA, static_cast<std::uint64_t>(it)));
      const MatchStats test_stats =
          eval_partners.empty()
              ? MatchStats{}
              : evaluate_arena_policy(
                    spec, result.policy, eval_partners, provider, config.eval_games,
                    derive_seed(config.seed, 0xEC, static_cast<std::uint64_t>(it)));
      point.train = rates_of(train_stats);
      point.test = rates_of(test_stats);
      result.curve.push_back(point);
      result.final_train = train_stats;
      result.final_test = test_stats;
    }
  }
  return result;
}

MatchStats head_to_head(const env::MarkovGameSpec& spec, const ConditionedRLPolicy& first,
                        EmbeddingProvider& first_provider,
                        const ConditionedRLPolicy& second,
                        EmbeddingProvider& second_provider, int n_games,
                        std::uint64_t seed) {
  if (n_games < 1) throw ConfigError("head_to_head: need at least one game");
  // Synthetic ids for the two sides inside this pairing.
  constexpr int kFirstId = 0;
  constexpr int kSecondId = 1;
  Rng first_rng(derive_seed(seed, 0x2A));
  Rng second_rng(derive_seed(seed, 0x2B));

  MatchStats stats;
  for (int g = 0; g < n_games; ++g) {
    const Vec first_embedding = first_provider.embedding_for(kSecondId, g, first_rng);
    const Vec second_embedding = second_provider.embedding_for(kFirstId, g, second_rng);
    LearnerPolicy a(&first, first_embedding, env::Role::kArenaAgent);
    LearnerPolicy b(&second, second_embedding, env::Role::kArenaAgent);
    const env::Episode episode = env::rollout(
        spec, a, b, derive_seed(seed, 0x33, static_cast<std::uint64_t>(g)),
        {kFirstId, kSecondId});
    switch (*episode.arena_outcome) {
      case env::ArenaOutcome::kWinFirst: ++stats.wins; break;
      case env::ArenaOutcome::kWinSecond: ++stats.losses; break;
      case env::ArenaOutcome::kDraw: ++stats.draws; break;
    }
    if (first_provider.mode == EmbeddingMode::kOnline) {
      first_provider.refresh_online(kSecondId, env::agent_view(episode, kSecondId), g);
    }
    if (second_provider.mode == EmbeddingMode::kOnline) {
      second_provider.refresh_online(kFirstId, env::agent_view(episode, kFirstId), g);
    }
  }
  return stats;
}

// --- cooperative speaker ---

double evaluate_speaker(const env::MarkovGameSpec& spec, const ConditionedRLPolicy& policy,
                        const std::vector<ListenerPartner>& listeners,
                        const EmbeddingProvider& provider, int episodes_per_listener,
                        std::uint64_t seed) {
  if (listeners.empty()) throw ConfigError("evaluate_speaker: no listeners");
  if (episodes_per_listener < 1) {
    throw ConfigError("evaluate_speaker: need at least one episode per listener");
  }
  double reward_sum = 0.0;
  int episode_count = 0;
  for (const ListenerPartner& listener : listeners) {
    agents::ListenerPolicy partner(listener.spec);
    Rng rand_rng(derive_seed(seed, 0xEB, static_cast<std::uint64_t>(listener.id)));
    for (int g = 0; g < episodes_per_listener; ++g) {
      const Vec embedding = provider.embedding_for(listener.id, -1, rand_rng);
      LearnerPolicy speaker(&policy, embedding, env::Role::kSpeaker);
      const env::Episode episode = env::rollout(
          spec, speaker, partner,
          derive_seed(seed, static_cast<std::uint64_t>(listener.id),
                      static_cast<std::uint64_t>(g)),
          {kLearnerId, listener.id});
      reward_sum += *episode.shared_reward;
      ++episode_count;
    }
  }
  return reward_sum / static_cast<double>(episode_count);
}

ConditionedSpeakerResult train_conditioned_speaker(
    const env::MarkovGameSpec& spec, const std::vector<ListenerPartner>& train_listeners,
    const std::vector<ListenerPartner>& valid_listeners,
    const std::vector<ListenerPartner>& test_listeners, EmbeddingProvider& provider,
    const SpeakerRlConfig& config) {
  if (train_listeners.empty()) {
    throw ConfigError("train_conditioned_speaker: no training listeners");
  }

  ConditionedSpeakerResult result;
  result.policy = make_rl_policy(spec.observation_dim(0), spec.action_arity(0),
                                 config.embed_dim, config.hidden,
                                 derive_seed(config.seed, 0xF5));
  ConditionedRLPolicy current = result.policy;
  nn::AdamState opt = nn::adam_init(current.net, config.learning_rate);
  Rng rand_rng(derive_seed(config.seed, 0xF6));

  double best_valid = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < config.iterations; ++it) {
    const ListenerPartner& listener = train_listeners[it % train_listeners.size()];
    agents::ListenerPolicy partner(listener.spec);
    const Vec embedding = provider.embedding_for(listener.id, it, rand_rng);

    std::vector<RlEpisodeSample> batch;
    batch.reserve(config.batch_episodes);
    env::Episode last_episode;
    for (int b = 0; b < config.batch_episodes; ++b) {
      LearnerPolicy speaker(&current, embedding, env::Role::kSpeaker);
      env::Episode episode = env::rollout(
          spec, speaker, partner,
          derive_seed(config.seed, 0xE5, static_cast<std::uint64_t>(it) * 1000 + b),
          {kLearnerId, listener.id});
      batch.push_back(sample_from_episode(episode, embedding, *episode.shared_reward));
      last_episode = std::move(episode);
    }
    reinforce_update(current, batch, opt);
    if (provider.mode == EmbeddingMode::kOnline) {
      provider.refresh_online(listener.id, env::agent_view(last_episode, listener.id), it);
    }

    if ((it + 1) % config.eval_every == 0 || it + 1 == config.iterations) {
      SpeakerCurvePoint point;
      point.iteration = it + 1;
      point.train_reward = evaluate_speaker(
          spec, current, train_listeners, provider, config.valid_episodes_per_listener,
          derive_seed(config.seed, 0xD0, static_cast<std::uint64_t>(it)));
      point.valid_reward =
          valid_listeners.empty()
              ? point.train_reward
              : evaluate_speaker(spec, current, valid_listeners, provider,
                                 config.valid_episodes_per_listener,
                                 derive_seed(config.seed, 0xD1,
                                             static_cast<std::uint64_t>(it)));
      result.curve.push_back(point);
      if (point.valid_reward > best_valid) {
        best_valid = point.valid_reward;
        result.policy = current;
        result.mean_train_reward = point.train_reward;
        result.mean_valid_reward = point.valid_reward;
      }
    }
  }

  result.mean_test_reward =
      test_listeners.empty()
          ? 0.0
          : evaluate_speaker(spec, result.policy, test_listeners, provider,
                             config.test_episodes_per_listener,
                             derive_seed(config.seed, 0xD2));
  return result;
}

}  // namespace pemb::rl
