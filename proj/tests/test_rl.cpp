#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pemb/errors.hpp"
#include "pemb/rl.hpp"
#include "testutil.hpp"

using namespace pemb;
using namespace pemb::rl;
using nn::Vec;

namespace {

RlEpisodeSample one_step(const Vec& input, int action, double ret) {
  RlEpisodeSample sample;
  sample.steps.push_back({input, action});
  sample.episode_return = ret;
  return sample;
}

struct RlFixture {
  std::vector<agents::ArenaStyle> styles = agents::make_arena_population(3, 50);
  env::MarkovGameSpec spec = env::MarkovGameSpec::arena();
  graph::InteractionGraph graph =
      graph::build_arena_graph(styles, 3, spec, 8);
  embed::Encoder encoder = embed::make_encoder(8, 9, 4, {8}, 77);

  std::vector<ArenaPartner> train_partners() const {
    return {{0, styles[0]}, {1, styles[1]}};
  }
  std::vector<ArenaPartner> eval_partners() const { return {{2, styles[2]}}; }

  EmbeddingProvider provider(EmbeddingMode mode) const {
    EmbeddingProvider p = make_provider(mode, 4, &encoder);
    if (mode == EmbeddingMode::kOffline || mode == EmbeddingMode::kRand) {
      p.offline = offline_embedding_table(encoder, graph, {0, 1, 2});
    }
    return p;
  }
};

RlConfig tiny_config(std::uint64_t seed) {
  RlConfig config;
  config.iterations = 8;
  config.batch_episodes = 4;
  config.eval_every = 4;
  config.eval_games = 8;
  config.hidden = {16};
  config.embed_dim = 4;
  config.seed = seed;
  return config;
}

}  // namespace

TEST_CASE("equal returns produce a zero gradient and an unchanged policy") {
  ConditionedRLPolicy policy = make_rl_policy(2, 3, 0, {6}, 4);
  const auto before = policy.net.weights;
  std::vector<RlEpisodeSample> batch{
      one_step({0.5, -0.5}, 0, 1.0),
      one_step({0.1, 0.9}, 2, 1.0),
      one_step({-0.4, 0.2}, 1, 1.0),
  };
  nn::GradientBundle grads = reinforce_gradient(policy, batch);
  for (const auto& w : grads.weight_grads)
    for (double x : w) CHECK(x == 0.0);
  nn::AdamState opt = nn::adam_init(policy.net, 0.05);
  reinforce_update(policy, batch, opt);
  CHECK(policy.net.weights == before);
}

TEST_CASE("reinforce solves a two-armed bandit") {
  ConditionedRLPolicy policy = make_rl_policy(1, 2, 0, {8}, 5);
  nn::AdamState opt = nn::adam_init(policy.net, 0.05);
  Rng rng(7);
  const Vec obs{0.0};

  auto arm_probability = [&]() {
    return nn::softmax(nn::mlp_forward(policy.net, obs))[0];
  };
  const double initial = arm_probability();

  for (int update = 0; update < 200; ++update) {
    std::vector<RlEpisodeSample> batch;
    for (int b = 0; b < 16; ++b) {
      const Vec probs = nn::softmax(nn::mlp_forward(policy.net, obs));
      const int action = rng.uniform() < probs[0] ? 0 : 1;
      batch.push_back(one_step(obs, action, action == 0 ? 1.0 : 0.0));
    }
    reinforce_update(policy, batch, opt);
  }
  const double final_p = arm_probability();
  CHECK(final_p > 0.95);
  CHECK(final_p > initial);
}

TEST_CASE("reinforce gradient matches finite differences of the surrogate") {
  ConditionedRLPolicy policy = make_rl_policy(2, 3, 2, {4}, 11);
  std::vector<RlEpisodeSample> batch;
  Rng rng(3);
  for (int e = 0; e < 3; ++e) {
    RlEpisodeSample episode;
    for (int t = 0; t < 4; ++t) {
      Vec input(4);
      for (double& x : input) x = rng.uniform(-1, 1);
      episode.steps.push_back({input, rng.uniform_int(3)});
    }
    episode.episode_return = rng.uniform(-1, 1);
    batch.push_back(std::move(episode));
  }

  nn::GradientBundle analytic = reinforce_gradient(policy, batch);
  auto loss = [&]() { return -reinforce_surrogate(policy, batch); };
  std::vector<double> numeric = testutil::finite_difference(policy.net, loss, 1e-4);
  CHECK(testutil::gradients_match(testutil::flatten(analytic), numeric, 1e-5));
}

TEST_CASE("reinforce rejects bad batches") {
  ConditionedRLPolicy policy = make_rl_policy(2, 3, 0, {4}, 0);
  nn::AdamState opt = nn::adam_init(policy.net, 0.05);
  std::vector<RlEpisodeSample> empty;
  CHECK_THROWS_AS(reinforce_update(policy, empty, opt), ConfigError);
  std::vector<RlEpisodeSample> bad{one_step({0.1, 0.2}, 0,
                                            std::numeric_limits<double>::infinity())};
  CHECK_THROWS_AS(reinforce_update(policy, bad, opt), NumericError);
}

TEST_CASE("baseline and conditioned policies have matching parameter counts") {
  ConditionedRLPolicy conditioned = make_rl_policy(8, 9, 16, {64, 64}, 1);
  ConditionedRLPolicy baseline = make_rl_policy(8, 9, 16, {64, 64}, 2);
  const double diff =
      std::fabs(static_cast<double>(conditioned.parameter_count()) -
                static_cast<double>(baseline.parameter_count())) /
      static_cast<double>(conditioned.parameter_count());
  CHECK(diff < 0.01);
  CHECK(conditioned.parameter_count() == baseline.parameter_count());
}

TEST_CASE("match stats rates sum to one exactly for dyadic game counts") {
  MatchStats stats;
  stats.wins = 37;
  stats.losses = 55;
  stats.draws = 36;  // 128 games
  CHECK(stats.games() == 128);
  CHECK(stats.win_rate() + stats.loss_rate() + stats.draw_rate() == 1.0);
  CHECK(stats.win_rate_half_width() > 0.0);
  CHECK(stats.win_rate_half_width() < 0.1);
}

TEST_CASE("head_to_head self-play is symmetric within the confidence interval") {
  env::MarkovGameSpec spec = env::MarkovGameSpec::arena();
  spec.start_jitter = 0.0;
  ConditionedRLPolicy policy = make_rl_policy(8, 9, 4, {16}, 21);
  EmbeddingProvider pa = make_provider(EmbeddingMode::kNone, 4);
  EmbeddingProvider pb = make_provider(EmbeddingMode::kNone, 4);
  MatchStats stats = head_to_head(spec, policy, pa, policy, pb, 128, 99);
  CHECK(stats.games() == 128);
  CHECK(stats.win_rate() + stats.loss_rate() + stats.draw_rate() == 1.0);
  const double gap = std::fabs(stats.win_rate() - stats.loss_rate());
  CHECK(gap <= 2.0 * stats.win_rate_half_width() + 1e-12);

  CHECK_THROWS_AS(head_to_head(spec, policy, pa, policy, pb, 0, 1), ConfigError);
}

TEST_CASE("conditioned training keeps schedules identical across embedding modes") {
  RlFixture fixture;
  RlConfig config = tiny_config(31);

  EmbeddingProvider none = fixture.provider(EmbeddingMode::kNone);
  ConditionedAgentResult baseline = train_conditioned_agent(
      fixture.spec, fixture.train_partners(), fixture.eval_partners(), none, config);

  EmbeddingProvider offline = fixture.provider(EmbeddingMode::kOffline);
  ConditionedAgentResult conditioned = train_conditioned_agent(
      fixture.spec, fixture.train_partners(), fixture.eval_partners(), offline, config);

  CHECK(baseline.partner_schedule == conditioned.partner_schedule);
  CHECK(baseline.episode_seeds == conditioned.episode_seeds);
  CHECK(baseline.policy.parameter_count() == conditioned.policy.parameter_count());
  // Training partners only ever come from the train set.
  for (int id : baseline.partner_schedule) {
    CHECK((id == 0 || id == 1));
  }
  REQUIRE(!baseline.curve.empty());
  CHECK(baseline.curve.back().iteration == config.iterations);
}

TEST_CASE("conditioned training is deterministic given the config") {
  RlFixture fixture;
  RlConfig config = tiny_config(77);
  EmbeddingProvider a = fixture.provider(EmbeddingMode::kOffline);
  EmbeddingProvider b = fixture.provider(EmbeddingMode::kOffline);
  ConditionedAgentResult ra = train_conditioned_agent(
      fixture.spec, fixture.train_partners(), fixture.eval_partners(), a, config);
  ConditionedAgentResult rb = train_conditioned_agent(
      fixture.spec, fixture.train_partners(), fixture.eval_partners(), b, config);
  CHECK(ra.policy.net.weights == rb.policy.net.weights);
  CHECK(ra.policy.net.biases == rb.policy.net.biases);
}

TEST_CASE("online embeddings never come from the future") {
  RlFixture fixture;
  RlConfig config = tiny_config(13);
  EmbeddingProvider online = fixture.provider(EmbeddingMode::kOnline);
  train_conditioned_agent(fixture.spec, fixture.train_partners(),
                          fixture.eval_partners(), online, config);
  int sourced = 0;
  for (const EmbeddingProvider::AuditEntry& entry : online.audit) {
    if (entry.used_at < 0) continue;  // evaluation-time queries
    if (entry.source_iteration >= 0) {
      CHECK(entry.source_iteration < entry.used_at);
      ++sourced;
    }
  }
  CHECK(sourced > 0);  // online histories actually engaged
}

TEST_CASE("provider contract errors") {
  CHECK_THROWS_AS(make_provider(EmbeddingMode::kOffline, 4, nullptr), ConfigError);
  embed::Encoder encoder = embed::make_encoder(8, 9, 4, {8}, 1);
  EmbeddingProvider provider = make_provider(EmbeddingMode::kOffline, 4, &encoder);
  Rng rng(0);
  CHECK_THROWS_AS(provider.embedding_for(5, 0, rng), ConfigError);
  EmbeddingProvider rand_provider = make_provider(EmbeddingMode::kRand, 4, &encoder);
  rand_provider.offline[3] = Vec(4, 1.0);
  CHECK_THROWS_AS(rand_provider.embedding_for(3, 0, rng), ConfigError);
}

TEST_CASE("speaker evaluation rewards stay within the unit-square bound") {
  auto population = agents::make_signal_population(5);
  env::MarkovGameSpec spec = env::MarkovGameSpec::signal();
  ConditionedRLPolicy speaker = make_rl_policy(3, 7, 4, {16}, 9);
  EmbeddingProvider provider = make_provider(EmbeddingMode::kZero, 4);
  std::vector<ListenerPartner> listeners{{28, population.listeners[0]},
                                         {29, population.listeners[1]}};
  const double reward = evaluate_speaker(spec, speaker, listeners, provider, 20, 3);
  CHECK(reward <= 0.0);
  CHECK(reward >= -std::sqrt(2.0));
}

TEST_CASE("conditioned speaker training runs and reports bounded rewards") {
  auto population = agents::make_signal_population(5);
  env::MarkovGameSpec spec = env::MarkovGameSpec::signal();
  std::vector<ListenerPartner> train{{28, population.listeners[0]},
                                     {29, population.listeners[1]}};
  std::vector<ListenerPartner> valid{{30, population.listeners[2]}};
  std::vector<ListenerPartner> test{{31, population.listeners[3]}};

  SpeakerRlConfig config;
  config.iterations = 6;
  config.batch_episodes = 4;
  config.eval_every = 3;
  config.valid_episodes_per_listener = 4;
  config.test_episodes_per_listener = 6;
  config.hidden = {16};
  config.embed_dim = 4;
  config.seed = 2;

  EmbeddingProvider provider = make_provider(EmbeddingMode::kZero, 4);
  ConditionedSpeakerResult result = train_conditioned_speaker(
      spec, train, valid, test, provider, config);
  CHECK(result.mean_test_reward <= 0.0);
  CHECK(result.mean_test_reward >= -std::sqrt(2.0));
  CHECK(result.mean_train_reward <= 0.0);
  CHECK(!result.curve.empty());
}
