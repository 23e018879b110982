#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "pemb/embed.hpp"
#include "pemb/errors.hpp"
#include "testutil.hpp"

using namespace pemb;
using namespace pemb::embed;
using nn::Vec;

namespace {

env::AgentEpisode make_episode(int agent, long id,
                               std::vector<std::pair<Vec, int>> pairs) {
  env::AgentEpisode episode;
  episode.agent_id = agent;
  episode.source_id = id;
  for (auto& [obs, action] : pairs) {
    episode.observations.push_back(std::move(obs));
    episode.actions.push_back(action);
  }
  return episode;
}

// Tiny deterministic fixture: obs_dim 2, arity 3, embed_dim 2.
struct ToySetup {
  Encoder encoder = make_encoder(2, 3, 2, {4}, 11);
  ConditionalPolicy policy = make_conditional_policy(2, 3, 2, {4}, 12);
  env::AgentEpisode target = make_episode(0, 1, {{{0.4, -0.2}, 0},
                                                 {{-0.3, 0.9}, 2},
                                                 {{0.1, 0.5}, 1}});
  env::AgentEpisode reference = make_episode(0, 2, {{{-0.6, 0.2}, 1},
                                                    {{0.8, -0.1}, 0}});
  env::AgentEpisode negative = make_episode(1, 3, {{{0.2, 0.7}, 2},
                                                   {{-0.5, -0.5}, 1}});
};

void zero_net(nn::DenseNet& net) {
  for (auto& w : net.weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : net.biases) std::fill(b.begin(), b.end(), 0.0);
}

}  // namespace

TEST_CASE("embed_episode of identical pairs equals the single pair embedding") {
  Encoder encoder = make_encoder(2, 3, 4, {5}, 3);
  Vec obs{0.3, -0.8};
  const Vec single = nn::mlp_forward(encoder.pair_net,
                                     encode_pair_input(encoder, obs, 1));
  env::AgentEpisode two = make_episode(0, 0, {{obs, 1}, {obs, 1}});
  CHECK(embed_episode(encoder, two) == single);  // (x + x) / 2 is exact

  env::AgentEpisode five = make_episode(0, 0, {{obs, 1}, {obs, 1}, {obs, 1},
                                               {obs, 1}, {obs, 1}});
  const Vec mean5 = embed_episode(encoder, five);
  for (int i = 0; i < 4; ++i) {
    CHECK(mean5[i] == doctest::Approx(single[i]).epsilon(1e-14));
  }
}

TEST_CASE("embed_episode is invariant to pair order") {
  Encoder encoder = make_encoder(3, 2, 5, {6}, 9);
  env::AgentEpisode episode = make_episode(0, 0, {{{0.1, 0.2, 0.3}, 0},
                                                  {{-0.4, 0.5, -0.6}, 1},
                                                  {{0.7, -0.8, 0.9}, 0},
                                                  {{0.0, 0.25, -0.5}, 1}});
  env::AgentEpisode reversed = episode;
  std::reverse(reversed.observations.begin(), reversed.observations.end());
  std::reverse(reversed.actions.begin(), reversed.actions.end());
  const Vec a = embed_episode(encoder, episode);
  const Vec b = embed_episode(encoder, reversed);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("embed_episode of two pairs is their elementwise average") {
  Encoder encoder = make_encoder(2, 2, 3, {4}, 21);
  env::AgentEpisode episode = make_episode(0, 0, {{{0.5, -0.5}, 0}, {{-0.25, 1.0}, 1}});
  const Vec out0 = nn::mlp_forward(encoder.pair_net,
                                   encode_pair_input(encoder, {0.5, -0.5}, 0));
  const Vec out1 = nn::mlp_forward(encoder.pair_net,
                                   encode_pair_input(encoder, {-0.25, 1.0}, 1));
  const Vec emb = embed_episode(encoder, episode);
  for (int i = 0; i < 3; ++i) {
    CHECK(emb[i] == doctest::Approx((out0[i] + out1[i]) / 2.0).epsilon(1e-15));
  }
}

TEST_CASE("embed_episode rejects empty episodes") {
  Encoder encoder = make_encoder(2, 2, 3, {4}, 0);
  env::AgentEpisode empty;
  empty.agent_id = 0;
  CHECK_THROWS_AS(embed_episode(encoder, empty), ShapeError);
}

TEST_CASE("triplet_loss_value hits the closed-form anchor points") {
  // Equal distances: exactly 1/4.
  Vec r{1.0, 2.0}, p{2.0, 2.0}, n{0.0, 2.0};
  CHECK(triplet_loss_value(p, n, r) == 0.25);

  // Positive collapsed onto the reference, negative 10 away.
  Vec r2(4, 0.0), p2(4, 0.0), n2(4, 0.0);
  n2[0] = 10.0;
  const double far = triplet_loss_value(p2, n2, r2);
  const double far_expected = std::pow(1.0 + std::exp(10.0), -2.0);
  CHECK(std::fabs(far - far_expected) <= 1e-12 * far_expected);
  CHECK(far == doctest::Approx(2.0607e-9).epsilon(1e-3));

  // Negative collapsed onto the reference, positive 10 away.
  Vec p3(4, 0.0);
  p3[0] = 10.0;
  const double near = triplet_loss_value(p3, n2 = Vec(4, 0.0), r2);
  const double near_expected = std::pow(1.0 + std::exp(-10.0), -2.0);
  CHECK(std::fabs(near - near_expected) <= 1e-12 * near_expected);
  CHECK(near == doctest::Approx(0.99991).epsilon(1e-4));
}

TEST_CASE("triplet_loss_value stays within (0, 1) and is stable for huge gaps") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Vec r(3), p(3), n(3);
    for (int i = 0; i < 3; ++i) {
      r[i] = rng.uniform(-5, 5);
      p[i] = rng.uniform(-5, 5);
      n[i] = rng.uniform(-5, 5);
    }
    const double loss = triplet_loss_value(p, n, r);
    CHECK(loss > 0.0);
    CHECK(loss < 1.0);
  }
  Vec r{0.0}, p{0.0}, n{1000.0};
  CHECK(triplet_loss_value(p, n, r) == 0.0);  // underflows cleanly
  CHECK(triplet_loss_value(n, p, r) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("imitation loss of a uniform decoder is pair count times log arity") {
  Encoder encoder = make_encoder(8, 9, 16, {10}, 5);
  ConditionalPolicy policy = make_conditional_policy(8, 9, 16, {10}, 6);
  zero_net(policy.decoder);  // all logits zero: uniform over 9 actions

  std::vector<std::pair<Vec, int>> pairs;
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    Vec obs(8);
    for (double& x : obs) x = rng.uniform(-1, 1);
    pairs.push_back({obs, rng.uniform_int(9)});
  }
  std::vector<std::pair<Vec, int>> ref_pairs(pairs.begin(), pairs.begin() + 10);
  env::AgentEpisode target = make_episode(0, 1, std::move(pairs));
  env::AgentEpisode reference = make_episode(0, 2, std::move(ref_pairs));

  const double loss = imitation_loss_value(encoder, policy, target, reference);
  const double expected = 50.0 * std::log(9.0);
  CHECK(std::fabs(loss - expected) <= 1e-12 * expected);

  ImitationResult full = imitation_term(encoder, policy, target, reference);
  CHECK(full.loss == loss);
}

TEST_CASE("imitation gradients match finite differences for both networks") {
  ToySetup toy;
  ImitationResult analytic =
      imitation_term(toy.encoder, toy.policy, toy.target, toy.reference);
  CHECK(analytic.loss ==
        doctest::Approx(imitation_loss_value(toy.encoder, toy.policy, toy.target,
                                             toy.reference))
            .epsilon(1e-14));

  auto loss = [&]() {
    return imitation_loss_value(toy.encoder, toy.policy, toy.target, toy.reference);
  };
  std::vector<double> enc_numeric =
      testutil::finite_difference(toy.encoder.pair_net, loss, 1e-4);
  CHECK(testutil::gradients_match(testutil::flatten(analytic.encoder_grads),
                                  enc_numeric, 1e-5));
  std::vector<double> dec_numeric =
      testutil::finite_difference(toy.policy.decoder, loss, 1e-4);
  CHECK(testutil::gradients_match(testutil::flatten(analytic.decoder_grads),
                                  dec_numeric, 1e-5));
}

TEST_CASE("zero encoder reduces imitation to unconditioned cloning") {
  ToySetup toy;
  zero_net(toy.encoder.pair_net);  // embedding is exactly zero

  // Independent unconditioned cross-entropy: decoder on (obs ++ zeros).
  double expected = 0.0;
  for (std::size_t t = 0; t < toy.target.size(); ++t) {
    Vec input = toy.target.observations[t];
    input.resize(input.size() + 2, 0.0);
    const Vec logits = nn::mlp_forward(toy.policy.decoder, input);
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double x : logits) z += std::exp(x - mx);
    expected -= logits[toy.target.actions[t]] - mx - std::log(z);
  }

  const double loss =
      imitation_loss_value(toy.encoder, toy.policy, toy.target, toy.reference);
  CHECK(loss == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("imitation term enforces its sampling contract") {
  ToySetup toy;
  env::AgentEpisode other_agent = toy.reference;
  other_agent.agent_id = 7;
  CHECK_THROWS_AS(imitation_term(toy.encoder, toy.policy, toy.target, other_agent),
                  SamplingError);
  env::AgentEpisode same_id = toy.target;
  CHECK_THROWS_AS(imitation_term(toy.encoder, toy.policy, toy.target, same_id),
                  SamplingError);
  env::AgentEpisode empty;
  empty.agent_id = 0;
  CHECK_THROWS_AS(imitation_term(toy.encoder, toy.policy, toy.target, empty),
                  ShapeError);
}

TEST_CASE("triplet gradients match finite differences") {
  ToySetup toy;
  TripletResult analytic =
      triplet_term(toy.encoder, toy.target, toy.negative, toy.reference);

  auto loss = [&]() {
    return triplet_loss_value(embed_episode(toy.encoder, toy.target),
                              embed_episode(toy.encoder, toy.negative),
                              embed_episode(toy.encoder, toy.reference));
  };
  CHECK(analytic.loss == doctest::Approx(loss()).epsilon(1e-14));
  std::vector<double> numeric =
      testutil::finite_difference(toy.encoder.pair_net, loss, 1e-4);
  CHECK(testutil::gradients_match(testutil::flatten(analytic.encoder_grads), numeric,
                                  1e-5));
}

TEST_CASE("triplet term enforces identity contracts") {
  ToySetup toy;
  CHECK_THROWS_AS(triplet_term(toy.encoder, toy.target, toy.negative, toy.target),
                  SamplingError);
  env::AgentEpisode negative_same_agent = toy.negative;
  negative_same_agent.agent_id = toy.target.agent_id;
  CHECK_THROWS_AS(
      triplet_term(toy.encoder, toy.target, negative_same_agent, toy.reference),
      SamplingError);
  env::AgentEpisode reference_other = toy.reference;
  reference_other.agent_id = 9;
  CHECK_THROWS_AS(
      triplet_term(toy.encoder, toy.target, toy.negative, reference_other),
      SamplingError);
}

TEST_CASE("hybrid step with zero lambda equals a pure imitation update bitwise") {
  TrainConfig config;
  config.embed_dim = 2;
  config.encoder_hidden = {4};
  config.decoder_hidden = {4};
  config.seed = 77;
  ToySetup toy;

  Trainer a = make_trainer(2, 3, config);
  Trainer b = make_trainer(2, 3, config);

  ImitationResult im = imitation_term(a.encoder, a.policy, toy.target, toy.reference);
  nn::adam_step(a.encoder.pair_net, im.encoder_grads, a.encoder_opt);
  nn::adam_step(a.policy.decoder, im.decoder_grads, a.policy_opt);

  std::vector<const env::AgentEpisode*> negatives{&toy.negative};
  hybrid_step(b, toy.target, toy.reference, negatives, 0.0, UpdateMode::kPerNegative);

  CHECK(a.encoder.pair_net.weights == b.encoder.pair_net.weights);
  CHECK(a.encoder.pair_net.biases == b.encoder.pair_net.biases);
  CHECK(a.policy.decoder.weights == b.policy.decoder.weights);
  CHECK(a.policy.decoder.biases == b.policy.decoder.biases);
}

TEST_CASE("hybrid loss recomposes from its two terms") {
  TrainConfig config;
  config.embed_dim = 2;
  config.encoder_hidden = {4};
  config.decoder_hidden = {4};
  config.seed = 31;
  ToySetup toy;
  const double lambda = 0.37;

  SUBCASE("per-negative, single negative") {
    Trainer t = make_trainer(2, 3, config);
    const double im =
        imitation_term(t.encoder, t.policy, toy.target, toy.reference).loss;
    const double id =
        triplet_term(t.encoder, toy.target, toy.negative, toy.reference).loss;
    std::vector<const env::AgentEpisode*> negatives{&toy.negative};
    HybridStepResult step = hybrid_step(t, toy.target, toy.reference, negatives,
                                        lambda, UpdateMode::kPerNegative);
    CHECK(step.updates == 1);
    CHECK(std::fabs(step.loss_sum - (im + lambda * id)) <= 1e-12 * (im + lambda * id));
  }

  SUBCASE("batched over three negatives") {
    Trainer t = make_trainer(2, 3, config);
    env::AgentEpisode neg2 = make_episode(2, 9, {{{0.9, 0.1}, 0}});
    env::AgentEpisode neg3 = make_episode(3, 10, {{{-0.9, 0.4}, 2}, {{0.3, 0.3}, 1}});
    const double im =
        imitation_term(t.encoder, t.policy, toy.target, toy.reference).loss;
    double id_sum = 0.0;
    for (const env::AgentEpisode* neg : {&toy.negative, &neg2, &neg3}) {
      id_sum += triplet_term(t.encoder, toy.target, *neg, toy.reference).loss;
    }
    std::vector<const env::AgentEpisode*> negatives{&toy.negative, &neg2, &neg3};
    HybridStepResult step = hybrid_step(t, toy.target, toy.reference, negatives,
                                        lambda, UpdateMode::kBatched);
    CHECK(step.updates == 1);
    const double expected = im + lambda * id_sum;
    CHECK(std::fabs(step.loss_sum - expected) <= 1e-12 * expected);
  }

  SUBCASE("per-negative mode issues one optimizer update per negative") {
    Trainer t = make_trainer(2, 3, config);
    env::AgentEpisode neg2 = make_episode(2, 9, {{{0.9, 0.1}, 0}});
    env::AgentEpisode neg3 = make_episode(3, 10, {{{-0.9, 0.4}, 2}});
    std::vector<const env::AgentEpisode*> negatives{&toy.negative, &neg2, &neg3};
    HybridStepResult step = hybrid_step(t, toy.target, toy.reference, negatives,
                                        lambda, UpdateMode::kPerNegative);
    CHECK(step.updates == 3);
    CHECK(t.encoder_opt.step == 3);
    CHECK(t.policy_opt.step == 3);
  }

  SUBCASE("contract errors") {
    Trainer t = make_trainer(2, 3, config);
    std::vector<const env::AgentEpisode*> none;
    CHECK_THROWS_AS(
        hybrid_step(t, toy.target, toy.reference, none, 0.1, UpdateMode::kPerNegative),
        ConfigError);
    std::vector<const env::AgentEpisode*> negatives{&toy.negative};
    CHECK_THROWS_AS(hybrid_step(t, toy.target, toy.reference, negatives, -0.1,
                                UpdateMode::kPerNegative),
                    ConfigError);
  }
}

namespace {

struct ArenaFixture {
  graph::InteractionGraph graph;
  graph::SplitSpec split;
};

ArenaFixture small_arena_fixture(int n_agents, int episodes_per_edge,
                                 std::uint64_t seed) {
  auto styles = agents::make_arena_population(n_agents, seed);
  auto spec = env::MarkovGameSpec::arena();
  ArenaFixture fixture;
  fixture.graph = graph::build_arena_graph(styles, episodes_per_edge, spec, seed + 1);
  fixture.split = graph::split_weak(fixture.graph, 0.6, seed + 2);
  return fixture;
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig config;
  config.embed_dim = 8;
  config.encoder_hidden = {32, 32};
  config.decoder_hidden = {32};
  config.seed = seed;
  return config;
}

}  // namespace

TEST_CASE("training on two agents cuts the imitation loss by a third") {
  // Predictable low-temperature styles; high-temperature ones have little
  // signal beyond their own action entropy.
  std::vector<agents::ArenaStyle> styles(2);
  styles[0] = {0.9, 0.2, 0.1, 0};
  styles[1] = {0.15, -0.3, 0.12, 6};
  auto spec = env::MarkovGameSpec::arena();
  graph::InteractionGraph g = graph::build_arena_graph(styles, 10, spec, 4);
  graph::SplitSpec split;  // single-edge graph: everything is a train edge
  split.train_edges = {0};

  TrainConfig config = small_config(9);
  config.variant = TrainVariant::kHybrid;
  config.lambda = 0.1;
  config.epochs = 30;
  config.learning_rate = 2e-2;
  TrainResult result = train_embedding(g, split, config);
  REQUIRE(result.curve.size() == 30);
  const double initial = result.curve.front().train_loss;
  const double final_loss = result.curve.back().train_loss;
  CHECK(final_loss < 0.7 * initial);
}

TEST_CASE("hybrid training separates agents in embedding space") {
  ArenaFixture fixture = small_arena_fixture(8, 6, 40);
  TrainConfig config = small_config(13);
  config.variant = TrainVariant::kHybrid;
  config.lambda = 0.1;
  config.epochs = 12;
  TrainResult result = train_embedding(fixture.graph, fixture.split, config);

  // Held-out check: triplets over test-phase episodes of the training agents.
  double triplet_sum = 0.0;
  int triplet_count = 0;
  for (int i : fixture.graph.embedded_agents()) {
    auto ids_i = graph::episodes_for_agent(fixture.graph, fixture.split, i,
                                           graph::Phase::kTest);
    if (ids_i.size() < 2) continue;
    const Vec ref = embed_episode(result.encoder,
                                  env::agent_view(fixture.graph.episode(ids_i[0]), i));
    const Vec pos = embed_episode(result.encoder,
                                  env::agent_view(fixture.graph.episode(ids_i[1]), i));
    for (int j : fixture.graph.embedded_agents()) {
      if (j == i) continue;
      auto ids_j = graph::episodes_for_agent(fixture.graph, fixture.split, j,
                                             graph::Phase::kTest);
      if (ids_j.empty()) continue;
      const Vec neg = embed_episode(result.encoder,
                                    env::agent_view(fixture.graph.episode(ids_j[0]), j));
      triplet_sum += triplet_loss_value(pos, neg, ref);
      ++triplet_count;
    }
  }
  REQUIRE(triplet_count > 0);
  CHECK(triplet_sum / triplet_count < 0.25);
}

TEST_CASE("training is bitwise deterministic in the config seed") {
  ArenaFixture fixture = small_arena_fixture(4, 4, 60);
  TrainConfig config = small_config(21);
  config.epochs = 4;
  TrainResult a = train_embedding(fixture.graph, fixture.split, config);
  TrainResult b = train_embedding(fixture.graph, fixture.split, config);
  CHECK(a.encoder.pair_net.weights == b.encoder.pair_net.weights);
  CHECK(a.policy.decoder.weights == b.policy.decoder.weights);
  for (std::size_t e = 0; e < a.curve.size(); ++e) {
    CHECK(a.curve[e].train_loss == b.curve[e].train_loss);
    CHECK(a.curve[e].valid_loss == b.curve[e].valid_loss);
  }
}

TEST_CASE("variant reduction identities hold bitwise on a 5-epoch fixture") {
  ArenaFixture fixture = small_arena_fixture(4, 4, 80);
  TrainConfig base = small_config(33);
  base.epochs = 5;

  SUBCASE("lambda zero reproduces the imitation variant") {
    TrainConfig hybrid = base;
    hybrid.variant = TrainVariant::kHybrid;
    hybrid.lambda = 0.0;
    TrainConfig imitation = base;
    imitation.variant = TrainVariant::kImitation;
    imitation.lambda = 0.0;
    TrainResult a = train_embedding(fixture.graph, fixture.split, hybrid);
    TrainResult b = train_embedding(fixture.graph, fixture.split, imitation);
    CHECK(a.encoder.pair_net.weights == b.encoder.pair_net.weights);
    CHECK(a.policy.decoder.weights == b.policy.decoder.weights);
    CHECK(a.encoder.pair_net.biases == b.encoder.pair_net.biases);
  }

  SUBCASE("disabling the imitation term reproduces the identification variant") {
    TrainConfig crippled = base;
    crippled.variant = TrainVariant::kHybrid;
    crippled.lambda = 1.0;
    crippled.disable_imitation = true;
    TrainConfig identification = base;
    identification.variant = TrainVariant::kIdentification;
    identification.lambda = 1.0;
    TrainResult a = train_embedding(fixture.graph, fixture.split, crippled);
    TrainResult b = train_embedding(fixture.graph, fixture.split, identification);
    CHECK(a.encoder.pair_net.weights == b.encoder.pair_net.weights);
    CHECK(a.encoder.pair_net.biases == b.encoder.pair_net.biases);
  }
}

TEST_CASE("select_lambda trains one model per grid point and takes the argmin") {
  ArenaFixture fixture = small_arena_fixture(4, 4, 100);
  TrainConfig base = small_config(55);
  base.epochs = 3;
  base.lambda_grid = {0.01, 0.5};
  LambdaSelection selection = select_lambda(fixture.graph, fixture.split, base);
  REQUIRE(selection.table.size() == 2);
  double best_loss = selection.table[0].valid_loss;
  double best_lambda = selection.table[0].lambda;
  for (const LambdaRow& row : selection.table) {
    if (row.valid_loss < best_loss) {
      best_loss = row.valid_loss;
      best_lambda = row.lambda;
    }
  }
  CHECK(selection.lambda_star == best_lambda);
  CHECK(selection.best.final_valid_loss == best_loss);

  base.lambda_grid = {0.05};
  LambdaSelection single = select_lambda(fixture.graph, fixture.split, base);
  CHECK(single.lambda_star == 0.05);
  REQUIRE(single.table.size() == 1);

  base.lambda_grid = {};
  CHECK_THROWS_AS(select_lambda(fixture.graph, fixture.split, base), ConfigError);
}

TEST_CASE("encoder and conditional policy persistence round-trips") {
  Encoder encoder = make_encoder(8, 9, 16, {20, 20}, 3);
  ConditionalPolicy policy = make_conditional_policy(8, 9, 16, {12}, 4);
  const auto dir = std::filesystem::temp_directory_path() / "pemb_embed_io";
  save_encoder(encoder, dir, "encoder");
  save_conditional_policy(policy, dir, "decoder");
  Encoder enc_back = load_encoder(dir, "encoder");
  ConditionalPolicy pol_back = load_conditional_policy(dir, "decoder");
  CHECK(enc_back.pair_net.weights == encoder.pair_net.weights);
  CHECK(enc_back.embed_dim == encoder.embed_dim);
  CHECK(enc_back.obs_dim == 8);
  CHECK(pol_back.decoder.weights == policy.decoder.weights);
  CHECK(pol_back.act_arity == 9);
  std::filesystem::remove_all(dir);
}
