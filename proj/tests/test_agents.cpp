#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "pemb/agents.hpp"
#include "pemb/errors.hpp"

using namespace pemb;
using namespace pemb::agents;

TEST_CASE("make_arena_population yields distinct deterministic styles") {
  auto styles = make_arena_population(25, 7);
  CHECK(styles.size() == 25);
  for (std::size_t i = 0; i < styles.size(); ++i) {
    for (std::size_t j = i + 1; j < styles.size(); ++j) {
      CHECK(styles[i] != styles[j]);
    }
    CHECK(styles[i].aggressiveness >= 0.0);
    CHECK(styles[i].aggressiveness <= 1.0);
    CHECK(styles[i].orbit_bias >= -0.5);
    CHECK(styles[i].orbit_bias <= 0.5);
    CHECK(styles[i].temperature >= 0.1);
    CHECK(styles[i].temperature <= 1.0);
    CHECK((styles[i].dash_period == 0 ||
           (styles[i].dash_period >= 4 && styles[i].dash_period <= 12)));
  }
  auto again = make_arena_population(8, 3);
  auto again2 = make_arena_population(8, 3);
  CHECK(again == again2);
  CHECK_THROWS_AS(make_arena_population(1, 0), ConfigError);
}

TEST_CASE("arena_act heads toward an eastern opponent when fully aggressive") {
  ArenaStyle style;
  style.aggressiveness = 1.0;
  style.orbit_bias = 0.0;
  style.temperature = 0.1;
  style.dash_period = 0;
  env::Obs obs{0, 0, 0, 0, 0.8, 0, 0, 0};  // opponent due east

  const auto dist = arena_action_distribution(style, obs, 0);
  // Closed form at tau=0.1: scores are cosines, east scores 1.
  double expected_east;
  {
    double z = 0.0;
    double scores[9];
    for (int a = 0; a < 8; ++a) scores[a] = std::cos(a * M_PI / 4.0);
    scores[8] = 0.0;
    for (double s : scores) z += std::exp(s / 0.1 - 10.0);
    expected_east = std::exp(1.0 / 0.1 - 10.0) / z;
  }
  CHECK(dist[0] == doctest::Approx(expected_east).epsilon(1e-12));
  CHECK(dist[0] > 0.9);

  // Monte Carlo agreement with the closed form.
  Rng rng(99);
  int east = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    if (arena_act(style, obs, 0, rng) == 0) ++east;
  }
  CHECK(std::fabs(static_cast<double>(east) / trials - expected_east) < 0.01);
}

TEST_CASE("arena_act degenerates to uniform when all headings vanish") {
  ArenaStyle style;
  style.temperature = 1.0;
  env::Obs obs{0, 0, 0, 0, 0, 0, 0, 0};  // opponent and center coincide with self
  const auto dist = arena_action_distribution(style, obs, 0);
  for (double p : dist) CHECK(p == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("arena_act empirical frequencies match the closed-form softmax") {
  ArenaStyle style;
  style.aggressiveness = 0.6;
  style.orbit_bias = 0.25;
  style.temperature = 0.4;
  style.dash_period = 0;
  env::Obs obs{0.2, -0.1, 0, 0, -0.4, 0.5, 0, 0};
  const auto dist = arena_action_distribution(style, obs, 3);

  Rng rng(123);
  std::array<int, 9> counts{};
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) ++counts[arena_act(style, obs, 3, rng)];
  for (int a = 0; a < 9; ++a) {
    CHECK(std::fabs(static_cast<double>(counts[a]) / trials - dist[a]) < 1e-2);
  }
}

TEST_CASE("dash ticks force full aggression periodically") {
  ArenaStyle style;
  style.aggressiveness = 0.0;
  style.orbit_bias = 0.0;
  style.temperature = 0.1;
  style.dash_period = 6;
  // Self away from center, opponent on the far side: center-seeker heads west,
  // dasher heads east toward the opponent.
  env::Obs obs{0.4, 0.0, 0, 0, 0.9, 0.0, 0, 0};
  const auto dash = arena_action_distribution(style, obs, 0);   // 0 % 6 < 2
  const auto cruise = arena_action_distribution(style, obs, 3); // 3 % 6 >= 2
  CHECK(dash[0] > 0.5);    // toward opponent (east)
  CHECK(cruise[4] > 0.5);  // toward center (west)
}

TEST_CASE("default 8-style population is identifiable by action distributions") {
  auto styles = make_arena_population(8, 0);
  Rng rng(4242);
  double worst = 1.0;
  for (std::size_t i = 0; i < styles.size(); ++i) {
    for (std::size_t j = i + 1; j < styles.size(); ++j) {
      double tv_sum = 0.0;
      Rng obs_rng(777);  // same observations for every pair
      for (int k = 0; k < 100; ++k) {
        env::Obs obs(8);
        for (double& x : obs) x = obs_rng.uniform(-0.8, 0.8);
        const auto p = arena_action_distribution(styles[i], obs, k);
        const auto q = arena_action_distribution(styles[j], obs, k);
        double tv = 0.0;
        for (int a = 0; a < 9; ++a) tv += std::fabs(p[a] - q[a]);
        tv_sum += 0.5 * tv;
      }
      worst = std::min(worst, tv_sum / 100.0);
    }
  }
  CHECK(worst > 0.05);
  (void)rng;
}

TEST_CASE("make_signal_population enumerates all 28 masks") {
  SignalPopulation pop = make_signal_population(11);
  REQUIRE(pop.speakers.size() == 28);
  REQUIRE(pop.listeners.size() == 28);
  std::set<std::vector<int>> masks;
  for (const auto& s : pop.speakers) {
    CHECK((s.masked_symbols.size() == 1 || s.masked_symbols.size() == 2));
    masks.insert(s.masked_symbols);
    for (int t = 0; t < 3; ++t) {
      CHECK(!s.is_masked(s.codebook[t]));
      for (int u = t + 1; u < 3; ++u) CHECK(s.codebook[t] != s.codebook[u]);
    }
  }
  CHECK(masks.size() == 28);

  for (const auto& l : pop.listeners) {
    CHECK(l.obedience >= 0.5);
    CHECK(l.obedience <= 1.0);
    for (int s = 0; s < 7; ++s) {
      CHECK(l.decode_table[s] >= 0);
      CHECK(l.decode_table[s] <= 2);
    }
  }

  // Ring pairing: two listeners per speaker, two speakers per listener.
  std::array<int, 28> listener_degree{};
  for (const auto& partners : pop.speaker_partners) {
    CHECK(partners[0] != partners[1]);
    ++listener_degree[partners[0]];
    ++listener_degree[partners[1]];
  }
  for (int deg : listener_degree) CHECK(deg == 2);

  // Partner speakers decode correctly through their listeners.
  for (int s = 0; s < 28; ++s) {
    for (int l : pop.speaker_partners[s]) {
      int decoded_ok = 0;
      for (int t = 0; t < 3; ++t) {
        if (pop.listeners[l].decode_table[pop.speakers[s].codebook[t]] == t) ++decoded_ok;
      }
      // The primary partner always decodes all three targets; the secondary
      // may lose codewords to the primary's overrides.
      if (l == s) CHECK(decoded_ok == 3);
      else CHECK(decoded_ok >= 1);
    }
  }

  SignalPopulation again = make_signal_population(11);
  CHECK(again.listeners == pop.listeners);
  for (std::size_t i = 0; i < pop.speakers.size(); ++i) {
    CHECK(again.speakers[i].codebook == pop.speakers[i].codebook);
    CHECK(again.speakers[i].masked_symbols == pop.speakers[i].masked_symbols);
  }
}

TEST_CASE("speaker_act honors the codebook and the mask") {
  SignalPopulation pop = make_signal_population(5);
  SpeakerSpec zero_temp = pop.speakers[3];
  zero_temp.temperature = 0.0;
  Rng rng(1);
  env::Obs target2{0, 0, 1};
  for (int t = 0; t < 50; ++t) {
    CHECK(speaker_act(zero_temp, target2, rng) == zero_temp.codebook[2]);
  }

  SpeakerSpec noisy = pop.speakers[10];
  noisy.temperature = 0.9;
  env::Obs target0{1, 0, 0};
  for (int t = 0; t < 100000; ++t) {
    CHECK(!noisy.is_masked(speaker_act(noisy, target0, rng)));
  }

  CHECK_THROWS_AS(speaker_act(zero_temp, env::Obs{0.5, 0.5, 0}, rng), ShapeError);
  CHECK_THROWS_AS(speaker_act(zero_temp, env::Obs{1, 0, 1}, rng), ShapeError);
  CHECK_THROWS_AS(speaker_act(zero_temp, env::Obs{0, 0, 0}, rng), ShapeError);
}

TEST_CASE("listener_act walks greedily toward the decoded landmark") {
  ListenerSpec spec;
  spec.decode_table = {0, 1, 2, 0, 1, 2, 0};
  spec.obedience = 1.0;
  Rng rng(9);

  // Landmark 1 sits east of the listener; symbol 1 decodes to landmark 1.
  env::Obs obs(15, 0.0);
  obs[0] = 0.40;  // own position
  obs[1] = 0.50;
  obs[2] = 0.10; obs[3] = 0.90;   // landmark 0
  obs[4] = 0.45; obs[5] = 0.50;   // landmark 1, adjacent east
  obs[6] = 0.90; obs[7] = 0.10;   // landmark 2
  obs[8 + 1] = 1.0;               // message symbol 1
  CHECK(listener_act(spec, obs, rng) == 0);  // east

  // Without a message the guess is random but the move stays valid.
  env::Obs blank = obs;
  blank[9] = 0.0;
  for (int t = 0; t < 100; ++t) {
    int a = listener_act(spec, blank, rng);
    CHECK(a >= 0);
    CHECK(a <= 4);
  }
  env::Obs bad = obs;
  bad[10] = 1.0;  // two hot bits
  CHECK_THROWS_AS(listener_act(spec, bad, rng), ShapeError);
}

TEST_CASE("population manifests round-trip") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto arena_path = dir / "pemb_arena_pop.json";
  const auto signal_path = dir / "pemb_signal_pop.json";

  auto styles = make_arena_population(8, 21);
  save_arena_population(styles, arena_path);
  CHECK(load_arena_population(arena_path) == styles);

  SignalPopulation pop = make_signal_population(21);
  save_signal_population(pop, signal_path);
  SignalPopulation back = load_signal_population(signal_path);
  CHECK(back.listeners == pop.listeners);
  CHECK(back.speaker_partners == pop.speaker_partners);
  for (std::size_t i = 0; i < pop.speakers.size(); ++i) {
    CHECK(back.speakers[i].masked_symbols == pop.speakers[i].masked_symbols);
    CHECK(back.speakers[i].codebook == pop.speakers[i].codebook);
    CHECK(back.speakers[i].temperature == pop.speakers[i].temperature);
  }

  std::filesystem::remove(arena_path);
  std::filesystem::remove(signal_path);
}
