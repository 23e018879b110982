#include "pemb/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "pemb/errors.hpp"
#include "pemb/nn.hpp"

namespace pemb::agents {

using nlohmann::json;

namespace {

constexpr int kDashOptions[10] = {0, 4, 5, 6, 7, 8, 9, 10, 11, 12};

}  // namespace

std::vector<ArenaStyle> make_arena_population(int n, std::uint64_t seed) {
  if (n < 2) throw ConfigError("make_arena_population: need at least 2 styles");
  Rng rng(derive_seed(seed, 0xA6E7));
  const double shift[4] = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
  const std::uint64_t bases[4] = {2, 3, 5, 7};

  std::vector<ArenaStyle> styles;
  std::uint64_t index = 1;
  while (static_cast<int>(styles.size()) < n) {
    double u[4];
    for (int j = 0; j < 4; ++j) {
      double v = radical_inverse(index, bases[j]) + shift[j];
      u[j] = v - std::floor(v);
    }
    ++index;
    ArenaStyle style;
    style.aggressiveness = u[0];
    style.orbit_bias = -0.5 + u[1];
    style.temperature = 0.1 + 0.9 * u[2];
    style.dash_period = kDashOptions[std::min(9, static_cast<int>(u[3] * 10.0))];
    if (std::find(styles.begin(), styles.end(), style) != styles.end()) continue;
    styles.push_back(style);
  }
  return styles;
}

std::vector<ArenaStyle> make_contrast_arena_population(int n) {
  if (n < 2) throw ConfigError("make_contrast_arena_population: need at least 2 styles");
  static constexpr ArenaStyle kDrifters[4] = {
      {0.10, 0.30, 1.00, 0},
      {0.00, 0.40, 0.90, 0},
      {0.05, -0.35, 0.80, 0},
      {0.15, -0.15, 0.95, 0},
  };
  static constexpr ArenaStyle kPursuers[4] = {
      {1.00, 0.50, 0.45, 0},
      {1.00, -0.50, 0.55, 4},
      {0.95, 0.50, 0.65, 6},
      {1.00, -0.45, 0.50, 8},
  };
  std::vector<ArenaStyle> styles;
  for (int k = 0; k < n; ++k) {
    const int flavor = (k / 2) % 4;
    const int cycle = k / 8;
    ArenaStyle style = (k % 2 == 0) ? kDrifters[flavor] : kPursuers[flavor];
    // Repeats beyond the 8 base flavors get a small deterministic offset so
    // styles stay pairwise distinct.
    style.temperature = std::clamp(style.temperature - 0.04 * cycle, 0.1, 1.0);
    style.orbit_bias = std::clamp(style.orbit_bias + 0.02 * cycle, -0.5, 0.5);
    styles.push_back(style);
  }
  return styles;
}

std::array<double, 9> arena_action_distribution(const ArenaStyle& style,
                                                const env::Obs& obs, int step_index) {
  if (obs.size() != 8) throw ShapeError("arena_act: observation must have 8 entries");
  for (double x : obs) {
    if (!std::isfinite(x)) throw NumericError("arena_act: non-finite observation");
  }
  const double sx = obs[0], sy = obs[1];
  const double ox = obs[4], oy = obs[5];

  double alpha = style.aggressiveness;
  if (style.dash_period > 0 && step_index % style.dash_period < 2) alpha = 1.0;

  const double to_opp_x = ox - sx, to_opp_y = oy - sy;
  const double opp_norm = std::hypot(to_opp_x, to_opp_y);
  const double to_ctr_x = -sx, to_ctr_y = -sy;
  const double ctr_norm = std::hypot(to_ctr_x, to_ctr_y);

  double dx = 0.0, dy = 0.0;
  if (opp_norm == 0.0) {
    // Degenerate heading: fall back to center-seeking.
    if (ctr_norm > 0.0) {
      dx = to_ctr_x / ctr_norm;
      dy = to_ctr_y / ctr_norm;
    }
  } else {
    const double ux = to_opp_x / opp_norm, uy = to_opp_y / opp_norm;
    dx = alpha * ux;
    dy = alpha * uy;
    if (ctr_norm > 0.0) {
      dx += (1.0 - alpha) * to_ctr_x / ctr_norm;
      dy += (1.0 - alpha) * to_ctr_y / ctr_norm;
    }
    dx += style.orbit_bias * -uy;
    dy += style.orbit_bias * ux;
  }

  nn::Vec scores(9, 0.0);
  const double d_norm = std::hypot(dx, dy);
  if (d_norm > 0.0) {
    for (int a = 0; a < 8; ++a) {
      const auto dir = env::arena_thrust_direction(a);
      scores[a] = (dir[0] * dx + dir[1] * dy) / d_norm;
    }
  }
  for (double& s : scores) s /= style.temperature;
  const nn::Vec probs = nn::softmax(scores);
  std::array<double, 9> out;
  std::copy(probs.begin(), probs.end(), out.begin());
  return out;
}

int arena_act(const ArenaStyle& style, const env::Obs& obs, int step_index, Rng& rng) {
  const auto probs = arena_action_distribution(style, obs, step_index);
  double u = rng.uniform();
  for (int a = 0; a < 9; ++a) {
    u -= probs[a];
    if (u < 0.0) return a;
  }
  return 8;
}

bool SpeakerSpec::is_masked(int symbol) const {
  return std::find(masked_symbols.begin(), masked_symbols.end(), symbol) !=
         masked_symbols.end();
}

SignalPopulation make_signal_population(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x51A7));
  SignalPopulation pop;

  // Canonical mask order: the 7 singletons, then pairs lexicographically.
  std::vector<std::vector<int>> masks;
  for (int s = 0; s < 7; ++s) masks.push_back({s});
  for (int a = 0; a < 7; ++a)
    for (int b = a + 1; b < 7; ++b) masks.push_back({a, b});

  for (const auto& mask : masks) {
    SpeakerSpec spec;
    spec.masked_symbols = mask;
    std::vector<int> usable;
    for (int s = 0; s < 7; ++s)
      if (!spec.is_masked(s)) usable.push_back(s);
    rng.shuffle(usable);
    for (int t = 0; t < 3; ++t) spec.codebook[t] = usable[t];
    spec.temperature = rng.uniform(0.0, 0.2);
    pop.speakers.push_back(std::move(spec));
  }

  const int n = static_cast<int>(pop.speakers.size());
  for (int s = 0; s < n; ++s) {
    pop.speaker_partners.push_back({s, (s + 1) % n});
  }

  // Listener l hears speakers l (primary) and l-1; the primary's codebook
  // wins decode conflicts. Symbols no partner uses decode to a random guess.
  for (int l = 0; l < n; ++l) {
    ListenerSpec spec;
    for (int s = 0; s < 7; ++s) spec.decode_table[s] = rng.uniform_int(3);
    const SpeakerSpec& secondary = pop.speakers[(l + n - 1) % n];
    for (int t = 0; t < 3; ++t) spec.decode_table[secondary.codebook[t]] = t;
    const SpeakerSpec& primary = pop.speakers[l];
    for (int t = 0; t < 3; ++t) spec.decode_table[primary.codebook[t]] = t;
    spec.obedience = rng.uniform(0.5, 1.0);
    spec.temperature = rng.uniform(0.0, 0.2);
    pop.listeners.push_back(spec);
  }
  return pop;
}

int speaker_act(const SpeakerSpec& spec, const env::Obs& obs, Rng& rng) {
  if (obs.size() != 3) throw ShapeError("speaker_act: observation must have 3 entries");
  int target = -1;
  for (int i = 0; i < 3; ++i) {
    if (obs[i] == 1.0) {
      if (target >= 0) throw ShapeError("speaker_act: malformed one-hot observation");
      target = i;
    } else if (obs[i] != 0.0) {
      throw ShapeError("speaker_act: malformed one-hot observation");
    }
  }
  if (target < 0) throw ShapeError("speaker_act: malformed one-hot observation");

  if (rng.uniform() >= spec.temperature) return spec.codebook[target];
  std::vector<int> usable;
  for (int s = 0; s < 7; ++s)
    if (!spec.is_masked(s)) usable.push_back(s);
  return usable[rng.uniform_int(static_cast<int>(usable.size()))];
}

int listener_act(const ListenerSpec& spec, const env::Obs& obs, Rng& rng) {
  if (obs.size() != 15) throw ShapeError("listener_act: observation must have 15 entries");
  int symbol = -1;
  for (int s = 0; s < 7; ++s) {
    if (obs[8 + s] == 1.0) {
      if (symbol >= 0) throw ShapeError("listener_act: malformed message slot");
      symbol = s;
    } else if (obs[8 + s] != 0.0) {
      throw ShapeError("listener_act: malformed message slot");
    }
  }
  const int guess = symbol < 0 ? rng.uniform_int(3) : spec.decode_table[symbol];

  if (rng.uniform() >= spec.obedience) return rng.uniform_int(5);

  // Greedy step toward the guessed landmark, ties to the lowest action.
  static constexpr std::array<std::array<double, 2>, 5> kMoves{
      {{1, 0}, {0, 1}, {-1, 0}, {0, -1}, {0, 0}}};
  const double gx = obs[2 + 2 * guess], gy = obs[3 + 2 * guess];
  int best = 0;
  double best_dist = 1e300;
  for (int a = 0; a < 5; ++a) {
    const double nx = std::clamp(obs[0] + 0.05 * kMoves[a][0], 0.0, 1.0);
    const double ny = std::clamp(obs[1] + 0.05 * kMoves[a][1], 0.0, 1.0);
    const double dist = std::hypot(nx - gx, ny - gy);
    if (dist < best_dist - 1e-15) {
      best_dist = dist;
      best = a;
    }
  }
  return best;
}

void save_arena_population(const std::vector<ArenaStyle>& styles,
                           const std::filesystem::path& path) {
  json array = json::array();
  for (const ArenaStyle& s : styles) {
    array.push_back({{"aggressiveness", s.aggressiveness},
                     {"orbit_bias", s.orbit_bias},
                     {"temperature", s.temperature},
                     {"dash_period", s.dash_period}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write population manifest: " + path.string());
  out << json{{"kind", "arena"}, {"styles", array}}.dump(2) << '\n';
}

std::vector<ArenaStyle> load_arena_population(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open population manifest: " + path.string());
  json j = json::parse(in);
  if (j.at("kind").get<std::string>() != "arena") {
    throw IoError("population manifest is not an arena population");
  }
  std::vector<ArenaStyle> styles;
  for (const json& e : j.at("styles")) {
    ArenaStyle s;
    s.aggressiveness = e.at("aggressiveness").get<double>();
    s.orbit_bias = e.at("orbit_bias").get<double>();
    s.temperature = e.at("temperature").get<double>();
    s.dash_period = e.at("dash_period").get<int>();
    styles.push_back(s);
  }
  return styles;
}

void save_signal_population(const SignalPopulation& population,
                            const std::filesystem::path& path) {
  json speakers = json::array();
  for (const SpeakerSpec& s : population.speakers) {
    speakers.push_back({{"masked_symbols", s.masked_symbols},
                        {"codebook", s.codebook},
                        {"temperature", s.temperature}});
  }
  json listeners = json::array();
  for (const ListenerSpec& l : population.listeners) {
    listeners.push_back({{"decode_table", l.decode_table},
                         {"obedience", l.obedience},
                         {"temperature", l.temperature}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write population manifest: " + path.string());
  out << json{{"kind", "signal"},
              {"speakers", speakers},
              {"listeners", listeners},
              {"speaker_partners", population.speaker_partners}}
             .dump(2)
      << '\n';
}

SignalPopulation load_signal_population(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open population manifest: " + path.string());
  json j = json::parse(in);
  if (j.at("kind").get<std::string>() != "signal") {
    throw IoError("population manifest is not a signal population");
  }
  SignalPopulation pop;
  for (const json& e : j.at("speakers")) {
    SpeakerSpec s;
    s.masked_symbols = e.at("masked_symbols").get<std::vector<int>>();
    s.codebook = e.at("codebook").get<std::array<int, 3>>();
    s.temperature = e.at("temperature").get<double>();
    pop.speakers.push_back(std::move(s));
  }
  for (const json& e : j.at("listeners")) {
    ListenerSpec l;
    l.decode_table = e.at("decode_table").get<std::array<int, 7>>();
    l.obedience = e.at("obedience").get<double>();
    l.temperature = e.at("temperature").get<double>();
    pop.listeners.push_back(l);
  }
  pop.speaker_partners =
      j.at("speaker_partners").get<std::vector<std::array<int, 2>>>();
  return pop;
}

}  // namespace pemb::agents
