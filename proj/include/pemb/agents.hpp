#ifndef PEMB_AGENTS_HPP_
#define PEMB_AGENTS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pemb/env.hpp"
#include "pemb/rng.hpp"

namespace pemb::agents {

// Parameterized arena fighting style. A style mixes approach pressure
// (aggressiveness), circling (orbit_bias), and decision noise (temperature);
// a nonzero dash_period adds periodic all-out lunges.
struct ArenaStyle {
  double aggressiveness = 0.5;  // [0, 1]
  double orbit_bias = 0.0;      // [-0.5, 0.5]
  double temperature = 0.5;     // [0.1, 1.0]
  int dash_period = 0;          // 0 (none) or 4..12

  bool operator==(const ArenaStyle&) const = default;
};

// Styles sampled on a shifted low-discrepancy grid over the style box;
// deterministic in the seed, pairwise distinct. Throws ConfigError for n < 2.
std::vector<ArenaStyle> make_arena_population(int n, std::uint64_t seed);

// Fixed population of contrasting fighting styles: evasive drifters on even
// indices, reckless pursuers on odd ones. Pursuer-vs-drifter matches resolve
// decisively (the pursuer tends to fling itself out of the disc), which gives
// benchmark graphs a mixed, style-predictable outcome distribution. Works
// best with the 100-step horizon.
std::vector<ArenaStyle> make_contrast_arena_population(int n);

// Closed-form action distribution of a style at one observation: softmax over
// cosine scores of the 8 thrust directions against the desired heading, with
// the no-thrust action scored 0.
std::array<double, 9> arena_action_distribution(const ArenaStyle& style,
                                                const env::Obs& obs, int step_index);

int arena_act(const ArenaStyle& style, const env::Obs& obs, int step_index, Rng& rng);

// Masked-channel speaker: prefers codebook[target], never emits a masked
// symbol. temperature is the exploration probability.
struct SpeakerSpec {
  std::vector<int> masked_symbols;  // sorted, size 1 or 2
  std::array<int, 3> codebook{};    // target -> symbol, avoids masked symbols
  double temperature = 0.0;

  bool is_masked(int symbol) const;
};

// Table-driven listener: decodes the last symbol to a landmark guess and
// walks toward it with probability obedience, otherwise moves uniformly.
struct ListenerSpec {
  std::array<int, 7> decode_table{};  // symbol -> landmark
  double obedience = 1.0;             // [0.5, 1.0]
  double temperature = 0.0;

  bool operator==(const ListenerSpec&) const = default;
};

// The 28 speakers enumerate every 1- and 2-symbol mask in canonical order;
// each speaker pairs with two listeners (a ring), and listener decode tables
// are derived from their two partner speakers' codebooks.
struct SignalPopulation {
  std::vector<SpeakerSpec> speakers;
  std::vector<ListenerSpec> listeners;
  // speaker s talks to listeners s and (s+1) mod n.
  std::vector<std::array<int, 2>> speaker_partners;
};

SignalPopulation make_signal_population(std::uint64_t seed);

int speaker_act(const SpeakerSpec& spec, const env::Obs& obs, Rng& rng);
int listener_act(const ListenerSpec& spec, const env::Obs& obs, Rng& rng);

// env::Policy adapters over the scripted specs.
struct ArenaStylePolicy : env::Policy {
  ArenaStyle style;
  explicit ArenaStylePolicy(ArenaStyle s) : style(s) {}
  env::Role role() const override { return env::Role::kArenaAgent; }
  int act(const env::Obs& obs, int step_index, Rng& rng) const override {
    return arena_act(style, obs, step_index, rng);
  }
};

struct SpeakerPolicy : env::Policy {
  SpeakerSpec spec;
  explicit SpeakerPolicy(SpeakerSpec s) : spec(std::move(s)) {}
  env::Role role() const override { return env::Role::kSpeaker; }
  int act(const env::Obs& obs, int, Rng& rng) const override {
    return speaker_act(spec, obs, rng);
  }
};

struct ListenerPolicy : env::Policy {
  ListenerSpec spec;
  explicit ListenerPolicy(ListenerSpec s) : spec(s) {}
  env::Role role() const override { return env::Role::kListener; }
  int act(const env::Obs& obs, int, Rng& rng) const override {
    return listener_act(spec, obs, rng);
  }
};

// Population manifests, serialized next to episode stores so experiments are
// replayable from artifacts alone.
void save_arena_population(const std::vector<ArenaStyle>& styles,
                           const std::filesystem::path& path);
std::vector<ArenaStyle> load_arena_population(const std::filesystem::path& path);
void save_signal_population(const SignalPopulation& population,
                            const std::filesystem::path& path);
SignalPopulation load_signal_population(const std::filesystem::path& path);

}  // namespace pemb::agents

#endif  // PEMB_AGENTS_HPP_
