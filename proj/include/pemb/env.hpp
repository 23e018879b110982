#ifndef PEMB_ENV_HPP_
#define PEMB_ENV_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "pemb/rng.hpp"

namespace pemb::env {

using Obs = std::vector<double>;

enum class EnvKind : std::uint8_t { kArena = 0, kSignal = 1 };

enum class Role : std::uint8_t { kArenaAgent = 0, kSpeaker = 1, kListener = 2 };

// Two-participant Markov game description plus environment constants.
//
// arena: two agents on a unit disc push each other out; leaving the disc
// loses, surviving to the horizon is a draw.
// signal: a speaker sees a target landmark and emits one symbol per step; a
// listener navigates a unit square; shared terminal reward is the negative
// distance of the listener to the target.
struct MarkovGameSpec {
  EnvKind kind = EnvKind::kArena;
  int horizon = 50;

  // arena constants
  double disc_radius = 1.0;
  double friction = 0.85;
  double thrust = 0.05;
  double agent_radius = 0.07;
  double start_jitter = 0.1;

  // signal constants
  int num_landmarks = 3;
  double landmark_min_separation = 0.2;
  double listener_step = 0.05;
  int message_arity = 7;
  int listener_move_arity = 5;

  static MarkovGameSpec arena();
  static MarkovGameSpec signal();

  // Observation layout / action arity for the participant slot (0 or 1).
  // Arena agents are symmetric; in signal games slot 0 is the speaker.
  int observation_dim(int slot) const;
  int action_arity(int slot) const;
  Role role_of_slot(int slot) const;
};

enum class ArenaOutcome : std::uint8_t { kWinFirst = 0, kWinSecond = 1, kDraw = 2 };

struct Step {
  std::array<Obs, 2> observations;
  std::array<int, 2> actions;
  std::array<double, 2> rewards;
};

// One bounded interaction between two agents, recorded from both sides.
struct Episode {
  long id = -1;
  EnvKind env_kind = EnvKind::kArena;
  std::array<int, 2> participants{0, 1};
  std::uint64_t seed = 0;
  std::vector<Step> steps;
  std::optional<ArenaOutcome> arena_outcome;
  std::optional<double> shared_reward;  // signal terminal reward

  int slot_of(int agent_id) const;  // 0, 1, or -1 when absent
};

// One agent's view of an episode: its own (observation, action) pairs only.
struct AgentEpisode {
  int agent_id = -1;
  long source_id = -1;
  std::vector<Obs> observations;
  std::vector<int> actions;

  std::size_t size() const { return actions.size(); }
};

// --- arena ---

struct ArenaState {
  std::array<std::array<double, 2>, 2> positions{};
  std::array<std::array<double, 2>, 2> velocities{};
  int step_count = 0;
  bool done = false;
  std::optional<ArenaOutcome> outcome;
};

ArenaState arena_reset(const MarkovGameSpec& spec, std::uint64_t seed);
std::array<Obs, 2> arena_observe(const ArenaState& state);
// Applies one simultaneous action pair; throws StateError on finished episodes.
void arena_step(const MarkovGameSpec& spec, ArenaState& state, int action_first,
                int action_second);

// Thrust direction of an arena action (unit vector; action 8 is zero).
std::array<double, 2> arena_thrust_direction(int action);

// --- signal ---

struct SignalState {
  std::vector<std::array<double, 2>> landmarks;
  int target = 0;
  std::array<double, 2> listener_position{0.5, 0.5};
  int last_message = -1;  // -1 before the first symbol arrives
  int step_count = 0;
  bool done = false;
  std::optional<double> final_reward;
};

SignalState signal_reset(const MarkovGameSpec& spec, std::uint64_t seed);
Obs speaker_observe(const SignalState& state);
Obs listener_observe(const SignalState& state);
void signal_step(const MarkovGameSpec& spec, SignalState& state, int speaker_action,
                 int listener_action);

// --- rollout machinery ---

// A stochastic policy over a discrete action set. Implementations must be
// pure given (obs, step_index, rng state) so rollouts stay reproducible.
struct Policy {
  virtual ~Policy() = default;
  virtual Role role() const = 0;
  virtual int act(const Obs& obs, int step_index, Rng& rng) const = 0;
};

// Plays one full episode. All stochasticity (reset, both policies) derives
// from the seed; participants are recorded in slot order (signal games:
// speaker first). Throws ConfigError when policy roles do not match the
// environment kind.
Episode rollout(const MarkovGameSpec& spec, const Policy& first, const Policy& second,
                std::uint64_t seed, std::array<int, 2> participants = {0, 1});

// Projection onto one participant; throws MembershipError for non-participants.
AgentEpisode agent_view(const Episode& episode, int agent_id);

// --- episode store ---
// Text store: one self-describing JSON record per line. Binary store: the
// same schema as a MessagePack array. Both round-trip losslessly.

void save_episodes_jsonl(const std::vector<Episode>& episodes,
                         const std::filesystem::path& path);
std::vector<Episode> load_episodes_jsonl(const std::filesystem::path& path);
void save_episodes_binary(const std::vector<Episode>& episodes,
                          const std::filesystem::path& path);
std::vector<Episode> load_episodes_binary(const std::filesystem::path& path);

std::string episode_to_json_line(const Episode& episode);

}  // namespace pemb::env

#endif  // PEMB_ENV_HPP_
