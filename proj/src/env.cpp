#include "pemb/env.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pemb/errors.hpp"

namespace pemb::env {

using nlohmann::json;

MarkovGameSpec MarkovGameSpec::arena() {
  MarkovGameSpec spec;
  spec.kind = EnvKind::kArena;
  spec.horizon = 50;
  return spec;
}

MarkovGameSpec MarkovGameSpec::signal() {
  MarkovGameSpec spec;
  spec.kind = EnvKind::kSignal;
  spec.horizon = 25;
  return spec;
}

int MarkovGameSpec::observation_dim(int slot) const {
  if (kind == EnvKind::kArena) return 8;
  return slot == 0 ? 3 : 15;
}

int MarkovGameSpec::action_arity(int slot) const {
  if (kind == EnvKind::kArena) return 9;
  return slot == 0 ? message_arity : listener_move_arity;
}

Role MarkovGameSpec::role_of_slot(int slot) const {
  if (kind == EnvKind::kArena) return Role::kArenaAgent;
  return slot == 0 ? Role::kSpeaker : Role::kListener;
}

int Episode::slot_of(int agent_id) const {
  if (participants[0] == agent_id) return 0;
  if (participants[1] == agent_id) return 1;
  return -1;
}

// --- arena ---

std::array<double, 2> arena_thrust_direction(int action) {
  if (action < 0 || action > 8) throw ShapeError("arena action out of range");
  if (action == 8) return {0.0, 0.0};
  const double angle = static_cast<double>(action) * (M_PI / 4.0);
  return {std::cos(angle), std::sin(angle)};
}

ArenaState arena_reset(const MarkovGameSpec& spec, std::uint64_t seed) {
  if (spec.kind != EnvKind::kArena) throw ConfigError("arena_reset on non-arena spec");
  Rng rng(derive_seed(seed, 0xA12E));
  ArenaState state;
  const double j = spec.start_jitter;
  state.positions[0] = {-0.5 + rng.uniform(-j, j), rng.uniform(-j, j)};
  state.positions[1] = {0.5 + rng.uniform(-j, j), rng.uniform(-j, j)};
  return state;
}

std::array<Obs, 2> arena_observe(const ArenaState& state) {
  std::array<Obs, 2> obs;
  for (int a = 0; a < 2; ++a) {
    const int o = 1 - a;
    obs[a] = {state.positions[a][0],  state.positions[a][1],
              state.velocities[a][0], state.velocities[a][1],
              state.positions[o][0],  state.positions[o][1],
              state.velocities[o][0], state.velocities[o][1]};
  }
  return obs;
}

void arena_step(const MarkovGameSpec& spec, ArenaState& state, int action_first,
                int action_second) {
  if (state.done) throw StateError("arena_step: episode already finished");
  const std::array<int, 2> actions{action_first, action_second};
  for (int a = 0; a < 2; ++a) {
    const auto dir = arena_thrust_direction(actions[a]);
    for (int k = 0; k < 2; ++k) {
      state.velocities[a][k] = spec.friction * state.velocities[a][k] + spec.thrust * dir[k];
    }
  }
  for (int a = 0; a < 2; ++a) {
    state.positions[a][0] += state.velocities[a][0];
    state.positions[a][1] += state.velocities[a][1];
  }

  // Contact: push apart symmetrically along the center line and exchange the
  // velocity components normal to it.
  const double dx = state.positions[1][0] - state.positions[0][0];
  const double dy = state.positions[1][1] - state.positions[0][1];
  const double dist = std::hypot(dx, dy);
  const double contact = 2.0 * spec.agent_radius;
  if (dist < contact) {
    std::array<double, 2> n{1.0, 0.0};
    if (dist > 0.0) n = {dx / dist, dy / dist};
    const double push = 0.5 * (contact - dist);
    for (int k = 0; k < 2; ++k) {
      state.positions[0][k] -= push * n[k];
      state.positions[1][k] += push * n[k];
    }
    const double v0n = state.velocities[0][0] * n[0] + state.velocities[0][1] * n[1];
    const double v1n = state.velocities[1][0] * n[0] + state.velocities[1][1] * n[1];
    for (int k = 0; k < 2; ++k) {
      state.velocities[0][k] += (v1n - v0n) * n[k];
      state.velocities[1][k] += (v0n - v1n) * n[k];
    }
  }

  state.step_count += 1;
  const bool out0 = std::hypot(state.positions[0][0], state.positions[0][1]) > spec.disc_radius;
  const bool out1 = std::hypot(state.positions[1][0], state.positions[1][1]) > spec.disc_radius;
  if (out0 || out1) {
    state.done = true;
    if (out0 && out1) {
      state.outcome = ArenaOutcome::kDraw;
    } else {
      state.outcome = out0 ? ArenaOutcome::kWinSecond : ArenaOutcome::kWinFirst;
    }
  } else if (state.step_count >= spec.horizon) {
    state.done = true;
    state.outcome = ArenaOutcome::kDraw;
  }
}

// --- signal ---

SignalState signal_reset(const MarkovGameSpec& spec, std::uint64_t seed) {
  if (spec.kind != EnvKind::kSignal) throw ConfigError("signal_reset on non-signal spec");
  Rng rng(derive_seed(seed, 0x516E));
  SignalState state;
  const int n = spec.num_landmarks;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    state.landmarks.clear();
    for (int i = 0; i < n; ++i) {
      state.landmarks.push_back({rng.uniform(), rng.uniform()});
    }
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double d = std::hypot(state.landmarks[i][0] - state.landmarks[j][0],
                                    state.landmarks[i][1] - state.landmarks[j][1]);
        if (d < spec.landmark_min_separation) {
          ok = false;
          break;
        }
      }
    }
    if (ok) {
      state.target = rng.uniform_int(n);
      return state;
    }
  }
  throw SamplingError("signal_reset: landmark separation unsatisfiable");
}

Obs speaker_observe(const SignalState& state) {
  Obs obs(3, 0.0);
  obs[state.target] = 1.0;
  return obs;
}

Obs listener_observe(const SignalState& state) {
  Obs obs;
  obs.reserve(15);
  obs.push_back(state.listener_position[0]);
  obs.push_back(state.listener_position[1]);
  for (const auto& lm : state.landmarks) {
    obs.push_back(lm[0]);
    obs.push_back(lm[1]);
  }
  for (int s = 0; s < 7; ++s) obs.push_back(state.last_message == s ? 1.0 : 0.0);
  return obs;
}

void signal_step(const MarkovGameSpec& spec, SignalState& state, int speaker_action,
                 int listener_action) {
  if (state.done) throw StateError("signal_step: episode already finished");
  if (speaker_action < 0 || speaker_action >= spec.message_arity) {
    throw ShapeError("signal_step: speaker action out of range");
  }
  if (listener_action < 0 || listener_action >= spec.listener_move_arity) {
    throw ShapeError("signal_step: listener action out of range");
  }
  // Moves 0..3 are east, north, west, south; 4 stays put.
  static constexpr std::array<std::array<double, 2>, 5> kMoves{
      {{1, 0}, {0, 1}, {-1, 0}, {0, -1}, {0, 0}}};
  for (int k = 0; k < 2; ++k) {
    double p = state.listener_position[k] + spec.listener_step * kMoves[listener_action][k];
    state.listener_position[k] = std::clamp(p, 0.0, 1.0);
  }
  state.last_message = speaker_action;
  state.step_count += 1;
  if (state.step_count >= spec.horizon) {
    state.done = true;
    const auto& target = state.landmarks[state.target];
    state.final_reward = -std::hypot(state.listener_position[0] - target[0],
                                     state.listener_position[1] - target[1]);
  }
}

// --- rollout ---

Episode rollout(const MarkovGameSpec& spec, const Policy& first, const Policy& second,
                std::uint64_t seed, std::array<int, 2> participants) {
  if (spec.kind == EnvKind::kArena) {
    if (first.role() != Role::kArenaAgent || second.role() != Role::kArenaAgent) {
      throw ConfigError("rollout: arena games need two arena policies");
    }
  } else {
    if (first.role() != Role::kSpeaker || second.role() != Role::kListener) {
      throw ConfigError("rollout: signal games need a speaker then a listener");
    }
  }

  Episode episode;
  episode.env_kind = spec.kind;
  episode.participants = participants;
  episode.seed = seed;
  Rng rng_first(derive_seed(seed, 1));
  Rng rng_second(derive_seed(seed, 2));

  if (spec.kind == EnvKind::kArena) {
    ArenaState state = arena_reset(spec, seed);
    while (!state.done) {
      Step step;
      step.observations = arena_observe(state);
      step.actions[0] = first.act(step.observations[0], state.step_count, rng_first);
      step.actions[1] = second.act(step.observations[1], state.step_count, rng_second);
      arena_step(spec, state, step.actions[0], step.actions[1]);
      step.rewards = {0.0, 0.0};
      if (state.done) {
        switch (*state.outcome) {
          case ArenaOutcome::kWinFirst: step.rewards = {1.0, -1.0}; break;
          case ArenaOutcome::kWinSecond: step.rewards = {-1.0, 1.0}; break;
          case ArenaOutcome::kDraw: break;
        }
      }
      episode.steps.push_back(std::move(step));
    }
    episode.arena_outcome = state.outcome;
  } else {
    SignalState state = signal_reset(spec, seed);
    while (!state.done) {
      Step step;
      step.observations[0] = speaker_observe(state);
      step.observations[1] = listener_observe(state);
      step.actions[0] = first.act(step.observations[0], state.step_count, rng_first);
      step.actions[1] = second.act(step.observations[1], state.step_count, rng_second);
      signal_step(spec, state, step.actions[0], step.actions[1]);
      step.rewards = {0.0, 0.0};
      if (state.done) {
        step.rewards = {*state.final_reward, *state.final_reward};
      }
      episode.steps.push_back(std::move(step));
    }
    episode.shared_reward = state.final_reward;
  }
  return episode;
}

AgentEpisode agent_view(const Episode& episode, int agent_id) {
  const int slot = episode.slot_of(agent_id);
  if (slot < 0) {
    throw MembershipError("agent_view: agent did not participate in this episode");
  }
  AgentEpisode view;
  view.agent_id = agent_id;
  view.source_id = episode.id;
  view.observations.reserve(episode.steps.size());
  view.actions.reserve(episode.steps.size());
  for (const Step& step : episode.steps) {
    view.observations.push_back(step.observations[slot]);
    view.actions.push_back(step.actions[slot]);
  }
  return view;
}

// --- episode store ---

namespace {

json episode_to_json(const Episode& episode) {
  json j;
  j["id"] = episode.id;
  j["env"] = episode.env_kind == EnvKind::kArena ? "arena" : "signal";
  j["participants"] = episode.participants;
  j["seed"] = episode.seed;
  j["steps"] = episode.steps.size();
  const std::size_t n = episode.steps.size();
  std::array<std::size_t, 2> obs_dims{0, 0};
  if (n > 0) {
    obs_dims = {episode.steps[0].observations[0].size(),
                episode.steps[0].observations[1].size()};
  }
  j["obs_dims"] = obs_dims;
  for (int slot = 0; slot < 2; ++slot) {
    std::vector<double> obs_flat;
    obs_flat.reserve(n * obs_dims[slot]);
    std::vector<int> actions;
    std::vector<double> rewards;
    actions.reserve(n);
    rewards.reserve(n);
    for (const Step& step : episode.steps) {
      obs_flat.insert(obs_flat.end(), step.observations[slot].begin(),
                      step.observations[slot].end());
      actions.push_back(step.actions[slot]);
      rewards.push_back(step.rewards[slot]);
    }
    const char* tag = slot == 0 ? "first" : "second";
    j[std::string("obs_") + tag] = obs_flat;
    j[std::string("act_") + tag] = actions;
    j[std::string("rew_") + tag] = rewards;
  }
  if (episode.arena_outcome) {
    switch (*episode.arena_outcome) {
      case ArenaOutcome::kWinFirst: j["outcome"] = "win_first"; break;
      case ArenaOutcome::kWinSecond: j["outcome"] = "win_second"; break;
      case ArenaOutcome::kDraw: j["outcome"] = "draw"; break;
    }
  }
  if (episode.shared_reward) j["shared_reward"] = *episode.shared_reward;
  return j;
}

Episode episode_from_json(const json& j) {
  Episode episode;
  episode.id = j.at("id").get<long>();
  episode.env_kind = j.at("env").get<std::string>() == "arena" ? EnvKind::kArena
                                                               : EnvKind::kSignal;
  episode.participants = j.at("participants").get<std::array<int, 2>>();
  episode.seed = j.at("seed").get<std::uint64_t>();
  const auto n = j.at("steps").get<std::size_t>();
  const auto obs_dims = j.at("obs_dims").get<std::array<std::size_t, 2>>();
  episode.steps.resize(n);
  for (int slot = 0; slot < 2; ++slot) {
    const char* tag = slot == 0 ? "first" : "second";
    const auto obs_flat = j.at(std::string("obs_") + tag).get<std::vector<double>>();
    const auto actions = j.at(std::string("act_") + tag).get<std::vector<int>>();
    const auto rewards = j.at(std::string("rew_") + tag).get<std::vector<double>>();
    if (obs_flat.size() != n * obs_dims[slot] || actions.size() != n ||
        rewards.size() != n) {
      throw IoError("episode record has inconsistent array lengths");
    }
    for (std::size_t t = 0; t < n; ++t) {
      episode.steps[t].observations[slot].assign(
          obs_flat.begin() + static_cast<long>(t * obs_dims[slot]),
          obs_flat.begin() + static_cast<long>((t + 1) * obs_dims[slot]));
      episode.steps[t].actions[slot] = actions[t];
      episode.steps[t].rewards[slot] = rewards[t];
    }
  }
  if (j.contains("outcome")) {
    const std::string s = j.at("outcome").get<std::string>();
    if (s == "win_first") episode.arena_outcome = ArenaOutcome::kWinFirst;
    else if (s == "win_second") episode.arena_outcome = ArenaOutcome::kWinSecond;
    else if (s == "draw") episode.arena_outcome = ArenaOutcome::kDraw;
    else throw IoError("unknown outcome tag: " + s);
  }
  if (j.contains("shared_reward")) {
    episode.shared_reward = j.at("shared_reward").get<double>();
  }
  return episode;
}

}  // namespace

std::string episode_to_json_line(const Episode& episode) {
  return episode_to_json(episode).dump();
}

void save_episodes_jsonl(const std::vector<Episode>& episodes,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open episode store for writing: " + path.string());
  for (const Episode& e : episodes) out << episode_to_json(e).dump() << '\n';
  if (!out) throw IoError("failed writing episode store: " + path.string());
}

std::vector<Episode> load_episodes_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open episode store: " + path.string());
  std::vector<Episode> episodes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    episodes.push_back(episode_from_json(json::parse(line)));
  }
  return episodes;
}

void save_episodes_binary(const std::vector<Episode>& episodes,
                          const std::filesystem::path& path) {
  json array = json::array();
  for (const Episode& e : episodes) array.push_back(episode_to_json(e));
  const std::vector<std::uint8_t> bytes = json::to_msgpack(array);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open episode store for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing episode store: " + path.string());
}

std::vector<Episode> load_episodes_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open episode store: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const json array = json::from_msgpack(bytes);
  std::vector<Episode> episodes;
  episodes.reserve(array.size());
  for (const json& j : array) episodes.push_back(episode_from_json(j));
  return episodes;
}

}  // namespace pemb::env
