#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sim/env.hpp"

namespace crlab::srl {

struct RandomTransition {
  std::uint32_t obs = 0;       // index into frames
  std::uint8_t action = 0;
  std::uint32_t next_obs = 0;  // index into frames
};

// Transitions collected by a uniform-random policy. Consecutive transitions
// of one episode share the frame between them.
struct RandomDataset {
  int task_id = 0;
  std::uint64_t seed = 0;
  int height = 0;
  int width = 0;
  std::vector<sim::Observation> frames;
  std::vector<RandomTransition> transitions;

  std::size_t size() const { return transitions.size(); }
  const sim::Observation& obs(std::size_t i) const { return frames[transitions[i].obs]; }
  const sim::Observation& next_obs(std::size_t i) const { return frames[transitions[i].next_obs]; }
};

// Exactly `n_steps` transitions from `env`, resetting at every episode end
// and, when `episode_steps` > 0, after that many steps.
RandomDataset collect_random_dataset(sim::Env& env, int task_id, std::int64_t n_steps,
                                     std::uint64_t seed, int episode_steps = 0);

inline constexpr std::uint32_t kRandomDatasetVersion = 1;

// "CRLR" | u32 version | u32 task_id, u32 H, u32 W, u32 count, u64 seed |
// count x (obs_t bytes, u8 action, obs_t+1 bytes).
std::vector<std::uint8_t> encode_random_dataset(const RandomDataset& data);
RandomDataset decode_random_dataset(std::span<const std::uint8_t> bytes,
                                    const std::string& what = "random dataset");
std::uint64_t random_dataset_digest(const RandomDataset& data);

void save_random_dataset(const RandomDataset& data, const std::filesystem::path& path);
RandomDataset load_random_dataset(const std::filesystem::path& path);

}  // namespace crlab::srl
