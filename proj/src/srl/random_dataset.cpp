#include "srl/random_dataset.hpp"

#include <cstring>

#include "common/binio.hpp"
#include "common/error.hpp"
#include "common/hash.hpp"

namespace crlab::srl {

RandomDataset collect_random_dataset(sim::Env& env, int task_id, std::int64_t n_steps,
                                     std::uint64_t seed, int episode_steps) {
  if (n_steps < 1) throw_config("collect_random_dataset: steps must be >= 1");
  if (episode_steps < 0) throw_config("collect_random_dataset: episode_steps must be >= 0");
  RandomDataset data;
  data.task_id = task_id;
  data.seed = seed;
  data.height = env.task().image_size;
  data.width = env.task().image_size;
  data.transitions.reserve(static_cast<std::size_t>(n_steps));
  Rng policy(derive_seed(seed, "random-policy"));
  std::uint64_t episode = 0;
  bool need_reset = true;
  int in_episode = 0;
  for (std::int64_t t = 0; t < n_steps; ++t) {
    if (need_reset) {
      data.frames.push_back(env.reset(derive_seed(seed, episode++)));
      need_reset = false;
      in_episode = 0;
    }
    const auto action = static_cast<std::uint8_t>(policy.below(sim::kNumActions));
    const auto before = static_cast<std::uint32_t>(data.frames.size() - 1);
    const sim::Env::Transition tr = env.step(static_cast<sim::Action>(action));
    data.frames.push_back(env.observation());
    data.transitions.push_back({before, action, static_cast<std::uint32_t>(data.frames.size() - 1)});
    need_reset = tr.done || (episode_steps > 0 && ++in_episode >= episode_steps);
  }
  return data;
}

namespace {

void write_header(ByteWriter& w, const RandomDataset& data) {
  w.magic("CRLR");
  w.u32(kRandomDatasetVersion);
  w.u32(static_cast<std::uint32_t>(data.task_id));
  w.u32(static_cast<std::uint32_t>(data.height));
  w.u32(static_cast<std::uint32_t>(data.width));
  w.u32(static_cast<std::uint32_t>(data.transitions.size()));
  w.u64(data.seed);
}

}  // namespace

std::vector<std::uint8_t> encode_random_dataset(const RandomDataset& data) {
  ByteWriter w;
  write_header(w, data);
  for (std::size_t i = 0; i < data.size(); ++i) {
    w.bytes(data.obs(i).pixels);
    w.u8(data.transitions[i].action);
    w.bytes(data.next_obs(i).pixels);
  }
  return w.take();
}

RandomDataset decode_random_dataset(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes, what);
  r.expect_magic("CRLR");
  const std::uint32_t version = r.u32();
  if (version != kRandomDatasetVersion) throw_io(what + ": unsupported version " + std::to_string(version));
  RandomDataset data;
  data.task_id = static_cast<int>(r.u32());
  data.height = static_cast<int>(r.u32());
  data.width = static_cast<int>(r.u32());
  const std::uint32_t count = r.u32();
  data.seed = r.u64();
  const std::size_t frame_bytes = static_cast<std::size_t>(data.height) * data.width * 3;
  if (count == 0) throw_io(what + ": empty dataset");
  if (r.remaining() != static_cast<std::size_t>(count) * (2 * frame_bytes + 1)) {
    throw_io(what + ": size does not match header");
  }
  auto make_frame = [&](std::span<const std::uint8_t> px) {
    sim::Observation o;
    o.height = data.height;
    o.width = data.width;
    o.pixels.assign(px.begin(), px.end());
    return o;
  };
  data.transitions.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto first = r.bytes(frame_bytes);
    const std::uint8_t action = r.u8();
    auto second = r.bytes(frame_bytes);
    if (action >= sim::kNumActions) throw_io(what + ": action out of range in record " + std::to_string(i));
    const bool shared = !data.frames.empty() &&
                        std::memcmp(data.frames.back().pixels.data(), first.data(), frame_bytes) == 0;
    if (!shared) data.frames.push_back(make_frame(first));
    const auto before = static_cast<std::uint32_t>(data.frames.size() - 1);
    data.frames.push_back(make_frame(second));
    data.transitions.push_back({before, action, static_cast<std::uint32_t>(data.frames.size() - 1)});
  }
  return data;
}

std::uint64_t random_dataset_digest(const RandomDataset& data) {
  ByteWriter header;
  write_header(header, data);
  std::uint64_t h = fnv1a64(header.data());
  for (std::size_t i = 0; i < data.size(); ++i) {
    h = fnv1a64(data.obs(i).pixels, h);
    const std::uint8_t a = data.transitions[i].action;
    h = fnv1a64(std::span(&a, 1), h);
    h = fnv1a64(data.next_obs(i).pixels, h);
  }
  return h;
}

void save_random_dataset(const RandomDataset& data, const std::filesystem::path& path) {
  write_file(path, encode_random_dataset(data));
}

RandomDataset load_random_dataset(const std::filesystem::path& path) {
  return decode_random_dataset(read_file(path), path.string());
}

}  // namespace crlab::srl
