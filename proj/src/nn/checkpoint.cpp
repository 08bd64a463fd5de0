#include "nn/checkpoint.hpp"

#include "common/binio.hpp"
#include "common/hash.hpp"

namespace crlab::nn {

namespace {

std::uint64_t entry_digest(const ParamEntry& e) {
  ByteWriter w;
  for (double v : e.values) w.f32(static_cast<float>(v));
  return fnv1a64(w.data());
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params) {
  ByteWriter w;
  w.magic("CRLP");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) w.u32(d);
    for (double v : e.values) w.f32(static_cast<float>(v));
  }
  return w.take();
}

ParamSet decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& what) {
  ByteReader r(bytes, what);
  r.expect_magic("CRLP");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw_io(what + ": unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  ParamSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw_io(what + ": implausible rank for '" + name + "'");
    std::vector<std::uint32_t> shape(rank);
    for (auto& d : shape) d = r.u32();
    const std::size_t n = shape_size(shape);
    if (n * 4 > r.remaining()) throw_io(what + ": truncated values for '" + name + "'");
    std::vector<double> values(n);
    for (auto& v : values) v = static_cast<double>(r.f32());
    if (out.contains(name)) throw_io(what + ": duplicate entry '" + name + "'");
    out.add(std::move(name), std::move(shape), std::move(values));
  }
  if (!r.at_end()) throw_io(what + ": trailing bytes");
  return out;
}

std::string checkpoint_manifest(const ParamSet& params, std::uint64_t file_digest) {
  std::string text = "# CRLP checkpoint manifest\n";
  text += "file_digest " + hex64(file_digest) + "\n";
  for (const auto& e : params.entries()) {
    text += e.name + " " + shape_string(e.shape) + " " + hex64(entry_digest(e)) + "\n";
  }
  return text;
}

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".manifest";
}

std::uint64_t save_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  const std::uint64_t digest = fnv1a64(bytes);
  write_file(path, bytes);
  write_text_file(manifest_path(path), checkpoint_manifest(params, digest));
  return digest;
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace crlab::nn
