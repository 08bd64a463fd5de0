#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crlab::nn {

struct ParamEntry {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<double> values;

  bool operator==(const ParamEntry&) const = default;
};

std::size_t shape_size(std::span<const std::uint32_t> shape);
std::string shape_string(std::span<const std::uint32_t> shape);

// Named, shaped parameter arrays in insertion order. Insertion order is the
// iteration and serialization order.
class ParamSet {
 public:
  ParamEntry& add(std::string name, std::vector<std::uint32_t> shape,
                  std::vector<double> values);
  ParamEntry& add_zeros(std::string name, std::vector<std::uint32_t> shape);

  const ParamEntry* find(std::string_view name) const;
  ParamEntry* find(std::string_view name);
  // Contract error naming the missing entry.
  const ParamEntry& at(std::string_view name) const;
  ParamEntry& at(std::string_view name);
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::span<const ParamEntry> entries() const { return entries_; }
  std::span<ParamEntry> entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_values() const;

  // Same names and shapes, all values zero.
  ParamSet zeros_like() const;
  // Entries whose name starts with `prefix`.
  ParamSet subset(std::string_view prefix) const;
  // Appends every entry of `other` (names must not collide).
  void merge(const ParamSet& other);
  // Overwrites values of same-named entries (shapes must match).
  void assign_from(const ParamSet& other);
  // Throws unless names and shapes match `other` exactly, in order.
  void check_aligned(const ParamSet& other, std::string_view context) const;

  void set_zero();

  std::uint64_t version = 0;

  bool operator==(const ParamSet& other) const { return entries_ == other.entries_; }

 private:
  std::vector<ParamEntry> entries_;
};

// Rounds every value to the nearest 32-bit float (checkpoint precision).
ParamSet quantize_f32(const ParamSet& params);

}  // namespace crlab::nn
