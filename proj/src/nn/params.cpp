#include "nn/params.hpp"

#include "common/error.hpp"

namespace crlab::nn {

std::size_t shape_size(std::span<const std::uint32_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(std::span<const std::uint32_t> shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

ParamEntry& ParamSet::add(std::string name, std::vector<std::uint32_t> shape,
                          std::vector<double> values) {
  if (contains(name)) throw_usage("duplicate parameter name '" + name + "'");
  if (shape_size(shape) != values.size()) {
    throw_usage("parameter '" + name + "': shape " + shape_string(shape) + " does not match " +
                std::to_string(values.size()) + " values");
  }
  entries_.push_back({std::move(name), std::move(shape), std::move(values)});
  return entries_.back();
}

ParamEntry& ParamSet::add_zeros(std::string name, std::vector<std::uint32_t> shape) {
  const std::size_t n = shape_size(shape);
  return add(std::move(name), std::move(shape), std::vector<double>(n, 0.0));
}

const ParamEntry* ParamSet::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

ParamEntry* ParamSet::find(std::string_view name) {
  for (auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const ParamEntry& ParamSet::at(std::string_view name) const {
  const ParamEntry* e = find(name);
  if (!e) throw_usage("missing parameter '" + std::string(name) + "'");
  return *e;
}

ParamEntry& ParamSet::at(std::string_view name) {
  ParamEntry* e = find(name);
  if (!e) throw_usage("missing parameter '" + std::string(name) + "'");
  return *e;
}

std::size_t ParamSet::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.values.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& e : entries_) out.add_zeros(e.name, e.shape);
  return out;
}

ParamSet ParamSet::subset(std::string_view prefix) const {
  ParamSet out;
  for (const auto& e : entries_) {
    if (std::string_view(e.name).substr(0, prefix.size()) == prefix) out.add(e.name, e.shape, e.values);
  }
  return out;
}

void ParamSet::merge(const ParamSet& other) {
  for (const auto& e : other.entries_) add(e.name, e.shape, e.values);
}

void ParamSet::assign_from(const ParamSet& other) {
  for (const auto& e : other.entries_) {
    ParamEntry& mine = at(e.name);
    if (mine.shape != e.shape) {
      throw_usage("parameter '" + e.name + "': shape " + shape_string(e.shape) +
                  " does not match " + shape_string(mine.shape));
    }
    mine.values = e.values;
  }
}

void ParamSet::check_aligned(const ParamSet& other, std::string_view context) const {
  if (other.entries_.size() != entries_.size()) {
    throw_usage(std::string(context) + ": parameter count mismatch (" +
                std::to_string(entries_.size()) + " vs " + std::to_string(other.entries_.size()) + ")");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.shape != b.shape) {
      throw_usage(std::string(context) + ": misaligned entries '" + a.name + "' " +
                  shape_string(a.shape) + " vs '" + b.name + "' " + shape_string(b.shape));
    }
  }
}

void ParamSet::set_zero() {
  for (auto& e : entries_) std::fill(e.values.begin(), e.values.end(), 0.0);
}

ParamSet quantize_f32(const ParamSet& params) {
  ParamSet out = params;
  for (auto& e : out.entries()) {
    for (auto& v : e.values) v = static_cast<double>(static_cast<float>(v));
  }
  return out;
}

}  // namespace crlab::nn
