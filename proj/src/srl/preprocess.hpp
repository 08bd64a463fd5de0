#pragma once

#include <span>
#include <string>
#include <vector>

#include "nn/mlp.hpp"
#include "nn/params.hpp"
#include "sim/env.hpp"

namespace crlab::srl {

// Image to network-input transform. Pixels become their signed difference
// to the image's per-channel median (the background), scaled by 1/255 and
// average-pooled to a grid; an optional per-feature standardization fitted on
// a frame set is applied last.
struct Preprocessor {
  int height = 64;
  int width = 64;
  int grid = 16;
  bool foreground = true;
  // Gaussian smoothing of the pooled grid, in cells; 0 disables it.
  double blur_sigma = 0.0;
  std::vector<double> mean;
  std::vector<double> scale;

  static Preprocessor for_image(int height, int width, int grid = 16);

  int pool_y() const { return height / grid; }
  int pool_x() const { return width / grid; }
  int feature_size() const { return grid * grid * 3; }
  bool standardized() const { return !mean.empty(); }

  // Throws a usage error if `obs` does not have the declared size.
  void check(const sim::Observation& obs) const;
  // Pooled features before standardization.
  void pooled(const sim::Observation& obs, std::span<double> out) const;
  void apply(const sim::Observation& obs, std::span<double> out) const;
  nn::Matrix apply(const sim::Observation& obs) const;

  // Fits the standardization to rows of pooled features and applies it in place.
  void fit(nn::Matrix& rows);
  void standardize(nn::Matrix& rows) const;

  void store(nn::ParamSet& out, const std::string& prefix) const;
  static Preprocessor load(const nn::ParamSet& stored, const std::string& prefix);
};

}  // namespace crlab::srl
