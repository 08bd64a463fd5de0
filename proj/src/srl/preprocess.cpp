#include "srl/preprocess.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "common/error.hpp"

namespace crlab::srl {

namespace {

constexpr double kMinScaleSd = 1e-3;

std::array<int, 3> channel_medians(const sim::Observation& obs) {
  std::array<std::array<int, 256>, 3> hist{};
  const std::size_t n = obs.pixels.size() / 3;
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) ++hist[c][obs.pixels[i * 3 + c]];
  }
  std::array<int, 3> med{};
  for (int c = 0; c < 3; ++c) {
    std::size_t seen = 0;
    for (int v = 0; v < 256; ++v) {
      seen += hist[c][v];
      if (seen > n / 2) {
        med[c] = v;
        break;
      }
    }
  }
  return med;
}

void blur_grid(std::span<double> cells, int grid, double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[static_cast<std::size_t>(i + r)];
  }
  for (double& v : k) v /= total;
  std::vector<double> tmp(cells.size(), 0.0);
  auto at = [grid](int y, int x, int c) { return (static_cast<std::size_t>(y) * grid + x) * 3 + c; };
  for (int y = 0; y < grid; ++y) {
    for (int x = 0; x < grid; ++x) {
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int d = -r; d <= r; ++d) {
          if (x + d >= 0 && x + d < grid) s += k[static_cast<std::size_t>(d + r)] * cells[at(y, x + d, c)];
        }
        tmp[at(y, x, c)] = s;
      }
    }
  }
  for (int y = 0; y < grid; ++y) {
    for (int x = 0; x < grid; ++x) {
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int d = -r; d <= r; ++d) {
          if (y + d >= 0 && y + d < grid) s += k[static_cast<std::size_t>(d + r)] * tmp[at(y + d, x, c)];
        }
        cells[at(y, x, c)] = s;
      }
    }
  }
}

}  // namespace

Preprocessor Preprocessor::for_image(int height, int width, int grid) {
  if (grid <= 0 || height % grid != 0 || width % grid != 0) {
    throw_config("image size " + std::to_string(height) + "x" + std::to_string(width) +
                 " is not a multiple of the pooling grid " + std::to_string(grid));
  }
  Preprocessor p;
  p.height = height;
  p.width = width;
  p.grid = grid;
  return p;
}

void Preprocessor::check(const sim::Observation& obs) const {
  if (obs.height != height || obs.width != width ||
      obs.pixels.size() != static_cast<std::size_t>(height) * width * 3) {
    throw_usage("observation is " + std::to_string(obs.height) + "x" + std::to_string(obs.width) +
                ", expected " + std::to_string(height) + "x" + std::to_string(width));
  }
}

void Preprocessor::pooled(const sim::Observation& obs, std::span<double> out) const {
  check(obs);
  if (out.size() != static_cast<std::size_t>(feature_size())) throw_usage("preprocess: output size mismatch");
  const std::array<int, 3> bg = foreground ? channel_medians(obs) : std::array<int, 3>{0, 0, 0};
  const int py = pool_y();
  const int px = pool_x();
  const double norm = 1.0 / (255.0 * py * px);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      int acc[3] = {0, 0, 0};
      for (int y = gy * py; y < (gy + 1) * py; ++y) {
        const std::uint8_t* row = &obs.pixels[(static_cast<std::size_t>(y) * width + gx * px) * 3];
        for (int x = 0; x < px * 3; x += 3) {
          for (int c = 0; c < 3; ++c) acc[c] += row[x + c] - bg[c];
        }
      }
      double* dst = &out[(static_cast<std::size_t>(gy) * grid + gx) * 3];
      for (int c = 0; c < 3; ++c) dst[c] = acc[c] * norm;
    }
  }
  if (blur_sigma > 0.0) blur_grid(out, grid, blur_sigma);
}

void Preprocessor::apply(const sim::Observation& obs, std::span<double> out) const {
  pooled(obs, out);
  if (!standardized()) return;
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = (out[j] - mean[j]) * scale[j];
}

nn::Matrix Preprocessor::apply(const sim::Observation& obs) const {
  nn::Matrix m(1, feature_size());
  apply(obs, std::span<double>(m.data(), static_cast<std::size_t>(m.size())));
  return m;
}

void Preprocessor::fit(nn::Matrix& rows) {
  if (rows.cols() != feature_size()) throw_usage("preprocess fit: width mismatch");
  if (rows.rows() == 0) throw_usage("preprocess fit: no rows");
  const auto f = static_cast<std::size_t>(feature_size());
  mean.assign(f, 0.0);
  scale.assign(f, 1.0);
  const double n = static_cast<double>(rows.rows());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const double m = rows.col(j).mean();
    const double var = (rows.col(j).array() - m).square().sum() / n;
    mean[static_cast<std::size_t>(j)] = m;
    scale[static_cast<std::size_t>(j)] = 1.0 / (std::sqrt(var) + kMinScaleSd);
  }
  standardize(rows);
}

void Preprocessor::standardize(nn::Matrix& rows) const {
  if (!standardized()) return;
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    rows.col(j) = ((rows.col(j).array() - mean[k]) * scale[k]).matrix();
  }
}

void Preprocessor::store(nn::ParamSet& out, const std::string& prefix) const {
  out.add(prefix + ".image", {5},
          {static_cast<double>(height), static_cast<double>(width), static_cast<double>(grid),
           foreground ? 1.0 : 0.0, blur_sigma});
  if (standardized()) {
    const auto f = static_cast<std::uint32_t>(feature_size());
    out.add(prefix + ".mean", {f}, mean);
    out.add(prefix + ".scale", {f}, scale);
  }
}

Preprocessor Preprocessor::load(const nn::ParamSet& stored, const std::string& prefix) {
  const auto& image = stored.at(prefix + ".image").values;
  if (image.size() != 5) throw_io("checkpoint: malformed " + prefix + ".image");
  Preprocessor p = for_image(static_cast<int>(image[0]), static_cast<int>(image[1]), static_cast<int>(image[2]));
  p.foreground = image[3] != 0.0;
  p.blur_sigma = image[4];
  if (stored.contains(prefix + ".mean")) {
    p.mean = stored.at(prefix + ".mean").values;
    p.scale = stored.at(prefix + ".scale").values;
    const auto f = static_cast<std::size_t>(p.feature_size());
    if (p.mean.size() != f || p.scale.size() != f) throw_io("checkpoint: " + prefix + " size mismatch");
  }
  return p;
}

}  // namespace crlab::srl
