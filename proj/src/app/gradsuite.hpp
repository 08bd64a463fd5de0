#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace crlab::app {

struct GradSuiteEntry {
  std::string loss;
  int nets = 0;
  int failures = 0;
  double max_relative_error = 0.0;
  std::string worst;  // "net <k> <parameter>[<index>]"
};

struct GradSuiteReport {
  std::vector<GradSuiteEntry> entries;
  double h = 1e-4;
  double tolerance = 1e-4;
  bool passed() const;
  std::string text() const;
};

// Central-difference checks of MSE, cross-entropy, KL, the joint SRL loss and
// the clipped surrogate on `nets` randomly shaped small networks per loss.
GradSuiteReport run_grad_suite(int nets, std::uint64_t seed, double h = 1e-4, double tolerance = 1e-4);

}  // namespace crlab::app
