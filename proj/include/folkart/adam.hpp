#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "folkart/head.hpp"

namespace folkart {

/// Adam with bias correction; one moment buffer pair per parameter block.
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void step(const std::vector<ParamBlock>& blocks, double lr) {
    if (first_.empty()) {
      for (const auto& b : blocks) {
        first_.emplace_back(b.size, 0.0);
        second_.emplace_back(b.size, 0.0);
      }
    }
    if (blocks.size() != first_.size()) throw std::logic_error("Adam: parameter layout changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const auto& b = blocks[k];
      auto& m = first_[k];
      auto& v = second_[k];
      if (m.size() != b.size) throw std::logic_error("Adam: parameter block resized");
      for (std::size_t i = 0; i < b.size; ++i) {
        const double g = b.grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        b.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon);
      }
    }
  }

  long steps() const { return t_; }

 private:
  long t_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

}  // namespace folkart
