#pragma once

#include <string>
#include <vector>

#include "qcofr/rng.hpp"
#include "qcofr/tensor.hpp"

namespace qcofr {

// Named collection of trainable tensors. Networks hold indices into a store;
// a target network is simply a structural copy with its own values.
class ParamStore {
 public:
  int add(const std::string& name, Shape shape) {
    names_.push_back(name);
    tensors_.emplace_back(shape, 0.0, true);
    return static_cast<int>(tensors_.size()) - 1;
  }

  Tensor& at(int i) { return tensors_[static_cast<std::size_t>(i)]; }
  const Tensor& at(int i) const { return tensors_[static_cast<std::size_t>(i)]; }
  const std::string& name(int i) const { return names_[static_cast<std::size_t>(i)]; }
  int find(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<int>(i);
    return -1;
  }
  int size() const { return static_cast<int>(tensors_.size()); }

  void zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& t : tensors_)
      for (double g : t.grad) s += g * g;
    return std::sqrt(s);
  }

  void scale_grads(double scale) {
    for (auto& t : tensors_)
      for (double& g : t.grad) g *= scale;
  }

  // Copies values from a store with identical structure (target-network sync).
  void copy_values_from(const ParamStore& other) {
    if (other.size() != size()) throw ShapeError("param store copy: size mismatch");
    for (int i = 0; i < size(); ++i) {
      if (!(other.at(i).shape == at(i).shape))
        throw ShapeError("param store copy: shape mismatch at " + names_[i] + ": " +
                         at(i).shape.str() + " vs " + other.at(i).shape.str());
      tensors_[i].values = other.at(i).values;
    }
  }

  std::size_t coordinate_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.values.size();
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in is the row count under the
// row-vector x * W convention used throughout.
inline void init_uniform_fanin(Tensor& t, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(t.shape.rows));
  for (double& v : t.values) v = rng.uniform(-bound, bound);
}

inline void init_normal(Tensor& t, double stddev, Rng& rng) {
  for (double& v : t.values) v = stddev * rng.gauss();
}

// Non-centered RMSprop: s <- a*s + (1-a)*g^2; p <- p - lr * g / (sqrt(s)+eps).
class RmsProp {
 public:
  RmsProp(double lr, double alpha, double eps) : lr_(lr), alpha_(alpha), eps_(eps) {}

  void step(ParamStore& params) {
    if (sq_.size() != static_cast<std::size_t>(params.size())) {
      sq_.resize(params.size());
      for (int i = 0; i < params.size(); ++i) sq_[i].assign(params.at(i).values.size(), 0.0);
    }
    for (int i = 0; i < params.size(); ++i) {
      Tensor& t = params.at(i);
      auto& s = sq_[i];
      for (std::size_t j = 0; j < t.values.size(); ++j) {
        const double g = t.grad[j];
        s[j] = alpha_ * s[j] + (1.0 - alpha_) * g * g;
        t.values[j] -= lr_ * g / (std::sqrt(s[j]) + eps_);
      }
    }
  }

  double lr() const { return lr_; }

 private:
  double lr_, alpha_, eps_;
  std::vector<std::vector<double>> sq_;
};

}  // namespace qcofr
