#include "strel/params.hpp"

#include <cmath>

#include "strel/error.hpp"

namespace strel {

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.contains(name) || buffers_.contains(name)) {
    throw ConfigError(msg("ParamStore: duplicate name '", name, "'"));
  }
  init.set_requires_grad(true);
  auto [it, ok] = params_.emplace(name, Parameter{std::move(init), name, false});
  (void)ok;
  return it->second;
}

Tensor& ParamStore::add_buffer(const std::string& name, Tensor init) {
  if (params_.contains(name) || buffers_.contains(name)) {
    throw ConfigError(msg("ParamStore: duplicate name '", name, "'"));
  }
  auto [it, ok] = buffers_.emplace(name, std::move(init));
  (void)ok;
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError(msg("ParamStore: unknown parameter '", name, "'"));
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError(msg("ParamStore: unknown parameter '", name, "'"));
  return it->second;
}

Tensor& ParamStore::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ConfigError(msg("ParamStore: unknown buffer '", name, "'"));
  return it->second;
}

const Tensor& ParamStore::buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ConfigError(msg("ParamStore: unknown buffer '", name, "'"));
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : params_) p.tensor.zero_grad();
}

void ParamStore::set_frozen_prefix(const std::string& prefix, bool frozen) {
  for (auto& [name, p] : params_) {
    if (name.rfind(prefix, 0) == 0) p.frozen = frozen;
  }
}

void ParamStore::set_all_frozen(bool frozen) {
  for (auto& [name, p] : params_) p.frozen = frozen;
}

void ParamStore::load_values_from(const ParamStore& other) {
  for (auto& [name, p] : params_) {
    const Parameter& src = other.at(name);
    if (src.tensor.shape() != p.tensor.shape()) {
      throw ShapeError(msg("load_values_from: shape mismatch for '", name, "'"));
    }
    std::copy(src.tensor.data().begin(), src.tensor.data().end(), p.tensor.data().begin());
  }
  for (auto& [name, b] : buffers_) {
    const Tensor& src = other.buffer(name);
    if (src.shape() != b.shape()) {
      throw ShapeError(msg("load_values_from: shape mismatch for buffer '", name, "'"));
    }
    std::copy(src.data().begin(), src.data().end(), b.data().begin());
  }
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.tensor.numel();
  return n;
}

Tensor init_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, stddev);
  return t;
}

Tensor init_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  return init_normal(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

}  // namespace strel
