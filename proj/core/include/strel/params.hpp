#pragma once

#include <map>
#include <string>

#include "strel/rng.hpp"
#include "strel/tensor.hpp"

namespace strel {

// One trainable tensor. Frozen parameters keep their gradients (the graph does
// not care) but optimizers must never update them.
struct Parameter {
  Tensor tensor;
  std::string name;
  bool frozen = false;
};

// Flat registry of a model's parameters and constant buffers, keyed by
// hierarchical name ("backbone.block0.conv.weight"). Name order is the
// canonical deterministic order for checkpoints and diffs.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init);
  Tensor& add_buffer(const std::string& name, Tensor init);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  Tensor& buffer(const std::string& name);
  const Tensor& buffer(const std::string& name) const;
  bool has(const std::string& name) const { return params_.contains(name); }

  std::map<std::string, Parameter>& params() { return params_; }
  const std::map<std::string, Parameter>& params() const { return params_; }
  std::map<std::string, Tensor>& buffers() { return buffers_; }
  const std::map<std::string, Tensor>& buffers() const { return buffers_; }

  void zero_grads();
  // Sets the frozen flag on every parameter whose name starts with prefix.
  void set_frozen_prefix(const std::string& prefix, bool frozen);
  void set_all_frozen(bool frozen);

  // Copies values (not identities) from another store; shapes must agree.
  void load_values_from(const ParamStore& other);

  std::size_t total_values() const;

 private:
  std::map<std::string, Parameter> params_;
  std::map<std::string, Tensor> buffers_;
};

// Gaussian init helpers; draws depend only on the rng stream and shape.
Tensor init_normal(Shape shape, double stddev, Rng& rng);
// He-style fan-in scaling for conv / linear weights.
Tensor init_fan_in(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace strel
