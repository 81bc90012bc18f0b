#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "imblab/tensor.hpp"

namespace imblab {

// Named trainable parameters plus optimizer state. Parameters are graph
// leaves; their shapes are immutable after add(). Single-writer during
// training.
struct ParamStore {
  std::map<std::string, Value> params;
  double learning_rate = 0.01;
  int64_t iteration = 0;  // t in the SGD update

  void add(const std::string& name, Value v);
  Value& at(const std::string& name);
  const Value& at(const std::string& name) const;
  // Counts an iteration that applied no update (e.g. a batch with no
  // foreground anchors).
  void tick() { ++iteration; }
};

// Plain SGD: theta <- theta - lr * dL/dtheta for every parameter, then
// t += 1. Gradients are read from the params' grad storage populated by
// backward(). A missing or non-finite gradient aborts with DivergenceSignal.
void sgd_step(ParamStore& store);

}  // namespace imblab
