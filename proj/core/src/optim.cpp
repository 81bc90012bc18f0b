#include "imblab/optim.hpp"

#include <cmath>

#include "imblab/errors.hpp"

namespace imblab {

void ParamStore::add(const std::string& name, Value v) {
  if (!v.defined()) throw Error("ParamStore::add: undefined Value for '" + name + "'");
  if (!v.requires_grad())
    throw Error("ParamStore::add: parameter '" + name + "' must require grad");
  auto [it, inserted] = params.emplace(name, std::move(v));
  (void)it;
  if (!inserted) throw Error("ParamStore::add: duplicate parameter name '" + name + "'");
}

Value& ParamStore::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw Error("ParamStore: no parameter named '" + name + "'");
  return it->second;
}

const Value& ParamStore::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw Error("ParamStore: no parameter named '" + name + "'");
  return it->second;
}

void sgd_step(ParamStore& store) {
  for (auto& [name, value] : store.params) {
    if (!value.has_grad())
      throw DivergenceSignal("sgd_step: missing gradient for parameter '" + name + "'");
    const auto& g = value.grad();
    auto& d = value.mutable_data();
    for (size_t i = 0; i < d.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw DivergenceSignal("sgd_step: non-finite gradient in parameter '" + name + "'");
      d[i] -= store.learning_rate * g[i];
    }
  }
  ++store.iteration;
}

}  // namespace imblab
