#pragma once

#include <cmath>
#include <cstddef>
#include <type_traits>
#include <vector>

#include "dual.hpp"
#include "tda/nn.hpp"

namespace tda::detail {

using std::exp;
using std::log;
using std::tanh;

template <class T>
struct Trace {
  std::vector<std::vector<T>> pre;  // pre[l]: layer l pre-activation
  std::vector<std::vector<T>> act;  // act[0] = x, act[l+1] = output of layer l
};

template <class T>
T activate(Activation a, const T& z) {
  if (a == Activation::tanh) return tanh(z);
  return value(z) > 0.0 ? z : T(0.0);
}

// Derivative of the activation expressed through its output where cheaper.
template <class T>
T activate_grad(Activation a, const T& z, const T& out) {
  if (a == Activation::tanh) return T(1.0) - out * out;
  return T(value(z) > 0.0 ? 1.0 : 0.0);
}

template <class T>
void forward_trace(const ModelArch& arch, const std::vector<LayerSlice>& layout,
                   const T* theta, const T* x, Trace<T>& tr) {
  const std::size_t num_layers = layout.size();
  tr.pre.resize(num_layers);
  tr.act.resize(num_layers + 1);
  tr.act[0].assign(x, x + arch.input_dim);
  for (std::size_t l = 0; l < num_layers; ++l) {
    const LayerSlice& s = layout[l];
    auto& z = tr.pre[l];
    z.assign(theta + s.bias_offset, theta + s.bias_offset + s.fan_out);
    const auto& in = tr.act[l];
    for (std::size_t i = 0; i < s.fan_in; ++i) {
      const T a = in[i];
      if (value(a) == 0.0 && !std::is_same_v<T, Dual>) continue;
      const T* row = theta + s.weight_offset + i * s.fan_out;
      for (std::size_t j = 0; j < s.fan_out; ++j) z[j] += a * row[j];
    }
    auto& out = tr.act[l + 1];
    if (l + 1 < num_layers) {
      out.resize(s.fan_out);
      for (std::size_t j = 0; j < s.fan_out; ++j) out[j] = activate(arch.activation, z[j]);
    } else {
      out = z;
    }
  }
}

// Writes d(loss)/d(theta) for layers first_layer..L-1 into grad (full-length
// buffer), given d(loss)/d(logits).
template <class T>
void backprop(const ModelArch& arch, const std::vector<LayerSlice>& layout,
              const T* theta, const Trace<T>& tr, std::vector<T> delta, T* grad,
              std::size_t first_layer) {
  const std::size_t num_layers = layout.size();
  std::vector<T> prev;
  for (std::size_t l = num_layers; l-- > first_layer;) {
    const LayerSlice& s = layout[l];
    const auto& in = tr.act[l];
    for (std::size_t i = 0; i < s.fan_in; ++i) {
      T* g = grad + s.weight_offset + i * s.fan_out;
      const T a = in[i];
      for (std::size_t j = 0; j < s.fan_out; ++j) g[j] = a * delta[j];
    }
    for (std::size_t j = 0; j < s.fan_out; ++j) grad[s.bias_offset + j] = delta[j];
    if (l == first_layer) break;
    prev.assign(s.fan_in, T(0.0));
    for (std::size_t i = 0; i < s.fan_in; ++i) {
      const T* row = theta + s.weight_offset + i * s.fan_out;
      T acc(0.0);
      for (std::size_t j = 0; j < s.fan_out; ++j) acc += row[j] * delta[j];
      prev[i] = acc * activate_grad(arch.activation, tr.pre[l - 1][i], tr.act[l][i]);
    }
    delta.swap(prev);
  }
}

template <class T>
std::vector<T> softmax_of(const std::vector<T>& logits) {
  double m = value(logits[0]);
  for (const auto& z : logits) m = std::max(m, value(z));
  std::vector<T> p(logits.size());
  T sum(0.0);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = exp(logits[k] - T(m));
    sum += p[k];
  }
  for (auto& v : p) v = v / sum;
  return p;
}

// d(cross entropy)/d(logits) = softmax - onehot(y)
template <class T>
std::vector<T> ce_logit_grad(const std::vector<T>& logits, Label y) {
  auto p = softmax_of(logits);
  p[static_cast<std::size_t>(y)] -= T(1.0);
  return p;
}

inline std::size_t first_layer_of(const ModelArch& arch, ParamScope scope) {
  return scope == ParamScope::all ? 0 : arch.num_layers() - 1;
}

}  // namespace tda::detail
