#include "tda/nn.hpp"

#include <algorithm>
#include <cmath>

#include "mlp_kernel.hpp"
#include "tda/error.hpp"
#include "tda/rng.hpp"

namespace tda {

using detail::Dual;
using detail::Trace;

const char* to_string(Activation a) noexcept {
  return a == Activation::tanh ? "tanh" : "relu";
}

const char* to_string(ParamScope s) noexcept {
  return s == ParamScope::all ? "all" : "last_layer";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  fail(ErrorCode::invalid_argument, "activation: unknown value '" + s + "'");
}

ParamScope parse_scope(const std::string& s) {
  if (s == "all") return ParamScope::all;
  if (s == "last_layer") return ParamScope::last_layer;
  fail(ErrorCode::invalid_argument, "scope: unknown value '" + s + "'");
}

void ModelArch::validate() const {
  require(input_dim > 0, ErrorCode::invalid_argument, "arch.input_dim must be positive");
  require(num_classes >= 2, ErrorCode::invalid_argument, "arch.num_classes must be >= 2");
  for (std::size_t h : hidden_dims) {
    require(h > 0, ErrorCode::invalid_argument, "arch.hidden_dims entries must be positive");
  }
}

std::vector<LayerSlice> layer_layout(const ModelArch& arch) {
  std::vector<LayerSlice> out;
  out.reserve(arch.num_layers());
  std::size_t fan_in = arch.input_dim;
  std::size_t offset = 0;
  auto push = [&](std::size_t fan_out) {
    LayerSlice s{fan_in, fan_out, offset, offset + fan_in * fan_out};
    offset = s.bias_offset + fan_out;
    out.push_back(s);
    fan_in = fan_out;
  };
  for (std::size_t h : arch.hidden_dims) push(h);
  push(arch.num_classes);
  return out;
}

std::size_t parameter_count(const ModelArch& arch) {
  std::size_t total = 0;
  std::size_t fan_in = arch.input_dim;
  for (std::size_t h : arch.hidden_dims) {
    total += (fan_in + 1) * h;
    fan_in = h;
  }
  return total + (fan_in + 1) * arch.num_classes;
}

ParamRange scope_range(const ModelArch& arch, ParamScope scope) {
  const std::size_t total = parameter_count(arch);
  if (scope == ParamScope::all) return {0, total};
  const std::size_t last = (arch.feature_dim() + 1) * arch.num_classes;
  return {total - last, last};
}

std::vector<LayerParams> unpack(const ModelArch& arch, const Vector& theta) {
  require(static_cast<std::size_t>(theta.size()) == parameter_count(arch),
          ErrorCode::shape_mismatch, "unpack: parameter vector length does not match arch");
  std::vector<LayerParams> layers;
  for (const LayerSlice& s : layer_layout(arch)) {
    LayerParams p;
    p.weights = Eigen::Map<const RowMatrix>(theta.data() + s.weight_offset,
                                            static_cast<Eigen::Index>(s.fan_in),
                                            static_cast<Eigen::Index>(s.fan_out));
    p.bias = theta.segment(static_cast<Eigen::Index>(s.bias_offset),
                           static_cast<Eigen::Index>(s.fan_out));
    layers.push_back(std::move(p));
  }
  return layers;
}

Vector pack(const ModelArch& arch, const std::vector<LayerParams>& layers) {
  const auto layout = layer_layout(arch);
  require(layers.size() == layout.size(), ErrorCode::shape_mismatch,
          "pack: layer count does not match arch");
  Vector theta(static_cast<Eigen::Index>(parameter_count(arch)));
  for (std::size_t l = 0; l < layout.size(); ++l) {
    const LayerSlice& s = layout[l];
    require(static_cast<std::size_t>(layers[l].weights.rows()) == s.fan_in &&
                static_cast<std::size_t>(layers[l].weights.cols()) == s.fan_out &&
                static_cast<std::size_t>(layers[l].bias.size()) == s.fan_out,
            ErrorCode::shape_mismatch, "pack: layer " + std::to_string(l) + " has wrong shape");
    Eigen::Map<RowMatrix>(theta.data() + s.weight_offset, static_cast<Eigen::Index>(s.fan_in),
                          static_cast<Eigen::Index>(s.fan_out)) = layers[l].weights;
    theta.segment(static_cast<Eigen::Index>(s.bias_offset),
                  static_cast<Eigen::Index>(s.fan_out)) = layers[l].bias;
  }
  return theta;
}

Model::Model(ModelArch arch, Vector params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  arch_.validate();
  require(static_cast<std::size_t>(params_.size()) == parameter_count(arch_),
          ErrorCode::shape_mismatch,
          "model: expected " + std::to_string(parameter_count(arch_)) + " parameters, got " +
              std::to_string(params_.size()));
  require(params_.allFinite(), ErrorCode::numeric, "model: parameters must be finite");
  layout_ = layer_layout(arch_);
}

void TrainConfig::validate() const {
  require(epochs >= 1, ErrorCode::invalid_argument, "train.epochs must be >= 1");
  require(lr_schedule.size() == static_cast<std::size_t>(epochs), ErrorCode::invalid_argument,
          "train.lr_schedule must have one entry per epoch");
  for (double lr : lr_schedule) {
    require(lr > 0.0 && std::isfinite(lr), ErrorCode::invalid_argument,
            "train.lr_schedule entries must be positive");
  }
  require(l2_weight >= 0.0, ErrorCode::invalid_argument, "train.l2_weight must be >= 0");
  require(batch_size >= 1, ErrorCode::invalid_argument, "train.batch_size must be >= 1");
  require(checkpoint_every >= 1, ErrorCode::invalid_argument,
          "train.checkpoint_every must be >= 1");
}

TrainConfig TrainConfig::constant(int epochs, double lr, std::size_t batch_size,
                                  std::uint64_t seed, double l2_weight, int checkpoint_every) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.lr_schedule.assign(static_cast<std::size_t>(std::max(epochs, 0)), lr);
  cfg.batch_size = batch_size;
  cfg.seed = seed;
  cfg.l2_weight = l2_weight;
  cfg.checkpoint_every = checkpoint_every;
  return cfg;
}

namespace {

void check_input(const Model& model, VectorRef x) {
  require(static_cast<std::size_t>(x.size()) == model.arch().input_dim,
          ErrorCode::shape_mismatch,
          "input has " + std::to_string(x.size()) + " features, model expects " +
              std::to_string(model.arch().input_dim));
}

void check_label(const Model& model, Label y) {
  require(y >= 0 && static_cast<std::size_t>(y) < model.arch().num_classes,
          ErrorCode::label_out_of_range, "label " + std::to_string(y) + " out of range");
}

Trace<double> trace_of(const Model& model, VectorRef x) {
  check_input(model, x);
  Trace<double> tr;
  const Vector xc = x;  // Ref may be strided
  detail::forward_trace(model.arch(), model.layout(), model.params().data(), xc.data(), tr);
  return tr;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vector backprop_slice(const Model& model, const Trace<double>& tr, std::vector<double> delta,
                      ParamScope scope) {
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(model.num_params()));
  detail::backprop(model.arch(), model.layout(), model.params().data(), tr, std::move(delta),
                   grad.data(), detail::first_layer_of(model.arch(), scope));
  const ParamRange r = scope_range(model.arch(), scope);
  return grad.segment(static_cast<Eigen::Index>(r.offset), static_cast<Eigen::Index>(r.length));
}

}  // namespace

Vector features(const Model& model, VectorRef x) {
  const auto tr = trace_of(model, x);
  return to_vector(tr.act[model.layout().size() - 1]);
}

Vector forward(const Model& model, VectorRef x) {
  const auto tr = trace_of(model, x);
  return to_vector(tr.act.back());
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector p = (logits.array() - m).exp();
  return p / p.sum();
}

double cross_entropy(const Vector& logits, Label y) {
  require(y >= 0 && y < logits.size(), ErrorCode::label_out_of_range,
          "label " + std::to_string(y) + " out of range");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return std::max(0.0, lse - logits[y]);
}

double loss(const Model& model, VectorRef x, Label y) {
  check_label(model, y);
  return cross_entropy(forward(model, x), y);
}

Label predict(const Model& model, VectorRef x) {
  Eigen::Index best = 0;
  forward(model, x).maxCoeff(&best);
  return static_cast<Label>(best);
}

std::vector<Label> predict_all(const Model& model, const RowMatrix& xs) {
  std::vector<Label> out(static_cast<std::size_t>(xs.rows()));
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = predict(model, xs.row(i).transpose());
  }
  return out;
}

double accuracy(const Model& model, const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) hits += predict(model, ds.x(i)) == ds.labels[i];
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

double empirical_risk(const Model& model, const Dataset& ds) {
  require(ds.size() > 0, ErrorCode::invalid_argument, "empirical_risk: empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) total += loss(model, ds.x(i), ds.labels[i]);
  return total / static_cast<double>(ds.size());
}

Vector grad_loss(const Model& model, VectorRef x, Label y, ParamScope scope) {
  check_label(model, y);
  const auto tr = trace_of(model, x);
  return backprop_slice(model, tr, detail::ce_logit_grad(tr.act.back(), y), scope);
}

Vector grad_output(const Model& model, VectorRef x, const Vector& dlogits, ParamScope scope) {
  require(static_cast<std::size_t>(dlogits.size()) == model.arch().num_classes,
          ErrorCode::shape_mismatch, "grad_output: covector length must equal num_classes");
  const auto tr = trace_of(model, x);
  return backprop_slice(model, tr, std::vector<double>(dlogits.data(), dlogits.data() + dlogits.size()),
                        scope);
}

Matrix hessian_risk(const Model& model, const Dataset& ds, double damping, ParamScope scope,
                    std::size_t max_dim) {
  require(damping >= 0.0, ErrorCode::invalid_argument, "hessian_risk: damping must be >= 0");
  const ParamRange r = scope_range(model.arch(), scope);
  require(r.length <= max_dim, ErrorCode::capacity,
          "hessian_risk: scope has " + std::to_string(r.length) +
              " parameters, above the dense cap of " + std::to_string(max_dim));
  const auto dim = static_cast<Eigen::Index>(r.length);
  Matrix hess = Matrix::Zero(dim, dim);

  if (ds.size() > 0) {
    require(ds.dim() == model.arch().input_dim, ErrorCode::shape_mismatch,
            "hessian_risk: dataset dimension does not match model");
    const std::size_t first = detail::first_layer_of(model.arch(), scope);
    const Vector& theta = model.params();
    std::vector<Dual> theta_d(theta.data(), theta.data() + theta.size());
    std::vector<Dual> grad_d(theta_d.size());
    std::vector<Dual> x_d(ds.dim());
    Trace<Dual> tr;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      check_label(model, ds.labels[i]);
      for (std::size_t k = 0; k < ds.dim(); ++k) {
        x_d[k] = Dual(ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
      }
      for (Eigen::Index col = 0; col < dim; ++col) {
        const std::size_t p = r.offset + static_cast<std::size_t>(col);
        theta_d[p].d = 1.0;
        detail::forward_trace(model.arch(), model.layout(), theta_d.data(), x_d.data(), tr);
        detail::backprop(model.arch(), model.layout(), theta_d.data(), tr,
                         detail::ce_logit_grad(tr.act.back(), ds.labels[i]), grad_d.data(), first);
        theta_d[p].d = 0.0;
        for (Eigen::Index row = 0; row < dim; ++row) {
          hess(row, col) += grad_d[r.offset + static_cast<std::size_t>(row)].d;
        }
      }
    }
    hess /= static_cast<double>(ds.size());
  }
  Matrix sym = 0.5 * (hess + hess.transpose());
  sym.diagonal().array() += damping;
  return sym;
}

}  // namespace tda
