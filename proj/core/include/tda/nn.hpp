#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tda/dataset.hpp"
#include "tda/linalg.hpp"

namespace tda {

enum class Activation { relu, tanh };
enum class ParamScope { all, last_layer };

const char* to_string(Activation a) noexcept;
const char* to_string(ParamScope s) noexcept;
Activation parse_activation(const std::string& s);
ParamScope parse_scope(const std::string& s);

/// Feed-forward classifier shape. Empty hidden_dims gives a linear model.
struct ModelArch {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  Activation activation = Activation::relu;

  void validate() const;
  /// Width p of the penultimate representation h(x).
  std::size_t feature_dim() const noexcept {
    return hidden_dims.empty() ? input_dim : hidden_dims.back();
  }
  std::size_t num_layers() const noexcept { return hidden_dims.size() + 1; }

  bool operator==(const ModelArch&) const = default;
};

/// Placement of one affine layer inside the flat parameter vector. Weights are
/// fan_in x fan_out row-major, followed by fan_out biases.
struct LayerSlice {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

struct ParamRange {
  std::size_t offset = 0;
  std::size_t length = 0;
};

std::vector<LayerSlice> layer_layout(const ModelArch& arch);
std::size_t parameter_count(const ModelArch& arch);
ParamRange scope_range(const ModelArch& arch, ParamScope scope);

struct LayerParams {
  RowMatrix weights;  // fan_in x fan_out
  Vector bias;        // fan_out
  bool operator==(const LayerParams&) const = default;
};

std::vector<LayerParams> unpack(const ModelArch& arch, const Vector& theta);
Vector pack(const ModelArch& arch, const std::vector<LayerParams>& layers);

/// Architecture plus flat parameter vector. Immutable once built.
class Model {
 public:
  Model(ModelArch arch, Vector params);

  const ModelArch& arch() const noexcept { return arch_; }
  const Vector& params() const noexcept { return params_; }
  std::size_t num_params() const noexcept { return static_cast<std::size_t>(params_.size()); }
  const std::vector<LayerSlice>& layout() const noexcept { return layout_; }

  Model with_params(Vector params) const { return Model(arch_, std::move(params)); }

  bool operator==(const Model& other) const {
    return arch_ == other.arch_ && params_ == other.params_;
  }

 private:
  ModelArch arch_;
  Vector params_;
  std::vector<LayerSlice> layout_;
};

struct Checkpoint {
  int epoch = 0;
  double learning_rate = 0.0;
  Vector params;
  bool operator==(const Checkpoint&) const = default;
};

struct TrainConfig {
  int epochs = 1;
  std::vector<double> lr_schedule;  // one entry per epoch
  double l2_weight = 0.0;           // objective adds (l2_weight / 2) * |theta|^2
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  int checkpoint_every = 1;

  void validate() const;
  static TrainConfig constant(int epochs, double lr, std::size_t batch_size,
                              std::uint64_t seed, double l2_weight = 0.0,
                              int checkpoint_every = 1);
};

struct TrainLog {
  double initial_loss = 0.0;        // empirical risk before the first step
  std::vector<double> epoch_loss;   // empirical risk after each epoch
};

struct TrainResult {
  Model model;
  std::vector<Checkpoint> checkpoints;
  TrainLog log;
};

// Forward pass -------------------------------------------------------------

/// Penultimate activations h(x). Identity for a linear model.
Vector features(const Model& model, VectorRef x);
/// Logits W^T h(x) + b.
Vector forward(const Model& model, VectorRef x);

Vector softmax(const Vector& logits);
/// -log softmax(logits)_y via log-sum-exp.
double cross_entropy(const Vector& logits, Label y);

double loss(const Model& model, VectorRef x, Label y);
Label predict(const Model& model, VectorRef x);
std::vector<Label> predict_all(const Model& model, const RowMatrix& xs);
double accuracy(const Model& model, const Dataset& ds);
/// Mean cross entropy over ds (no regularizer).
double empirical_risk(const Model& model, const Dataset& ds);

// Derivatives --------------------------------------------------------------

/// Gradient of loss(model, x, y) restricted to `scope` (a slice of theta).
Vector grad_loss(const Model& model, VectorRef x, Label y,
                 ParamScope scope = ParamScope::all);

/// Pulls an arbitrary logit-space covector back to parameter space:
/// returns J(x)^T dlogits restricted to `scope`.
Vector grad_output(const Model& model, VectorRef x, const Vector& dlogits,
                   ParamScope scope = ParamScope::all);

inline constexpr std::size_t kDefaultHessianCap = 4096;

/// Exact Hessian of the empirical risk (mean cross entropy over ds) with
/// respect to the `scope` parameters, plus damping * I. Symmetrized.
Matrix hessian_risk(const Model& model, const Dataset& ds, double damping,
                    ParamScope scope = ParamScope::all,
                    std::size_t max_dim = kDefaultHessianCap);

// Training -----------------------------------------------------------------

/// Parameters drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight
/// and bias, layer by layer.
Vector init_params(const ModelArch& arch, std::uint64_t seed);
Model init_model(const ModelArch& arch, std::uint64_t seed);

/// Mini-batch SGD on mean cross entropy + (l2/2)|theta|^2. A checkpoint is
/// taken after epoch e when (e+1) % checkpoint_every == 0 and after the last
/// epoch.
TrainResult train(const ModelArch& arch, const Dataset& ds, const TrainConfig& cfg);

/// Redraws the `scope` slice of theta from the init distribution. Parameters
/// outside the scope are copied unchanged.
Model randomize_parameters(const Model& model, std::uint64_t seed, ParamScope scope);

}  // namespace tda
