#include <cmath>
#include <numeric>

#include "mlp_kernel.hpp"
#include "tda/error.hpp"
#include "tda/nn.hpp"
#include "tda/rng.hpp"

namespace tda {

Vector init_params(const ModelArch& arch, std::uint64_t seed) {
  arch.validate();
  Vector theta(static_cast<Eigen::Index>(parameter_count(arch)));
  CounterRng rng(derive_seed(seed, "init"));
  for (const LayerSlice& s : layer_layout(arch)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
    const std::size_t end = s.bias_offset + s.fan_out;
    for (std::size_t k = s.weight_offset; k < end; ++k) {
      theta[static_cast<Eigen::Index>(k)] = rng.uniform(-bound, bound);
    }
  }
  return theta;
}

Model init_model(const ModelArch& arch, std::uint64_t seed) {
  return Model(arch, init_params(arch, seed));
}

Model randomize_parameters(const Model& model, std::uint64_t seed, ParamScope scope) {
  const Vector fresh = init_params(model.arch(), seed);
  Vector theta = model.params();
  const ParamRange r = scope_range(model.arch(), scope);
  const auto off = static_cast<Eigen::Index>(r.offset);
  const auto len = static_cast<Eigen::Index>(r.length);
  theta.segment(off, len) = fresh.segment(off, len);
  return model.with_params(std::move(theta));
}

TrainResult train(const ModelArch& arch, const Dataset& ds, const TrainConfig& cfg) {
  arch.validate();
  cfg.validate();
  ds.validate();
  require(ds.size() > 0, ErrorCode::invalid_argument, "train: dataset is empty");
  require(ds.dim() == arch.input_dim, ErrorCode::shape_mismatch,
          "train: dataset dimension does not match arch.input_dim");
  require(static_cast<std::size_t>(ds.num_classes) <= arch.num_classes,
          ErrorCode::shape_mismatch, "train: dataset has more classes than the model");

  const auto layout = layer_layout(arch);
  const std::size_t n = ds.size();
  const std::size_t num_params = parameter_count(arch);
  Vector theta = init_params(arch, cfg.seed);

  TrainResult result{Model(arch, theta), {}, {}};
  result.log.initial_loss = empirical_risk(result.model, ds);

  std::vector<std::size_t> order(n);
  Vector batch_grad(static_cast<Eigen::Index>(num_params));
  Vector sample_grad(static_cast<Eigen::Index>(num_params));
  detail::Trace<double> tr;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng shuffle(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    const double lr = cfg.lr_schedule[static_cast<std::size_t>(epoch)];
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      batch_grad.setZero();
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        const Vector x = ds.x(i);
        detail::forward_trace(arch, layout, theta.data(), x.data(), tr);
        detail::backprop(arch, layout, theta.data(), tr,
                         detail::ce_logit_grad(tr.act.back(), ds.labels[i]), sample_grad.data(), 0);
        batch_grad += sample_grad;
      }
      batch_grad /= static_cast<double>(stop - start);
      if (cfg.l2_weight > 0.0) batch_grad += cfg.l2_weight * theta;
      theta -= lr * batch_grad;
    }
    if (!theta.allFinite()) {
      fail(ErrorCode::diverged, "training diverged at epoch " + std::to_string(epoch) +
                                    ": non-finite parameters");
    }
    Model current(arch, theta);
    const double risk = empirical_risk(current, ds);
    if (!std::isfinite(risk)) {
      fail(ErrorCode::diverged,
           "training diverged at epoch " + std::to_string(epoch) + ": non-finite loss");
    }
    result.log.epoch_loss.push_back(risk);
    const bool last = epoch + 1 == cfg.epochs;
    if ((epoch + 1) % cfg.checkpoint_every == 0 || last) {
      result.checkpoints.push_back(Checkpoint{epoch, lr, theta});
    }
  }
  result.model = Model(arch, std::move(theta));
  return result;
}

}  // namespace tda
