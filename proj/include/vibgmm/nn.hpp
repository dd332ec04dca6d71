#pragma once

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vibgmm/autodiff.hpp"
#include "vibgmm/gaussian.hpp"
#include "vibgmm/rng.hpp"

namespace vibgmm {

enum class Activation { linear, relu, sigmoid };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "linear";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "linear") return Activation::linear;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline Var activate(const Var& x, Activation a) {
  switch (a) {
    case Activation::relu: return relu(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::linear: break;
  }
  return x;
}

struct DenseLayer {
  Parameter weights;  // [in x out]
  Parameter bias;     // [out]
  Activation activation = Activation::linear;

  std::size_t in_dim() const { return weights.value.shape()[0]; }
  std::size_t out_dim() const { return weights.value.shape()[1]; }

  Var forward(Tape& tape, const Var& x) {
    return activate(add(matmul(x, tape.param(weights)), tape.param(bias)), activation);
  }
};

/// Layer widths from input to output plus one activation per layer.
struct MlpSpec {
  std::vector<std::size_t> layer_dims;
  std::vector<Activation> activations;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }

  void validate() const {
    if (layer_dims.size() < 2) throw ConfigError("MLP needs at least an input and an output width");
    if (activations.size() != layer_dims.size() - 1) {
      throw ConfigError("MLP needs exactly one activation per layer");
    }
    for (auto d : layer_dims) {
      if (d == 0) throw ConfigError("MLP layer widths must be positive");
    }
  }

  /// ReLU hidden stack ending in a linear layer of width 2 * latent_dim
  /// (mean head followed by log-variance head).
  static MlpSpec encoder(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                         std::size_t latent_dim) {
    MlpSpec s;
    s.layer_dims.push_back(input_dim);
    for (auto h : hidden) {
      s.layer_dims.push_back(h);
      s.activations.push_back(Activation::relu);
    }
    s.layer_dims.push_back(2 * latent_dim);
    s.activations.push_back(Activation::linear);
    return s;
  }

  static MlpSpec decoder(std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                         std::size_t output_dim, Activation output) {
    MlpSpec s;
    s.layer_dims.push_back(latent_dim);
    for (auto h : hidden) {
      s.layer_dims.push_back(h);
      s.activations.push_back(Activation::relu);
    }
    s.layer_dims.push_back(output_dim);
    s.activations.push_back(output);
    return s;
  }
};

class Mlp {
 public:
  Mlp() = default;

  /// Glorot-uniform weights, zero biases.
  Mlp(MlpSpec spec, std::string_view prefix, Rng& rng) : Mlp(std::move(spec), prefix) {
    for (auto& layer : layers_) {
      const double fan = static_cast<double>(layer.in_dim() + layer.out_dim());
      const double limit = std::sqrt(6.0 / fan);
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (auto& w : layer.weights.value.data()) w = dist(rng);
    }
  }

  /// All-zero parameters.
  Mlp(MlpSpec spec, std::string_view prefix) : spec_(std::move(spec)) {
    spec_.validate();
    for (std::size_t i = 0; i + 1 < spec_.layer_dims.size(); ++i) {
      const auto in = spec_.layer_dims[i];
      const auto out = spec_.layer_dims[i + 1];
      const std::string base = std::string(prefix) + "." + std::to_string(i);
      layers_.push_back(DenseLayer{Parameter{base + ".weight", Tensor(Shape{in, out}), {}},
                                   Parameter{base + ".bias", Tensor(Shape{out}), {}},
                                   spec_.activations[i]});
    }
  }

  Var forward(Tape& tape, const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || xv.shape()[1] != spec_.input_dim()) {
      throw DimensionError("MLP expects input width " + std::to_string(spec_.input_dim()) +
                           ", got shape " + shape_string(xv.shape()));
    }
    Var h = x;
    for (auto& layer : layers_) h = layer.forward(tape, h);
    return h;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weights);
      out.push_back(&l.bias);
    }
    return out;
  }

  const MlpSpec& spec() const { return spec_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

 private:
  MlpSpec spec_;
  std::vector<DenseLayer> layers_;
};

/// Stochastic encoder: an MLP whose output splits into the posterior mean and
/// a log-variance clamped at log(variance_floor).
class Encoder {
 public:
  Encoder() = default;
  Encoder(Mlp net, double variance_floor = kDefaultVarianceFloor)
      : net_(std::move(net)), variance_floor_(variance_floor) {
    if (net_.spec().output_dim() % 2 != 0) {
      throw ConfigError("encoder output width must be 2 * latent_dim");
    }
  }

  std::size_t input_dim() const { return net_.spec().input_dim(); }
  std::size_t latent_dim() const { return net_.spec().output_dim() / 2; }
  double variance_floor() const { return variance_floor_; }

  GaussianPosterior encode(Tape& tape, const Var& x) {
    const Var out = net_.forward(tape, x);
    const std::size_t n_u = latent_dim();
    return GaussianPosterior{slice_cols(out, 0, n_u),
                             clamp_min(slice_cols(out, n_u, 2 * n_u), std::log(variance_floor_))};
  }

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  std::vector<Parameter*> parameters() { return net_.parameters(); }

 private:
  Mlp net_;
  double variance_floor_ = kDefaultVarianceFloor;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 0.002;
  std::size_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  static AdamState for_parameters(std::span<Parameter* const> params) {
    AdamState s;
    for (const auto* p : params) {
      s.first_moment.emplace_back(p->value.shape(), 0.0);
      s.second_moment.emplace_back(p->value.shape(), 0.0);
    }
    return s;
  }

  void reset_moments(std::size_t index) {
    first_moment[index].fill(0.0);
    second_moment[index].fill(0.0);
  }
};

/// One bias-corrected Adam descent step at state.learning_rate. Every
/// parameter must carry a gradient.
inline void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (params.size() != state.first_moment.size()) {
    throw UsageError("Adam state was built for a different parameter list");
  }
  for (const auto* p : params) {
    if (!p->grad) throw UsageError("missing gradient for parameter '" + p->name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k]->value.data();
    auto g = params[k]->grad->data();
    auto m = state.first_moment[k].data();
    auto v = state.second_moment[k].data();
    if (g.size() != w.size() || m.size() != w.size()) {
      throw DimensionError("Adam buffers do not match parameter '" + params[k]->name + "'");
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

/// Step decay: initial * decay^floor(epoch / interval), never below floor.
struct LrSchedule {
  double initial_rate = 0.002;
  double decay = 0.9;
  std::size_t interval_epochs = 20;
  double floor = 0.0005;

  double rate(std::size_t epoch) const {
    const auto k = static_cast<double>(epoch / interval_epochs);
    return std::max(floor, initial_rate * std::pow(decay, k));
  }

  void validate() const {
    if (interval_epochs == 0) throw ConfigError("lr interval must be positive");
    if (initial_rate < 0.0 || floor < 0.0) throw ConfigError("learning rates must be >= 0");
    if (decay <= 0.0 || decay > 1.0) throw ConfigError("lr decay must lie in (0, 1]");
  }
};

}  // namespace vibgmm
