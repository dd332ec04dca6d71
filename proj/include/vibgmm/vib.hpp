#pragma once

// Variational information bottleneck with a Gaussian-mixture latent prior.
//
// Per sample the maximised objective is
//   recon(x) - s * KL_lb(P(u|x) || Q(u))
// where recon averages the decoder log-likelihood over M reparametrised draws
// and KL_lb is the log-sum-exp mixture approximation in gmm.hpp. Training
// ascends the batch mean of this objective with Adam; annealing raises s
// geometrically from s_min to s_max across the configured epochs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vibgmm/autodiff.hpp"
#include "vibgmm/baselines.hpp"
#include "vibgmm/gaussian.hpp"
#include "vibgmm/gmm.hpp"
#include "vibgmm/nn.hpp"
#include "vibgmm/rng.hpp"

namespace vibgmm {

enum class ReconstructionLoss { bernoulli_cross_entropy, mean_squared_error };

inline std::string_view to_string(ReconstructionLoss r) {
  return r == ReconstructionLoss::bernoulli_cross_entropy ? "bce" : "mse";
}

inline ReconstructionLoss parse_reconstruction(std::string_view s) {
  if (s == "bce" || s == "bernoulli_cross_entropy") return ReconstructionLoss::bernoulli_cross_entropy;
  if (s == "mse" || s == "mean_squared_error") return ReconstructionLoss::mean_squared_error;
  throw ConfigError("unknown reconstruction loss '" + std::string(s) + "'");
}

/// Raised when a training step produces NaN/Inf.
struct TrainingAborted : NumericError {
  using NumericError::NumericError;
};

struct ModelSpec {
  std::size_t input_dim = 0;
  std::size_t latent_dim = 10;
  std::size_t clusters = 10;
  std::vector<std::size_t> encoder_hidden{500, 500, 2000};
  std::vector<std::size_t> decoder_hidden{2000, 500, 500};
  Activation decoder_output = Activation::linear;

  void validate() const {
    if (input_dim == 0 || latent_dim == 0 || clusters == 0) {
      throw ConfigError("input_dim, latent_dim and clusters must be positive");
    }
  }
};

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t mc_samples = 1;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
  double variance_floor = kDefaultVarianceFloor;
  ReconstructionLoss reconstruction = ReconstructionLoss::mean_squared_error;
  LrSchedule lr;
  // After this many epochs, refit the GMM by K-means on the latent means.
  // 0 disables the refit.
  std::size_t kmeans_init_epochs = 10;

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (mc_samples == 0) throw ConfigError("mc_samples must be >= 1");
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (!(variance_floor > 0.0)) throw ConfigError("variance_floor must be > 0");
    lr.validate();
  }
};

/// Capped geometric schedule s_{k+1} = min((1 + step_factor) s_k, s_max).
/// Without an explicit step factor, s changes once per epoch and reaches
/// s_max on the final epoch.
struct AnnealSchedule {
  double s_min = 1.0;
  double s_max = 5.0;
  std::optional<double> step_factor;

  void validate() const {
    if (!(s_min >= 0.0) || !(s_max >= s_min)) throw ConfigError("anneal: need 0 <= s_min <= s_max");
    if (step_factor && !(*step_factor > 0.0)) throw ConfigError("anneal: step_factor must be > 0");
    if (s_max > s_min && !(s_min > 0.0)) {
      throw ConfigError("anneal: a geometric schedule needs s_min > 0");
    }
  }

  double effective_step_factor(std::size_t total_epochs) const {
    if (step_factor) return *step_factor;
    if (total_epochs < 2 || s_max == s_min) return 0.0;
    return std::pow(s_max / s_min, 1.0 / static_cast<double>(total_epochs - 1)) - 1.0;
  }

  std::vector<double> s_values(std::size_t total_epochs) const {
    validate();
    std::vector<double> out{s_min};
    if (s_max == s_min) return out;
    const double eps = effective_step_factor(total_epochs);
    if (eps <= 0.0) return out;
    double s = s_min;
    // Values within 1e-12 relative of s_max snap to it so rounding cannot
    // create a spurious final step.
    while (out.back() < s_max) {
      s *= 1.0 + eps;
      out.push_back(s >= s_max * (1.0 - 1e-12) ? s_max : s);
      if (out.size() > total_epochs) {
        throw ConfigError("anneal: step_factor yields more s values than epochs (" +
                          std::to_string(total_epochs) + ")");
      }
    }
    return out;
  }

  /// Epochs spent at each s value; totals `total_epochs`, earlier blocks
  /// absorb the remainder.
  static std::vector<std::size_t> block_lengths(std::size_t total_epochs, std::size_t steps) {
    std::vector<std::size_t> out(steps, total_epochs / steps);
    for (std::size_t i = 0; i < total_epochs % steps; ++i) ++out[i];
    return out;
  }
};

struct VibModel {
  Encoder encoder;
  Mlp decoder;
  GmmParams gmm;

  static VibModel create(const ModelSpec& spec, Rng& rng, double variance_floor) {
    spec.validate();
    VibModel m;
    m.encoder = Encoder(
        Mlp(MlpSpec::encoder(spec.input_dim, spec.encoder_hidden, spec.latent_dim), "encoder", rng),
        variance_floor);
    m.decoder = Mlp(MlpSpec::decoder(spec.latent_dim, spec.decoder_hidden, spec.input_dim,
                                     spec.decoder_output),
                    "decoder", rng);
    m.gmm = GmmParams::random(spec.clusters, spec.latent_dim, rng, variance_floor);
    return m;
  }

  /// Encoder, decoder, then GMM parameters, in a stable order.
  std::vector<Parameter*> parameters() {
    auto out = encoder.parameters();
    for (auto* p : decoder.parameters()) out.push_back(p);
    for (auto* p : gmm.parameters()) out.push_back(p);
    return out;
  }

  std::size_t input_dim() const { return encoder.input_dim(); }
  std::size_t latent_dim() const { return encoder.latent_dim(); }
};

/// u = mean + exp(log_var / 2) * eps; `eps` is held constant on the tape.
inline Var reparam_sample(const GaussianPosterior& p, const Tensor& eps) {
  if (eps.shape() != p.mean.value().shape()) {
    throw DimensionError("reparam_sample: noise shape " + shape_string(eps.shape()) +
                         " vs posterior " + shape_string(p.mean.value().shape()));
  }
  Tape& t = p.mean.tape();
  return p.mean + exp(0.5 * p.log_var) * t.constant(eps);
}

inline Var reparam_sample(const GaussianPosterior& p, Rng& rng) {
  return reparam_sample(p, standard_normal(p.mean.value().shape(), rng));
}

inline constexpr double kBernoulliClamp = 1e-7;

/// Per-row decoder log-likelihood surrogate, summed over dimensions; [B].
///   bce: sum_j x_j log xh_j + (1 - x_j) log(1 - xh_j), xh clamped to [1e-7, 1 - 1e-7]
///   mse: -1/2 sum_j (x_j - xh_j)^2
inline Var reconstruction_term(const Var& x, const Var& x_hat, ReconstructionLoss kind) {
  if (x.value().shape() != x_hat.value().shape() || x.value().rank() != 2) {
    throw DimensionError("reconstruction_term: " + shape_string(x.value().shape()) + " vs " +
                         shape_string(x_hat.value().shape()));
  }
  if (kind == ReconstructionLoss::mean_squared_error) {
    return -0.5 * sum(square(x - x_hat), 1);
  }
  for (double v : x.value().data()) {
    if (v < 0.0 || v > 1.0) {
      throw DomainError("bernoulli cross-entropy needs targets in [0,1], got " + std::to_string(v));
    }
  }
  const Var xh = clamp(x_hat, kBernoulliClamp, 1.0 - kBernoulliClamp);
  return sum(x * log(xh) + (1.0 - x) * log(1.0 - xh), 1);
}

/// Per-sample objective pieces, each [B].
struct CostTerms {
  Var recon;
  Var kl;
  Var total;
};

/// recon averaged over one reparametrised draw per entry of `noise`, minus
/// s times the mixture KL approximation.
inline CostTerms empirical_cost(Tape& tape, VibModel& model, const Var& x, double s,
                                std::span<const Tensor> noise, ReconstructionLoss kind) {
  if (s < 0.0) throw ConfigError("s must be >= 0");
  if (noise.empty()) throw UsageError("empirical_cost needs at least one noise draw");
  const GaussianPosterior post = model.encoder.encode(tape, x);
  Var recon;
  for (std::size_t m = 0; m < noise.size(); ++m) {
    const Var u = reparam_sample(post, noise[m]);
    const Var r = reconstruction_term(x, model.decoder.forward(tape, u), kind);
    recon = m == 0 ? r : recon + r;
  }
  if (noise.size() > 1) recon = recon * (1.0 / static_cast<double>(noise.size()));
  const Var kl = kl_variational_lb(post, bind(tape, model.gmm));
  return CostTerms{recon, kl, recon - s * kl};
}

struct EpochRecord {
  std::size_t epoch = 0;  // 0-based
  double s = 0.0;
  double lr = 0.0;
  double recon = 0.0;  // mean over samples
  double kl = 0.0;     // mean over samples
  double total = 0.0;  // recon - s * kl
  double wall_ms = 0.0;
};

struct TrainState {
  VibModel model;
  AdamState adam;
  std::size_t epoch = 0;
  double s = 0.0;
  std::vector<EpochRecord> history;
  std::vector<double> s_sequence;  // distinct s values visited, in order
  Rng shuffle_rng;
  Rng noise_rng;
};

inline TrainState init_train_state(const ModelSpec& spec, const TrainConfig& config) {
  config.validate();
  Rng init = make_rng(config.seed, Stream::init);
  TrainState st;
  st.model = VibModel::create(spec, init, config.variance_floor);
  st.adam = AdamState::for_parameters(st.model.parameters());
  st.shuffle_rng = make_rng(config.seed, Stream::shuffle);
  st.noise_rng = make_rng(config.seed, Stream::noise);
  return st;
}

/// Batch order for one epoch: a seeded permutation split into consecutive
/// chunks of batch_size (the last chunk may be short).
inline std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size,
                                                              Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

/// One shuffled pass over `features` at a fixed s, one Adam step per batch.
inline EpochRecord train_epoch(const Tensor& features, TrainState& state, const TrainConfig& config,
                               double s) {
  if (features.rank() != 2 || features.rows() == 0) throw ValidationError("empty dataset");
  if (features.cols() != state.model.input_dim()) {
    throw DimensionError("dataset width " + std::to_string(features.cols()) +
                         " does not match model input " + std::to_string(state.model.input_dim()));
  }
  const auto start = std::chrono::steady_clock::now();
  const double lr = config.lr.rate(state.epoch);
  state.adam.learning_rate = lr;
  const auto params = state.model.parameters();
  const auto batches = shuffled_batches(features.rows(), config.batch_size, state.shuffle_rng);

  double recon_sum = 0.0, kl_sum = 0.0;
  Tape tape;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    try {
      tape.clear();
      for (auto* p : params) p->zero_grad();
      const Var x = tape.constant(take_rows(features, batches[b]));
      std::vector<Tensor> noise;
      const Shape latent_shape{batches[b].size(), state.model.latent_dim()};
      for (std::size_t m = 0; m < config.mc_samples; ++m) {
        noise.push_back(standard_normal(latent_shape, state.noise_rng));
      }
      const CostTerms terms =
          empirical_cost(tape, state.model, x, s, noise, config.reconstruction);
      tape.backward(neg(mean(terms.total)));
      for (double v : terms.recon.value().data()) recon_sum += v;
      for (double v : terms.kl.value().data()) kl_sum += v;
      adam_step(params, state.adam);
      for (const auto* p : params) {
        if (!p->value.all_finite()) throw NumericError("parameter '" + p->name + "' became non-finite");
      }
    } catch (const NumericError& e) {
      throw TrainingAborted("training aborted at epoch " + std::to_string(state.epoch) +
                            ", batch " + std::to_string(b) + " (s=" + std::to_string(s) +
                            ", lr=" + std::to_string(lr) + "): " + e.what());
    }
  }

  const double n = static_cast<double>(features.rows());
  EpochRecord rec;
  rec.epoch = state.epoch;
  rec.s = s;
  rec.lr = lr;
  rec.recon = recon_sum / n;
  rec.kl = kl_sum / n;
  rec.total = rec.recon - s * rec.kl;
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  state.history.push_back(rec);
  state.s = s;
  ++state.epoch;
  return rec;
}

/// Posterior means for every row, computed in chunks; [N x n_u].
inline Tensor latent_means(const Tensor& features, VibModel& model, std::size_t chunk = 1024) {
  if (features.cols() != model.input_dim()) {
    throw DimensionError("expected feature width " + std::to_string(model.input_dim()) + ", got " +
                         std::to_string(features.cols()));
  }
  const std::size_t n = features.rows(), d = model.latent_dim();
  Tensor out(Shape{n, d});
  Tape tape;
  for (std::size_t i = 0; i < n; i += chunk) {
    tape.clear();
    std::vector<std::size_t> idx(std::min(chunk, n - i));
    std::iota(idx.begin(), idx.end(), i);
    const auto post = model.encoder.encode(tape, tape.constant(take_rows(features, idx)));
    const auto& mv = post.mean.value();
    std::copy(mv.data().begin(), mv.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return out;
}

/// Responsibilities q(c | u) at the posterior means; [N x C].
inline Tensor assignment_probabilities(const Tensor& features, VibModel& model) {
  const Tensor u = latent_means(features, model);
  Tape tape;
  return cluster_posterior(tape.constant(u), bind(tape, model.gmm)).value();
}

/// Hard labels: argmax of q(c | u) at the posterior mean, lowest index on ties.
inline std::vector<int> assign_clusters(const Tensor& features, VibModel& model) {
  const Tensor probs = assignment_probabilities(features, model);
  const std::size_t k = probs.cols();
  std::vector<int> labels(probs.rows());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<int>(
        argmax(std::span<const double>(probs.data().subspan(i * k, k))));
  }
  return labels;
}

/// Replaces the GMM by a K-means fit of the current latent means.
inline void reinit_gmm_from_kmeans(const Tensor& features, TrainState& state, std::uint64_t seed) {
  const Tensor u = latent_means(features, state.model);
  auto& gmm = state.model.gmm;
  const std::size_t k = gmm.components(), d = gmm.dim(), n = u.rows();
  if (k > n) return;
  const KmeansState km = kmeans_restarts(u, k, seed, 10);
  std::vector<double> counts(k, 0.0);
  Tensor var(Shape{k, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(km.assignments[i]);
    counts[c] += 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = u[i * d + j] - km.centroids[c * d + j];
      var[c * d + j] += diff * diff;
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    gmm.weight_logits.value[c] = std::log(std::max(counts[c], 1.0) / static_cast<double>(n));
    for (std::size_t j = 0; j < d; ++j) {
      const double v = counts[c] > 1.0 ? var[c * d + j] / counts[c] : 1.0;
      gmm.log_vars.value[c * d + j] = std::log(std::max(v, gmm.variance_floor));
    }
  }
  gmm.means.value = km.centroids;
  const auto params = state.model.parameters();
  for (std::size_t i = params.size() - 3; i < params.size(); ++i) state.adam.reset_moments(i);
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs the annealing schedule on an existing state for config.epochs epochs.
inline void anneal_train(const Tensor& features, TrainState& state, const TrainConfig& config,
                         const AnnealSchedule& schedule, const EpochCallback& on_epoch = {}) {
  config.validate();
  const auto s_values = schedule.s_values(config.epochs);
  const auto blocks = AnnealSchedule::block_lengths(config.epochs, s_values.size());
  for (std::size_t k = 0; k < s_values.size(); ++k) {
    state.s_sequence.push_back(s_values[k]);
    for (std::size_t e = 0; e < blocks[k]; ++e) {
      const EpochRecord rec = train_epoch(features, state, config, s_values[k]);
      if (config.kmeans_init_epochs != 0 && state.epoch == config.kmeans_init_epochs) {
        reinit_gmm_from_kmeans(features, state, derive_seed(config.seed, Stream::baseline));
      }
      if (on_epoch) on_epoch(rec);
    }
  }
}

inline TrainState anneal_train(const Tensor& features, const ModelSpec& spec,
                               const TrainConfig& config, const AnnealSchedule& schedule,
                               const EpochCallback& on_epoch = {}) {
  TrainState state = init_train_state(spec, config);
  anneal_train(features, state, config, schedule, on_epoch);
  return state;
}

}  // namespace vibgmm
