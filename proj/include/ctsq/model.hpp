#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctsq/interp.hpp"
#include "ctsq/nn.hpp"
#include "ctsq/ou.hpp"
#include "ctsq/sde.hpp"
#include "ctsq/tpp.hpp"

namespace ctsq::model {

enum class ObsKind { Gaussian, DiscretizedLogisticMixture };

struct ModelConfig {
  int d_x = 4;
  int d_z = 16;
  int gru_hidden = 64;
  int embed_hidden = 32;
  int embed_out = 32;
  std::vector<int> drift_hidden = {128, 128};
  std::vector<int> dec_hidden = {128, 128};
  std::vector<int> tpp_hidden = {64};
  double sigma_obs = 0.1;
  double lambda_frac = 0.5;  // prior intensity as a fraction of sequence length
  double dt = 0.1;           // frame spacing; frame i sits at t_i = i*dt
  int t_frames = 100;
  double t_max = 1.0;
  double prune_threshold = ou::kDefaultPruneThreshold;
  int substeps_per_frame = 4;
  double nu_init = 0.5;
  ObsKind obs_kind = ObsKind::Gaussian;
  int dlm_components = 3;  // mixture size for the 8-bit lossless observation model
  bool cubic_zhat = false;

  double t_end() const { return dt * t_frames; }
  // points per unit time such that lambda_frac*t_frames points are expected
  double lambda() const { return lambda_frac * t_frames / t_end(); }
  int hidden_dim() const { return 2 * gru_hidden; }
  int dec_out_dim() const {
    return obs_kind == ObsKind::Gaussian ? d_x : d_x * 3 * dlm_components;
  }

  std::vector<std::uint8_t> serialize() const;
  static ModelConfig deserialize(std::span<const std::uint8_t>& bytes);
};

struct TrainConfig {
  int stage1_iters = 120;
  int stage2_iters = 180;
  int batch_size = 8;
  double lr = 3e-4;
  std::uint64_t seed = 1;
  double divergence_abort = 1e6;
};

struct TrainLogRow {
  int iter = 0;
  int stage = 0;
  double loss = 0.0, recon = 0.0, rate = 0.0, times_rate = 0.0;
  double mean_m = 0.0;
  double nu_min = 0.0, nu_median = 0.0, nu_max = 0.0;
};

using Sequence = std::vector<std::vector<double>>;  // T frames x d_x

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  nn::Tensor nu() const { return nn::exp_t(log_nu_); }
  std::vector<double> nu_values() const;
  std::vector<bool> global_mask() const;  // true = prunable dimension

  // --- encoder -------------------------------------------------------------
  struct Encoded {
    std::vector<nn::Tensor> gru_out;  // per frame, [2H]
    interp::Spline h_spline;          // cubic, doubles, knots at frame times
    std::vector<double> frame_times;
    mutable std::map<double, std::vector<double>> weight_cache;
  };
  Encoded encode(const Sequence& x) const;
  nn::Tensor h_at(const Encoded& enc, double t) const;  // differentiable

  // --- posterior SDE -------------------------------------------------------
  struct Posterior {
    nn::Tensor z0;
    nn::Tensor q0_logpdf;
    sde::LatentPath path;
  };
  sde::Drift posterior_drift(const Encoded& enc) const;
  sde::Drift prior_drift() const;
  Posterior posterior_path(const Encoded& enc, const sde::SolverGrid& grid,
                           std::uint64_t noise_seed) const;

  // --- reconstruction ------------------------------------------------------
  // knot times for a discretization set: {t0} U times U {t_end}, deduped
  std::vector<double> knot_times(std::span<const double> tset_times) const;
  // linear spline through the path values at the knots, decoded at query times
  std::vector<nn::Tensor> reconstruct(const sde::LatentPath& path,
                                      std::span<const double> knots,
                                      std::span<const double> query_times) const;
  nn::Tensor decode_latent(const nn::Tensor& zhat) const;

  // Plain-double decode used by the codec: linear spline through dequantized
  // knot values, pruned dimensions held at their initial value.
  std::vector<std::vector<double>> reconstruct_d(
      std::span<const double> knots, const std::vector<std::vector<double>>& knot_values,
      std::span<const double> query_times, const std::vector<bool>& pruned) const;
  std::vector<double> decode_latent_d(std::span<const double> zhat) const;
  // raw decoder outputs (distribution parameters in DLM mode)
  std::vector<double> dec_raw_d(std::span<const double> zhat) const;
  // plain-double posterior pieces used by the entropy coder
  std::pair<std::vector<double>, std::vector<double>> q0_params_d(
      const Encoded& enc) const;  // (mean, sd)
  std::vector<double> posterior_drift_d(const Encoded& enc, std::span<const double> z,
                                        double t) const;

  // --- rates ---------------------------------------------------------------
  nn::Tensor lossy_rate_nats(const sde::LatentPath& path,
                             std::span<const double> knots) const;
  nn::Tensor lossless_rate_nats(const Encoded& enc, const Posterior& post,
                                std::span<const double> knots) const;

  // --- TPP bridging --------------------------------------------------------
  tpp::GapNets gap_nets_d(const Encoded& enc) const;
  std::pair<double, double> gap_params_d(std::span<const double> h, double t) const;
  // differentiable log q(T|x); hidden states are detached so only the gap
  // nets receive gradient
  nn::Tensor logq_t(const Encoded& enc, std::span<const double> times) const;

  // --- objective / training ------------------------------------------------
  struct ObjParts {
    nn::Tensor total;  // nats
    double recon_nats = 0.0, rate_nats = 0.0, times_rate_nats = 0.0;
    nn::Tensor logq;  // stage 2 only
    tpp::DiscretizationSet tset;
  };
  ObjParts objective(const Sequence& x, std::uint64_t noise_seed, int stage) const;

  std::vector<TrainLogRow> train(const std::vector<Sequence>& dataset,
                                 const TrainConfig& tc);

  // --- observation likelihood ----------------------------------------------
  nn::Tensor obs_neg_loglik(const nn::Tensor& dec_out,
                            std::span<const double> x_frame) const;
  // PMF over 256 symbols for one channel of an 8-bit frame (lossless mode)
  std::vector<double> dlm_pmf_d(std::span<const double> dec_out, int channel) const;

  // --- checkpointing -------------------------------------------------------
  std::vector<std::uint8_t> save() const;  // config header + parameters
  static Model load(std::span<const std::uint8_t> bytes);
  std::uint64_t param_hash() const;

 private:
  ModelConfig cfg_;
  nn::ParamStore params_;
  nn::Mlp embed_, drift_net_, dec_net_, q0_net_, tpp_net_;
  nn::GruParams gru_;
  nn::Tensor log_nu_;

  void wire_nets(std::uint64_t init_seed);
};

}  // namespace ctsq::model
