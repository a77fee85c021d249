#include "ctsq/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ctsq/mathutil.hpp"

namespace ctsq::model {

namespace {

template <class T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}
template <class T>
T take(std::span<const std::uint8_t>& in) {
  if (in.size() < sizeof(T)) throw std::runtime_error("model config: truncated");
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in = in.subspan(sizeof(T));
  return v;
}
void put_ints(std::vector<std::uint8_t>& out, const std::vector<int>& v) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
  for (int x : v) put<std::int32_t>(out, x);
}
std::vector<int> take_ints(std::span<const std::uint8_t>& in) {
  const auto n = take<std::uint32_t>(in);
  std::vector<int> v(n);
  for (auto& x : v) x = take<std::int32_t>(in);
  return v;
}

}  // namespace

std::vector<std::uint8_t> ModelConfig::serialize() const {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'M', 'C', 'F', 'G'});
  put<std::uint32_t>(out, 1);
  put<std::int32_t>(out, d_x);
  put<std::int32_t>(out, d_z);
  put<std::int32_t>(out, gru_hidden);
  put<std::int32_t>(out, embed_hidden);
  put<std::int32_t>(out, embed_out);
  put_ints(out, drift_hidden);
  put_ints(out, dec_hidden);
  put_ints(out, tpp_hidden);
  put<double>(out, sigma_obs);
  put<double>(out, lambda_frac);
  put<double>(out, dt);
  put<std::int32_t>(out, t_frames);
  put<double>(out, t_max);
  put<double>(out, prune_threshold);
  put<std::int32_t>(out, substeps_per_frame);
  put<double>(out, nu_init);
  put<std::uint8_t>(out, obs_kind == ObsKind::Gaussian ? 0 : 1);
  put<std::int32_t>(out, dlm_components);
  put<std::uint8_t>(out, cubic_zhat ? 1 : 0);
  return out;
}

ModelConfig ModelConfig::deserialize(std::span<const std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "MCFG", 4) != 0)
    throw std::runtime_error("model config: bad magic");
  bytes = bytes.subspan(4);
  const auto version = take<std::uint32_t>(bytes);
  if (version != 1) throw std::runtime_error("model config: unsupported version");
  ModelConfig c;
  c.d_x = take<std::int32_t>(bytes);
  c.d_z = take<std::int32_t>(bytes);
  c.gru_hidden = take<std::int32_t>(bytes);
  c.embed_hidden = take<std::int32_t>(bytes);
  c.embed_out = take<std::int32_t>(bytes);
  c.drift_hidden = take_ints(bytes);
  c.dec_hidden = take_ints(bytes);
  c.tpp_hidden = take_ints(bytes);
  c.sigma_obs = take<double>(bytes);
  c.lambda_frac = take<double>(bytes);
  c.dt = take<double>(bytes);
  c.t_frames = take<std::int32_t>(bytes);
  c.t_max = take<double>(bytes);
  c.prune_threshold = take<double>(bytes);
  c.substeps_per_frame = take<std::int32_t>(bytes);
  c.nu_init = take<double>(bytes);
  c.obs_kind = take<std::uint8_t>(bytes) == 0 ? ObsKind::Gaussian
                                              : ObsKind::DiscretizedLogisticMixture;
  c.dlm_components = take<std::int32_t>(bytes);
  c.cubic_zhat = take<std::uint8_t>(bytes) != 0;
  return c;
}

Model::Model(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  wire_nets(init_seed);
}

void Model::wire_nets(std::uint64_t init_seed) {
  std::mt19937_64 rng(init_seed);
  const int h2 = cfg_.hidden_dim();
  embed_ = nn::make_mlp(params_, "embed", cfg_.d_x, {cfg_.embed_hidden},
                        cfg_.embed_out, rng);
  gru_ = nn::make_gru(params_, "gru", cfg_.embed_out, cfg_.gru_hidden, rng);
  q0_net_ = nn::make_mlp(params_, "q0", h2, {64}, 2 * cfg_.d_z, rng);
  drift_net_ = nn::make_mlp(params_, "drift", cfg_.d_z + h2, cfg_.drift_hidden,
                            cfg_.d_z, rng);
  dec_net_ = nn::make_mlp(params_, "dec", cfg_.d_z, cfg_.dec_hidden,
                          cfg_.dec_out_dim(), rng);
  tpp_net_ = nn::make_mlp(params_, "tpp", h2 + 2, cfg_.tpp_hidden, 2, rng);
  log_nu_ = params_.create_const_init("log_nu", {cfg_.d_z}, std::log(cfg_.nu_init));
}

std::vector<double> Model::nu_values() const {
  std::vector<double> out(log_nu_.data().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_nu_.data()[i]);
  return out;
}

std::vector<bool> Model::global_mask() const {
  const auto nu = nu_values();
  std::vector<bool> mask(nu.size());
  for (std::size_t i = 0; i < nu.size(); ++i) mask[i] = nu[i] <= cfg_.prune_threshold;
  return mask;
}

Model::Encoded Model::encode(const Sequence& x) const {
  if (x.size() < 2) throw std::invalid_argument("encode: need at least 2 frames");
  const bool dlm = cfg_.obs_kind == ObsKind::DiscretizedLogisticMixture;
  std::vector<nn::Tensor> embedded;
  embedded.reserve(x.size());
  for (const auto& frame : x) {
    if (static_cast<int>(frame.size()) != cfg_.d_x)
      throw std::invalid_argument("encode: frame width mismatch");
    std::vector<double> in = frame;
    if (dlm)
      for (auto& v : in) v = v / 127.5 - 1.0;  // 8-bit symbols to [-1,1]
    embedded.push_back(embed_(nn::Tensor::constant(in, {cfg_.d_x})));
  }
  Encoded enc;
  enc.gru_out = nn::gru_bidirectional(gru_, embedded);
  enc.frame_times.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    enc.frame_times[i] = static_cast<double>(i + 1) * cfg_.dt;
  std::vector<std::vector<double>> knot_vals(enc.gru_out.size());
  for (std::size_t i = 0; i < enc.gru_out.size(); ++i)
    knot_vals[i] = enc.gru_out[i].data();
  enc.h_spline = interp::Spline::fit(interp::SplineKind::CubicNatural,
                                     enc.frame_times, std::move(knot_vals));
  return enc;
}

nn::Tensor Model::h_at(const Encoded& enc, double t) const {
  auto it = enc.weight_cache.find(t);
  if (it == enc.weight_cache.end())
    it = enc.weight_cache.emplace(t, enc.h_spline.weight_row(t)).first;
  return nn::linear_comb(enc.gru_out, it->second);
}

sde::Drift Model::posterior_drift(const Encoded& enc) const {
  return [this, &enc](const nn::Tensor& z, double t) {
    return drift_net_(nn::concat({z, h_at(enc, t)}));
  };
}

sde::Drift Model::prior_drift() const {
  return [this](const nn::Tensor& z, double) {
    return nn::mul(nn::scale(nn::square(nn::exp_t(log_nu_)), -0.5), z);
  };
}

Model::Posterior Model::posterior_path(const Encoded& enc, const sde::SolverGrid& grid,
                                       std::uint64_t noise_seed) const {
  nn::Tensor h0 = h_at(enc, 0.0);
  nn::Tensor q0_out = q0_net_(h0);
  nn::Tensor mu = nn::slice(q0_out, 0, cfg_.d_z);
  nn::Tensor sd =
      nn::add_scalar(nn::softplus_t(nn::slice(q0_out, cfg_.d_z, cfg_.d_z)), 1e-6);
  std::vector<double> eps(cfg_.d_z);
  for (int d = 0; d < cfg_.d_z; ++d)
    eps[d] = counter_normal(noise_seed, 0xE0E0, static_cast<std::uint64_t>(d));
  nn::Tensor z0 = nn::add(mu, nn::mul(sd, nn::Tensor::constant(eps, {cfg_.d_z})));
  nn::Tensor q0_logpdf = nn::gaussian_logpdf(z0, mu, nn::scale(nn::log_t(sd), 2.0));

  auto wiener = sde::BrownianPath::generate(mix64(noise_seed ^ 0xB0B0B0B0ULL),
                                            grid.times, cfg_.d_z);
  Posterior post{z0, q0_logpdf,
                 sde::euler_solve(z0, posterior_drift(enc), nu(), wiener, grid)};
  return post;
}

std::vector<double> Model::knot_times(std::span<const double> tset_times) const {
  std::vector<double> knots;
  knots.reserve(tset_times.size() + 2);
  knots.push_back(0.0);
  knots.insert(knots.end(), tset_times.begin(), tset_times.end());
  knots.push_back(cfg_.t_end());
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  return knots;
}

std::vector<nn::Tensor> Model::reconstruct(const sde::LatentPath& path,
                                           std::span<const double> knots,
                                           std::span<const double> query_times) const {
  std::vector<nn::Tensor> knot_vals;
  std::vector<std::vector<double>> knot_data;
  knot_vals.reserve(knots.size());
  for (double t : knots) {
    knot_vals.push_back(path.at_time(t));
    knot_data.push_back(knot_vals.back().data());
  }
  const auto kind =
      cfg_.cubic_zhat ? interp::SplineKind::CubicNatural : interp::SplineKind::Linear;
  auto zspline = interp::Spline::fit(
      kind, std::vector<double>(knots.begin(), knots.end()), std::move(knot_data));
  std::vector<nn::Tensor> out;
  out.reserve(query_times.size());
  for (double t : query_times) {
    const auto w = zspline.weight_row(t);
    out.push_back(decode_latent(nn::linear_comb(knot_vals, w)));
  }
  return out;
}

nn::Tensor Model::decode_latent(const nn::Tensor& zhat) const { return dec_net_(zhat); }

std::vector<double> Model::decode_latent_d(std::span<const double> zhat) const {
  nn::Tensor out = dec_net_(
      nn::Tensor::constant({zhat.begin(), zhat.end()}, {cfg_.d_z}));
  if (cfg_.obs_kind == ObsKind::Gaussian) return out.data();
  // mixture mean per channel
  const int k = cfg_.dlm_components;
  std::vector<double> mean_out(cfg_.d_x, 0.0);
  for (int c = 0; c < cfg_.d_x; ++c) {
    const double* base = out.data().data() + static_cast<std::size_t>(c) * 3 * k;
    double wmax = -1e300;
    for (int j = 0; j < k; ++j) wmax = std::max(wmax, base[j]);
    double wsum = 0.0, acc = 0.0;
    for (int j = 0; j < k; ++j) {
      const double w = std::exp(base[j] - wmax);
      wsum += w;
      acc += w * base[k + j];
    }
    mean_out[c] = acc / wsum;
  }
  return mean_out;
}

std::vector<double> Model::dec_raw_d(std::span<const double> zhat) const {
  return dec_net_(nn::Tensor::constant({zhat.begin(), zhat.end()}, {cfg_.d_z}))
      .data();
}

std::pair<std::vector<double>, std::vector<double>> Model::q0_params_d(
    const Encoded& enc) const {
  nn::Tensor out = q0_net_(h_at(enc, 0.0));
  std::vector<double> mean(out.data().begin(), out.data().begin() + cfg_.d_z);
  std::vector<double> sd(cfg_.d_z);
  for (int d = 0; d < cfg_.d_z; ++d)
    sd[d] = softplus(out.data()[cfg_.d_z + d]) + 1e-6;
  return {std::move(mean), std::move(sd)};
}

std::vector<double> Model::posterior_drift_d(const Encoded& enc,
                                             std::span<const double> z,
                                             double t) const {
  nn::Tensor zt = nn::Tensor::constant({z.begin(), z.end()}, {cfg_.d_z});
  return drift_net_(nn::concat({zt, h_at(enc, t)})).data();
}

std::vector<std::vector<double>> Model::reconstruct_d(
    std::span<const double> knots, const std::vector<std::vector<double>>& knot_values,
    std::span<const double> query_times, const std::vector<bool>& pruned) const {
  if (knot_values.size() != knots.size())
    throw std::invalid_argument("reconstruct_d: knots/values mismatch");
  std::vector<std::vector<double>> vals = knot_values;
  for (std::size_t k = 0; k < vals.size(); ++k)
    for (int d = 0; d < cfg_.d_z; ++d)
      if (pruned[static_cast<std::size_t>(d)]) vals[k][d] = knot_values[0][d];
  const auto kind =
      cfg_.cubic_zhat ? interp::SplineKind::CubicNatural : interp::SplineKind::Linear;
  auto zspline = interp::Spline::fit(
      kind, std::vector<double>(knots.begin(), knots.end()), std::move(vals));
  std::vector<std::vector<double>> out;
  out.reserve(query_times.size());
  for (double t : query_times) out.push_back(decode_latent_d(zspline.eval(t)));
  return out;
}

nn::Tensor Model::lossy_rate_nats(const sde::LatentPath& path,
                                  std::span<const double> knots) const {
  nn::Tensor nu_t = nu();
  nn::Tensor zeros = nn::Tensor::zeros({cfg_.d_z});
  nn::Tensor z_prev = path.at_time(knots[0]);
  nn::Tensor acc = nn::gaussian_logpdf(z_prev, zeros, zeros);  // z0 ~ N(0, I)
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const double dt = knots[i] - knots[i - 1];
    nn::Tensor a = nn::scale(nn::square(nu_t), dt);
    nn::Tensor mean_mult = nn::exp_t(nn::scale(a, -0.5));
    nn::Tensor var = nn::add_scalar(nn::neg(nn::exp_t(nn::neg(a))), 1.0);
    nn::Tensor z = path.at_time(knots[i]);
    acc = nn::add(acc, nn::gaussian_logpdf(z, nn::mul(z_prev, mean_mult),
                                           nn::log_t(var)));
    z_prev = z;
  }
  return nn::neg(acc);
}

nn::Tensor Model::lossless_rate_nats(const Encoded& enc, const Posterior& post,
                                     std::span<const double> knots) const {
  std::vector<nn::Tensor> values;
  values.reserve(knots.size());
  for (double t : knots) values.push_back(post.path.at_time(t));
  nn::Tensor pseudo = sde::pseudo_log_likelihood(posterior_drift(enc), nu(), knots,
                                                 values, post.q0_logpdf);
  return nn::add(pseudo, lossy_rate_nats(post.path, knots));
}

std::pair<double, double> Model::gap_params_d(std::span<const double> h,
                                              double t) const {
  std::vector<double> in(h.begin(), h.end());
  in.push_back(t / cfg_.t_end());
  in.push_back((cfg_.t_end() - t) / cfg_.t_max);
  nn::Tensor out = tpp_net_(
      nn::Tensor::constant(std::move(in), {cfg_.hidden_dim() + 2}));
  const double mu = out.data()[0];
  const double s = softplus(out.data()[1]) + 1e-3;
  return {mu, s};
}

tpp::GapNets Model::gap_nets_d(const Encoded&) const {
  return [this](std::span<const double> h, double t) { return gap_params_d(h, t); };
}

nn::Tensor Model::logq_t(const Encoded& enc, std::span<const double> times) const {
  const double t_end = cfg_.t_end();
  const double t_max = cfg_.t_max;
  const double g_max = inv_softplus(t_max);
  double cursor = 0.0;
  nn::Tensor acc = nn::Tensor::scalar(0.0);
  auto mu_s_at = [&](double t) {
    // hidden state detached: REINFORCE touches only the gap nets
    nn::Tensor h = h_at(enc, t).detach();
    nn::Tensor feats = nn::Tensor::constant(
        {t / t_end, (t_end - t) / t_max}, {2});
    nn::Tensor out = tpp_net_(nn::concat({h, feats}));
    nn::Tensor mu = nn::slice(out, 0, 1);
    nn::Tensor s = nn::add_scalar(nn::softplus_t(nn::slice(out, 1, 1)), 1e-3);
    return std::pair{mu, s};
  };
  for (double t : times) {
    const double gap = t - cursor;
    if (!(gap > 0.0) || gap > t_max)
      throw std::invalid_argument("logq_t: invalid time set");
    auto [mu, s] = mu_s_at(cursor);
    const double g = inv_softplus(gap);
    nn::Tensor u = nn::div(nn::sub(nn::Tensor::scalar(g), mu), s);
    nn::Tensor u_max = nn::div(nn::sub(nn::Tensor::scalar(g_max), mu), s);
    // truncated log-density: logistic logpdf + change of vars - log F(t_max)
    nn::Tensor term = nn::add(
        nn::add(nn::neg(nn::log_t(s)),
                nn::sub(nn::scale(nn::softplus_t(nn::neg(u)), -2.0), u)),
        nn::add_scalar(nn::softplus_t(nn::neg(u_max)), softplus(-g)));
    acc = nn::add(acc, term);
    cursor = t;
  }
  const double rem = t_end - cursor;
  auto [mu, s] = mu_s_at(cursor);
  nn::Tensor u_max = nn::div(nn::sub(nn::Tensor::scalar(g_max), mu), s);
  nn::Tensor f_max = nn::sigmoid(u_max);
  nn::Tensor f_rem = rem > 0.0
                         ? nn::sigmoid(nn::div(
                               nn::sub(nn::Tensor::scalar(inv_softplus(rem)), mu), s))
                         : nn::Tensor::scalar(0.0);
  nn::Tensor mass = nn::add_scalar(nn::sub(f_max, f_rem), 1e-300);
  acc = nn::add(acc, nn::sub(nn::log_t(mass), nn::log_t(f_max)));
  return acc;
}

nn::Tensor Model::obs_neg_loglik(const nn::Tensor& dec_out,
                                 std::span<const double> x_frame) const {
  if (cfg_.obs_kind == ObsKind::Gaussian) {
    nn::Tensor diff = nn::sub(
        nn::Tensor::constant({x_frame.begin(), x_frame.end()}, {cfg_.d_x}), dec_out);
    const double s2 = cfg_.sigma_obs * cfg_.sigma_obs;
    return nn::add_scalar(nn::scale(nn::sum(nn::square(diff)), 0.5 / s2),
                          0.5 * cfg_.d_x * (kLog2Pi + std::log(s2)));
  }
  const int k = cfg_.dlm_components;
  nn::Tensor acc = nn::Tensor::scalar(0.0);
  for (int c = 0; c < cfg_.d_x; ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * 3 * k;
    nn::Tensor logits = nn::slice(dec_out, base, k);
    nn::Tensor mu = nn::slice(dec_out, base + k, k);
    nn::Tensor s = nn::add_scalar(nn::exp_t(nn::slice(dec_out, base + 2 * k, k)), 1e-6);
    double lmax = -1e300;
    for (double v : logits.data()) lmax = std::max(lmax, v);
    nn::Tensor e = nn::exp_t(nn::add_scalar(logits, -lmax));
    nn::Tensor w = nn::div_by(e, nn::sum(e));
    const int sym = static_cast<int>(std::lround(x_frame[c]));
    const double lo = (2.0 * (sym - 0.5) - 255.0) / 255.0;
    const double hi = (2.0 * (sym + 0.5) - 255.0) / 255.0;
    nn::Tensor cdf_hi =
        sym >= 255 ? nn::add_scalar(nn::Tensor::zeros({k}), 1.0)
                   : nn::sigmoid(nn::div(
                         nn::sub(nn::Tensor::constant(std::vector<double>(k, hi), {k}),
                                 mu),
                         s));
    nn::Tensor cdf_lo =
        sym <= 0 ? nn::Tensor::zeros({k})
                 : nn::sigmoid(nn::div(
                       nn::sub(nn::Tensor::constant(std::vector<double>(k, lo), {k}),
                               mu),
                       s));
    nn::Tensor p = nn::dot(w, nn::sub(cdf_hi, cdf_lo));
    acc = nn::sub(acc, nn::log_t(nn::add_scalar(p, 1e-12)));
  }
  return acc;
}

std::vector<double> Model::dlm_pmf_d(std::span<const double> dec_out,
                                     int channel) const {
  const int k = cfg_.dlm_components;
  const std::size_t base = static_cast<std::size_t>(channel) * 3 * k;
  std::vector<double> w(k), mu(k), s(k);
  double lmax = -1e300;
  for (int j = 0; j < k; ++j) lmax = std::max(lmax, dec_out[base + j]);
  double wsum = 0.0;
  for (int j = 0; j < k; ++j) {
    w[j] = std::exp(dec_out[base + j] - lmax);
    wsum += w[j];
    mu[j] = dec_out[base + k + j];
    s[j] = std::exp(dec_out[base + 2 * k + j]) + 1e-6;
  }
  for (auto& v : w) v /= wsum;
  std::vector<double> pmf(256, 0.0);
  for (int sym = 0; sym < 256; ++sym) {
    const double lo = (2.0 * (sym - 0.5) - 255.0) / 255.0;
    const double hi = (2.0 * (sym + 0.5) - 255.0) / 255.0;
    double p = 0.0;
    for (int j = 0; j < k; ++j) {
      const double chi = sym >= 255 ? 1.0 : sigmoid((hi - mu[j]) / s[j]);
      const double clo = sym <= 0 ? 0.0 : sigmoid((lo - mu[j]) / s[j]);
      p += w[j] * (chi - clo);
    }
    pmf[sym] = p;
  }
  return pmf;
}

Model::ObjParts Model::objective(const Sequence& x, std::uint64_t noise_seed,
                                 int stage) const {
  if (stage != 1 && stage != 2) throw std::invalid_argument("objective: stage in {1,2}");
  Encoded enc = encode(x);
  ObjParts parts;
  if (stage == 1) {
    parts.tset.times = enc.frame_times;  // full discretization
  } else {
    std::uint64_t ctr = 0;
    auto unif = [&] { return counter_uniform(noise_seed ^ 0x7199ULL, ctr++, 0); };
    parts.tset = tpp::sample_posterior(enc.h_spline, gap_nets_d(enc), cfg_.t_end(),
                                       cfg_.t_max, unif);
  }
  const auto knots = knot_times(parts.tset.times);
  auto grid = sde::SolverGrid::make(0.0, cfg_.t_end(),
                                    cfg_.t_frames * cfg_.substeps_per_frame,
                                    enc.frame_times, knots);
  Posterior post = posterior_path(enc, grid, noise_seed);

  auto dec_outs = reconstruct(post.path, knots, enc.frame_times);
  nn::Tensor recon = nn::Tensor::scalar(0.0);
  for (std::size_t i = 0; i < dec_outs.size(); ++i)
    recon = nn::add(recon, obs_neg_loglik(dec_outs[i], x[i]));

  nn::Tensor rate = cfg_.obs_kind == ObsKind::Gaussian
                        ? lossy_rate_nats(post.path, knots)
                        : lossless_rate_nats(enc, post, knots);

  parts.recon_nats = recon.value();
  parts.rate_nats = rate.value();
  nn::Tensor total = nn::add(recon, rate);
  if (stage == 2) {
    parts.times_rate_nats =
        parts.tset.log_q -
        tpp::prior_logp(cfg_.lambda(), cfg_.t_end(), parts.tset.count());
    total = nn::add_scalar(total, parts.times_rate_nats);
    parts.logq = logq_t(enc, parts.tset.times);
  }
  parts.total = total;
  return parts;
}

std::vector<TrainLogRow> Model::train(const std::vector<Sequence>& dataset,
                                      const TrainConfig& tc) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  std::vector<TrainLogRow> log;
  const int total_iters = tc.stage1_iters + tc.stage2_iters;
  for (int iter = 0; iter < total_iters; ++iter) {
    const int stage = iter < tc.stage1_iters ? 1 : 2;
    std::vector<double> losses;
    std::vector<nn::Tensor> logqs, totals;
    double recon = 0.0, rate = 0.0, trate = 0.0, msum = 0.0;
    for (int j = 0; j < tc.batch_size; ++j) {
      const std::size_t idx =
          (static_cast<std::size_t>(iter) * tc.batch_size + j) % dataset.size();
      const std::uint64_t noise_seed =
          mix64(tc.seed ^ mix64(static_cast<std::uint64_t>(iter) * 1000003ULL + j));
      ObjParts p = objective(dataset[idx], noise_seed, stage);
      losses.push_back(p.total.value());
      totals.push_back(p.total);
      if (stage == 2) logqs.push_back(p.logq);
      recon += p.recon_nats;
      rate += p.rate_nats;
      trate += p.times_rate_nats;
      msum += static_cast<double>(p.tset.count());
    }
    const double b = static_cast<double>(tc.batch_size);
    nn::Tensor batch_loss = nn::Tensor::scalar(0.0);
    for (const auto& t : totals) batch_loss = nn::add(batch_loss, t);
    batch_loss = nn::scale(batch_loss, 1.0 / b);
    if (stage == 2)
      batch_loss = nn::add(batch_loss, nn::reinforce_surrogate(losses, logqs));

    const double mean_loss = [&] {
      double acc = 0.0;
      for (double l : losses) acc += l;
      return acc / b;
    }();
    if (!std::isfinite(mean_loss) || mean_loss > tc.divergence_abort)
      throw std::runtime_error("train: divergence at iter " + std::to_string(iter));

    params_.zero_grad();
    nn::backward(batch_loss);
    params_.adam_step(tc.lr);

    auto nus = nu_values();
    std::sort(nus.begin(), nus.end());
    log.push_back(TrainLogRow{iter, stage, mean_loss, recon / b, rate / b, trate / b,
                              msum / b, nus.front(), nus[nus.size() / 2],
                              nus.back()});
  }
  return log;
}

std::vector<std::uint8_t> Model::save() const {
  auto out = cfg_.serialize();
  const auto p = params_.serialize();
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

Model Model::load(std::span<const std::uint8_t> bytes) {
  ModelConfig cfg = ModelConfig::deserialize(bytes);
  Model m(cfg, 0);
  m.params_.deserialize(bytes);
  return m;
}

std::uint64_t Model::param_hash() const {
  const auto bytes = save();
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace ctsq::model
