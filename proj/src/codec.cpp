#include "ctsq/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ctsq/mathutil.hpp"
#include "ctsq/ou.hpp"
#include "ctsq/tpp.hpp"

namespace ctsq::codec {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

template <class T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}
template <class T>
T take(std::span<const std::uint8_t>& in) {
  if (in.size() < sizeof(T)) throw std::runtime_error("container: truncated");
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in = in.subspan(sizeof(T));
  return v;
}
}  // namespace

// --- Quantizer ---------------------------------------------------------------

Quantizer Quantizer::make(int precision) {
  if (precision < 2 || (precision & (precision - 1)) != 0)
    throw std::invalid_argument("Quantizer: precision must be a power of two >= 2");
  Quantizer q;
  q.precision = precision;
  q.edges.resize(precision - 1);
  for (int i = 0; i + 1 < precision; ++i)
    q.edges[i] = norm_quantile(static_cast<double>(i + 1) / precision);
  q.recon.resize(precision);
  for (int i = 0; i < precision; ++i) {
    const double lo_pdf = i == 0 ? 0.0 : norm_pdf(q.edges[i - 1]);
    const double hi_pdf = i == precision - 1 ? 0.0 : norm_pdf(q.edges[i]);
    // E[Z | bin] = (phi(a) - phi(b)) / (1/P)
    q.recon[i] = (lo_pdf - hi_pdf) * precision;
  }
  return q;
}

int Quantizer::quantize(double z) const {
  if (!std::isfinite(z)) throw std::domain_error("quantize: non-finite input");
  return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), z) -
                          edges.begin());
}

double Quantizer::dequantize(int index) const {
  if (index < 0 || index >= precision)
    throw std::out_of_range("dequantize: index out of range");
  return recon[static_cast<std::size_t>(index)];
}

// --- PMF scaling -------------------------------------------------------------

Pmf16 make_pmf16(std::span<const double> probs) {
  const std::size_t n = probs.size();
  if (n == 0 || n > kPmfTotal) throw std::invalid_argument("make_pmf16: bad size");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw std::invalid_argument("make_pmf16: invalid probability");
    total += p;
  }
  Pmf16 out;
  out.freq.assign(n, 1);  // minimum-frequency-1 smoothing
  const std::uint32_t budget = kPmfTotal - static_cast<std::uint32_t>(n);
  std::vector<double> rem(n, 0.0);
  std::uint32_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = total > 0.0 ? probs[i] / total * budget : 0.0;
    const auto base = static_cast<std::uint32_t>(std::floor(share));
    out.freq[i] += base;
    assigned += base;
    rem[i] = share - base;
  }
  // largest-remainder rounding; ties broken by lower index for determinism
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::uint32_t k = 0; k < budget - assigned; ++k)
    ++out.freq[order[k % n]];
  out.cum.resize(n + 1);
  out.cum[0] = 0;
  for (std::size_t i = 0; i < n; ++i) out.cum[i + 1] = out.cum[i] + out.freq[i];
  return out;
}

Pmf16 uniform_pmf16(int n) {
  return make_pmf16(std::vector<double>(static_cast<std::size_t>(n), 1.0));
}

Pmf16 gaussian_bin_pmf(const Quantizer& q, double mean, double sd) {
  const int p = q.precision;
  std::vector<double> probs(static_cast<std::size_t>(p));
  if (!(sd > 0.0) || !std::isfinite(sd)) {
    // degenerate transition: all mass on the bin containing the mean
    probs[static_cast<std::size_t>(q.quantize(mean))] = 1.0;
    return make_pmf16(probs);
  }
  double prev_cdf = 0.0;
  for (int i = 0; i < p; ++i) {
    const double hi_cdf =
        i == p - 1 ? 1.0 : norm_cdf((q.edges[static_cast<std::size_t>(i)] - mean) / sd);
    probs[static_cast<std::size_t>(i)] = std::max(0.0, hi_cdf - prev_cdf);
    prev_cdf = hi_cdf;
  }
  return make_pmf16(probs);
}

// --- rANS --------------------------------------------------------------------

AnsMessage AnsMessage::fresh() { return AnsMessage{}; }

AnsMessage AnsMessage::random_init(std::uint64_t seed, std::size_t words) {
  AnsMessage m;
  m.tail_.resize(words);
  for (std::size_t i = 0; i < words; ++i)
    m.tail_[i] = static_cast<std::uint16_t>(mix64(seed ^ (0xC0FFEEULL + i)));
  return m;
}

void AnsMessage::push(int symbol, const Pmf16& pmf) {
  const auto s = static_cast<std::size_t>(symbol);
  if (s + 1 >= pmf.cum.size()) throw std::out_of_range("ans push: bad symbol");
  const std::uint32_t f = pmf.freq[s];
  while (static_cast<std::uint64_t>(head_) >= (static_cast<std::uint64_t>(f) << 16)) {
    tail_.push_back(static_cast<std::uint16_t>(head_ & 0xFFFFu));
    head_ >>= 16;
  }
  head_ = ((head_ / f) << 16) + (head_ % f) + pmf.cum[s];
}

int AnsMessage::pop(const Pmf16& pmf) {
  const std::uint32_t slot = head_ & 0xFFFFu;
  const auto it = std::upper_bound(pmf.cum.begin(), pmf.cum.end(), slot);
  const auto s = static_cast<std::size_t>(it - pmf.cum.begin()) - 1;
  head_ = pmf.freq[s] * (head_ >> 16) + slot - pmf.cum[s];
  while (head_ < (1u << 16)) {
    if (tail_.empty())
      throw AnsUnderflow("ans pop: message exhausted (insufficient initial bits)");
    head_ = (head_ << 16) | tail_.back();
    tail_.pop_back();
  }
  return static_cast<int>(s);
}

std::vector<std::uint8_t> AnsMessage::serialize() const {
  std::vector<std::uint8_t> out;
  put<std::uint32_t>(out, head_);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tail_.size()));
  for (std::uint16_t w : tail_) put<std::uint16_t>(out, w);
  return out;
}

AnsMessage AnsMessage::deserialize(std::span<const std::uint8_t> bytes) {
  AnsMessage m;
  m.head_ = take<std::uint32_t>(bytes);
  const auto n = take<std::uint32_t>(bytes);
  m.tail_.resize(n);
  for (auto& w : m.tail_) w = take<std::uint16_t>(bytes);
  return m;
}

// --- latent skeleton coding --------------------------------------------------

namespace {

// PMFs and symbols in decode (time) order.
struct LatentPlan {
  std::vector<Pmf16> pmfs;
  std::vector<int> symbols;  // encode side only
};

void latent_plan_step(LatentPlan& plan, const Quantizer& q, double mean, double sd) {
  plan.pmfs.push_back(gaussian_bin_pmf(q, mean, sd));
}

}  // namespace

void push_latents(AnsMessage& m, const BinSkeleton& bins,
                  std::span<const double> knots, std::span<const double> nu,
                  const std::vector<bool>& pruned, const Quantizer& q,
                  double* info_bits) {
  const std::size_t dims = nu.size();
  if (bins.size() != knots.size())
    throw std::invalid_argument("push_latents: bins/knots mismatch");
  LatentPlan plan;
  const Pmf16 uni = uniform_pmf16(q.precision);
  std::vector<double> prev(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    plan.pmfs.push_back(uni);
    plan.symbols.push_back(bins[0][d]);
    prev[d] = q.dequantize(bins[0][d]);
  }
  for (std::size_t k = 1; k < knots.size(); ++k) {
    const double gap = knots[k] - knots[k - 1];
    for (std::size_t d = 0; d < dims; ++d) {
      if (pruned[d]) continue;
      const auto tr = ou::transition_params(nu[d], gap);
      latent_plan_step(plan, q, tr.mean_mult * prev[d], std::sqrt(tr.var));
      plan.symbols.push_back(bins[k][d]);
      prev[d] = q.dequantize(bins[k][d]);
    }
  }
  if (info_bits) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plan.symbols.size(); ++i)
      acc -= std::log2(
          static_cast<double>(
              plan.pmfs[i].freq[static_cast<std::size_t>(plan.symbols[i])]) /
          kPmfTotal);
    *info_bits = acc;
  }
  for (std::size_t i = plan.symbols.size(); i-- > 0;)
    m.push(plan.symbols[i], plan.pmfs[i]);
}

BinSkeleton pop_latents(AnsMessage& m, std::span<const double> knots,
                        std::span<const double> nu, const std::vector<bool>& pruned,
                        const Quantizer& q) {
  const std::size_t dims = nu.size();
  BinSkeleton bins(knots.size(), std::vector<int>(dims, 0));
  const Pmf16 uni = uniform_pmf16(q.precision);
  std::vector<double> prev(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    bins[0][d] = m.pop(uni);
    prev[d] = q.dequantize(bins[0][d]);
  }
  for (std::size_t k = 1; k < knots.size(); ++k) {
    const double gap = knots[k] - knots[k - 1];
    for (std::size_t d = 0; d < dims; ++d) {
      if (pruned[d]) {
        bins[k][d] = bins[0][d];
        continue;
      }
      const auto tr = ou::transition_params(nu[d], gap);
      bins[k][d] = m.pop(gaussian_bin_pmf(q, tr.mean_mult * prev[d], std::sqrt(tr.var)));
      prev[d] = q.dequantize(bins[k][d]);
    }
  }
  return bins;
}

// --- bits-back ---------------------------------------------------------------

AnsMessage bitsback_encode(const model::Model& m, const model::Sequence& x,
                           AnsMessage msg, const Quantizer& q, BitsBackStats* stats) {
  const auto& cfg = m.config();
  if (cfg.obs_kind != model::ObsKind::DiscretizedLogisticMixture)
    throw std::invalid_argument("bits-back requires a discrete observation model");
  auto enc = m.encode(x);
  const auto knots = m.knot_times(enc.frame_times);
  const std::size_t dims = static_cast<std::size_t>(cfg.d_z);
  const auto nu = m.nu_values();

  // 1. pop the latent skeleton from the message with q(z|x)
  double q_bits = 0.0;
  std::vector<std::vector<double>> z(knots.size(), std::vector<double>(dims));
  BinSkeleton bins(knots.size(), std::vector<int>(dims));
  std::vector<Pmf16> q_pmfs;
  q_pmfs.reserve(knots.size() * dims);
  auto [q0_mean, q0_sd] = m.q0_params_d(enc);
  for (std::size_t k = 0; k < knots.size(); ++k) {
    std::vector<double> mean(dims), sd(dims);
    if (k == 0) {
      mean = q0_mean;
      sd = q0_sd;
    } else {
      const double gap = knots[k] - knots[k - 1];
      const auto f = m.posterior_drift_d(enc, z[k - 1], knots[k - 1]);
      for (std::size_t d = 0; d < dims; ++d) {
        mean[d] = z[k - 1][d] + gap * f[d];
        sd[d] = std::sqrt(gap) * nu[d];
      }
    }
    for (std::size_t d = 0; d < dims; ++d) {
      q_pmfs.push_back(gaussian_bin_pmf(q, mean[d], sd[d]));
      bins[k][d] = msg.pop(q_pmfs.back());
      z[k][d] = q.dequantize(bins[k][d]);
      q_bits -= std::log2(
          static_cast<double>(
              q_pmfs.back().freq[static_cast<std::size_t>(bins[k][d])]) /
          kPmfTotal);
    }
  }

  // 2. push the observations with p(x|z), reversed so decode runs forward
  double px_bits = 0.0;
  for (std::size_t i = x.size(); i-- > 0;) {
    // frame i sits at knot i+1 ({0} prepended)
    const auto dec_out = m.dec_raw_d(z[i + 1]);
    for (int c = cfg.d_x; c-- > 0;) {
      const auto pmf = make_pmf16(m.dlm_pmf_d(dec_out, c));
      const int sym = static_cast<int>(std::lround(x[i][static_cast<std::size_t>(c)]));
      if (sym < 0 || sym > 255)
        throw std::invalid_argument("bits-back: data must be 8-bit symbols");
      px_bits -= std::log2(
          static_cast<double>(pmf.freq[static_cast<std::size_t>(sym)]) / kPmfTotal);
      msg.push(sym, pmf);
    }
  }

  // 3. push the skeleton with the OU prior
  double pz_bits = 0.0;
  const std::vector<bool> no_prune(dims, false);
  push_latents(msg, bins, knots, nu, no_prune, q, &pz_bits);
  if (stats) stats->elbo_bits = px_bits + pz_bits - q_bits;
  return msg;
}

std::pair<AnsMessage, model::Sequence> bitsback_decode(const model::Model& m,
                                                       AnsMessage msg,
                                                       const Quantizer& q) {
  const auto& cfg = m.config();
  std::vector<double> frame_times(static_cast<std::size_t>(cfg.t_frames));
  for (std::size_t i = 0; i < frame_times.size(); ++i)
    frame_times[i] = static_cast<double>(i + 1) * cfg.dt;
  const auto knots = m.knot_times(frame_times);
  const std::size_t dims = static_cast<std::size_t>(cfg.d_z);
  const auto nu = m.nu_values();
  const std::vector<bool> no_prune(dims, false);

  // 1. pop the skeleton with the prior
  BinSkeleton bins = pop_latents(msg, knots, nu, no_prune, q);
  std::vector<std::vector<double>> z(knots.size(), std::vector<double>(dims));
  for (std::size_t k = 0; k < knots.size(); ++k)
    for (std::size_t d = 0; d < dims; ++d) z[k][d] = q.dequantize(bins[k][d]);

  // 2. pop the observations with p(x|z)
  model::Sequence x(frame_times.size(), std::vector<double>(cfg.d_x));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto dec_out = m.dec_raw_d(z[i + 1]);
    for (int c = 0; c < cfg.d_x; ++c)
      x[i][static_cast<std::size_t>(c)] =
          static_cast<double>(msg.pop(make_pmf16(m.dlm_pmf_d(dec_out, c))));
  }

  // 3. push the skeleton back with q(z|x), reversing the encoder's pops
  auto enc = m.encode(x);
  auto [q0_mean, q0_sd] = m.q0_params_d(enc);
  std::vector<Pmf16> q_pmfs;
  q_pmfs.reserve(knots.size() * dims);
  for (std::size_t k = 0; k < knots.size(); ++k) {
    std::vector<double> mean(dims), sd(dims);
    if (k == 0) {
      mean = q0_mean;
      sd = q0_sd;
    } else {
      const double gap = knots[k] - knots[k - 1];
      const auto f = m.posterior_drift_d(enc, z[k - 1], knots[k - 1]);
      for (std::size_t d = 0; d < dims; ++d) {
        mean[d] = z[k - 1][d] + gap * f[d];
        sd[d] = std::sqrt(gap) * nu[d];
      }
    }
    for (std::size_t d = 0; d < dims; ++d)
      q_pmfs.push_back(gaussian_bin_pmf(q, mean[d], sd[d]));
  }
  for (std::size_t k = knots.size(); k-- > 0;)
    for (std::size_t d = dims; d-- > 0;)
      msg.push(bins[k][d], q_pmfs[k * dims + d]);
  return {std::move(msg), std::move(x)};
}

// --- relative entropy coding -------------------------------------------------

AstarResult astar_encode(const LogDensity& logq, const LogDensity& logp,
                         const InvCdf& p_icdf, double log_ratio_bound,
                         std::uint64_t seed, std::size_t max_steps) {
  if (!std::isfinite(log_ratio_bound))
    throw std::runtime_error("astar: unbounded density ratio q/p, refusing to code");
  AstarResult best;
  double best_score = -kInf;
  double g = -std::log(-std::log(counter_uniform(seed, 1, 1)));
  for (std::uint64_t i = 1; i <= max_steps; ++i) {
    const double xi = p_icdf(counter_uniform(seed, i, 0));
    const double score = g + logq(xi) - logp(xi);
    if (score > best_score) {
      best_score = score;
      best.index = i;
      best.sample = xi;
    }
    best.steps = static_cast<std::size_t>(i);
    // next truncated Gumbel TG(0, g)
    g = -std::log(std::exp(-g) - std::log(counter_uniform(seed, i + 1, 1)));
    if (g + log_ratio_bound <= best_score) return best;
  }
  throw std::runtime_error("astar: step budget exhausted");
}

double astar_decode(std::uint64_t index, const InvCdf& p_icdf, std::uint64_t seed) {
  if (index == 0) throw std::invalid_argument("astar_decode: index is 1-based");
  return p_icdf(counter_uniform(seed, index, 0));
}

std::size_t elias_gamma_bits(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("elias gamma: n >= 1");
  std::size_t width = 0;
  while (n >> width) ++width;
  return 2 * width - 1;
}

void BitWriter::put_bit(int b) {
  if (bits_ % 8 == 0) bytes_.push_back(0);
  if (b) bytes_.back() |= static_cast<std::uint8_t>(1u << (7 - bits_ % 8));
  ++bits_;
}

void BitWriter::put_gamma(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("elias gamma: n >= 1");
  std::size_t width = 0;
  while (n >> width) ++width;
  for (std::size_t i = 0; i + 1 < width; ++i) put_bit(0);
  for (std::size_t i = width; i-- > 0;) put_bit(static_cast<int>((n >> i) & 1));
}

std::vector<std::uint8_t> BitWriter::finish() const { return bytes_; }

int BitReader::get_bit() {
  if (pos_ / 8 >= bytes_.size()) throw std::runtime_error("bit reader: exhausted");
  const int b = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1;
  ++pos_;
  return b;
}

std::uint64_t BitReader::get_gamma() {
  std::size_t zeros = 0;
  while (get_bit() == 0) ++zeros;
  std::uint64_t n = 1;
  for (std::size_t i = 0; i < zeros; ++i) n = (n << 1) | static_cast<unsigned>(get_bit());
  return n;
}

double trunc_exp_logpdf(double t, double lambda, double t_max) {
  if (!(t > 0.0) || t > t_max) return -kInf;
  return std::log(lambda) - lambda * t - std::log(-std::expm1(-lambda * t_max));
}

double trunc_exp_icdf(double u, double lambda, double t_max) {
  return -std::log1p(u * std::expm1(-lambda * t_max)) / lambda;
}

double sl_vs_exp_log_ratio_bound(double mu, double s, double lambda, double t_max) {
  // q density behaves like x^{1/s - 1} near 0; s >= 1 makes the ratio against
  // the exponential's finite density unbounded
  if (s >= 1.0) return kInf;
  double sup = -kInf;
  const int n = 1 << 15;
  for (int i = 1; i <= n; ++i) {
    const double t = t_max * static_cast<double>(i) / n;
    const double r = tpp::sl_truncated_logpdf(t, mu, s, t_max) -
                     trunc_exp_logpdf(t, lambda, t_max);
    sup = std::max(sup, r);
  }
  return sup + 0.05;  // grid-resolution safety margin
}

// --- container ---------------------------------------------------------------

std::vector<std::uint8_t> CompressedContainer::serialize() const {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'C', 'T', 'S', 'Q'});
  put<std::uint8_t>(out, version);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(mode));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(times_mode));
  put<std::uint64_t>(out, model_hash);
  put<double>(out, lambda);
  put<double>(out, dt);
  put<std::uint32_t>(out, t_frames);
  put<std::uint32_t>(out, num_points);
  put<std::uint32_t>(out, precision);
  put<std::uint64_t>(out, seed);
  put<std::uint32_t>(out, initial_words);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(raw_times.size()));
  for (double t : raw_times) put<double>(out, t);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(times_block.size()));
  out.insert(out.end(), times_block.begin(), times_block.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

CompressedContainer CompressedContainer::deserialize(
    std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "CTSQ", 4) != 0)
    throw std::runtime_error("container: bad magic");
  bytes = bytes.subspan(4);
  CompressedContainer c;
  c.version = take<std::uint8_t>(bytes);
  if (c.version != 1) throw std::runtime_error("container: unsupported version");
  c.mode = static_cast<Mode>(take<std::uint8_t>(bytes));
  c.times_mode = static_cast<TimesMode>(take<std::uint8_t>(bytes));
  c.model_hash = take<std::uint64_t>(bytes);
  c.lambda = take<double>(bytes);
  c.dt = take<double>(bytes);
  c.t_frames = take<std::uint32_t>(bytes);
  c.num_points = take<std::uint32_t>(bytes);
  c.precision = take<std::uint32_t>(bytes);
  c.seed = take<std::uint64_t>(bytes);
  c.initial_words = take<std::uint32_t>(bytes);
  c.raw_times.resize(take<std::uint32_t>(bytes));
  for (auto& t : c.raw_times) t = take<double>(bytes);
  const auto tb = take<std::uint32_t>(bytes);
  if (bytes.size() < tb) throw std::runtime_error("container: truncated");
  c.times_block.assign(bytes.begin(), bytes.begin() + tb);
  bytes = bytes.subspan(tb);
  const auto pb = take<std::uint32_t>(bytes);
  if (bytes.size() < pb) throw std::runtime_error("container: truncated");
  c.payload.assign(bytes.begin(), bytes.begin() + pb);
  return c;
}

// --- compress / decompress ---------------------------------------------------

namespace {

std::uint64_t astar_gap_seed(std::uint64_t base, std::size_t gap_index) {
  return mix64(base ^ (0xA57A12ULL + 0x9E37ULL * gap_index));
}

struct SampledTimes {
  std::vector<double> times;
  double log_q = 0.0;
  std::vector<std::uint64_t> indices;  // A* mode
  bool refused = false;
};

// A*-coded time sampling: each gap is an exact q-sample transmitted as a
// search index; the decoder replays it from p and the shared seed alone.
SampledTimes sample_times_astar(const model::Model& m,
                                const model::Model::Encoded& enc,
                                std::uint64_t seed) {
  const auto& cfg = m.config();
  const double t_end = cfg.t_end();
  const double t_max = cfg.t_max;
  const double lambda = cfg.lambda();
  SampledTimes out;
  double cursor = 0.0;
  const std::size_t budget = 1000 + static_cast<std::size_t>(100.0 * t_end / t_max);
  for (std::size_t gi = 0;; ++gi) {
    const auto [mu, s] = m.gap_params_d(enc.h_spline.eval(cursor), cursor);
    const double bound = sl_vs_exp_log_ratio_bound(mu, s, lambda, t_max);
    if (!std::isfinite(bound)) {
      out.refused = true;
      return out;
    }
    auto logq = [&, mu = mu, s = s](double t) {
      return tpp::sl_truncated_logpdf(t, mu, s, t_max);
    };
    auto logp = [&](double t) { return trunc_exp_logpdf(t, lambda, t_max); };
    auto icdf = [&](double u) { return trunc_exp_icdf(u, lambda, t_max); };
    const auto res =
        astar_encode(logq, logp, icdf, bound, astar_gap_seed(seed, gi));
    out.indices.push_back(res.index);
    const double rem = t_end - cursor;
    double gap = res.sample;
    if (gap >= rem) {
      if (rem < t_max) {
        out.log_q += tpp::sl_truncated_log_survival(rem, mu, s, t_max);
        break;
      }
      gap = std::min(std::nextafter(rem, 0.0), std::nextafter(t_max, 0.0));
    }
    out.log_q += tpp::sl_truncated_logpdf(gap, mu, s, t_max);
    cursor += gap;
    out.times.push_back(cursor);
    if (out.times.size() > budget)
      throw std::runtime_error("sample_times_astar: point budget exceeded");
  }
  return out;
}

std::vector<double> decode_times_astar(std::span<const std::uint8_t> block,
                                       std::size_t num_points, double lambda,
                                       double t_end, double t_max,
                                       std::uint64_t seed) {
  BitReader br(block);
  std::vector<double> times;
  double cursor = 0.0;
  for (std::size_t gi = 0;; ++gi) {
    const std::uint64_t index = br.get_gamma();
    auto icdf = [&](double u) { return trunc_exp_icdf(u, lambda, t_max); };
    const double sample = astar_decode(index, icdf, astar_gap_seed(seed, gi));
    const double rem = t_end - cursor;
    double gap = sample;
    if (gap >= rem) {
      if (rem < t_max) break;
      gap = std::min(std::nextafter(rem, 0.0), std::nextafter(t_max, 0.0));
    }
    cursor += gap;
    times.push_back(cursor);
    if (times.size() > num_points)
      throw std::runtime_error("container: inconsistent A* time stream");
  }
  if (times.size() != num_points)
    throw std::runtime_error("container: A* time count mismatch");
  return times;
}

}  // namespace

CompressedContainer compress(const model::Model& m, const model::Sequence& x,
                             Mode mode, int precision, std::uint64_t seed,
                             TimesMode times_mode, CompressStats* stats) {
  const auto& cfg = m.config();
  const Quantizer q = Quantizer::make(precision);
  CompressedContainer c;
  c.mode = mode;
  c.model_hash = m.param_hash();
  c.lambda = cfg.lambda();
  c.dt = cfg.dt;
  c.t_frames = static_cast<std::uint32_t>(cfg.t_frames);
  c.precision = static_cast<std::uint32_t>(precision);
  c.seed = seed;
  CompressStats local;

  if (mode == Mode::Lossless) {
    std::size_t words = 64;
    AnsMessage out = AnsMessage::fresh();
    BitsBackStats bb;
    for (;; words *= 2) {
      if (words > (1u << 24))
        throw std::runtime_error("compress: bits-back initial message too large");
      try {
        AnsMessage init = AnsMessage::random_init(mix64(seed ^ 0x1B17ULL), words);
        out = bitsback_encode(m, x, init, q, &bb);
        break;
      } catch (const AnsUnderflow&) {
        continue;
      }
    }
    c.times_mode = TimesMode::Raw;
    c.num_points = static_cast<std::uint32_t>(cfg.t_frames);
    c.initial_words = static_cast<std::uint32_t>(words);
    local.bits_latents =
        static_cast<double>(out.bit_length()) - static_cast<double>(32 + 16 * words);
    local.latent_info_bits = bb.elbo_bits;
    c.payload = out.serialize();
  } else {
    auto enc = m.encode(x);
    SampledTimes st;
    if (times_mode == TimesMode::Astar) {
      st = sample_times_astar(m, enc, mix64(seed ^ 0x7E11ULL));
      if (st.refused) {
        local.astar_fell_back = true;
        times_mode = TimesMode::Raw;
      }
    }
    if (times_mode == TimesMode::Raw) {
      std::uint64_t ctr = 0;
      const std::uint64_t tseed = mix64(seed ^ 0x7E11ULL);
      auto unif = [&] { return counter_uniform(tseed, ctr++, 0); };
      auto tset = tpp::sample_posterior(enc.h_spline, m.gap_nets_d(enc),
                                        cfg.t_end(), cfg.t_max, unif);
      st.times = std::move(tset.times);
      st.log_q = tset.log_q;
      c.raw_times = st.times;
    } else {
      BitWriter bw;
      for (std::uint64_t idx : st.indices) bw.put_gamma(idx);
      c.times_block = bw.finish();
    }
    c.times_mode = times_mode;
    c.num_points = static_cast<std::uint32_t>(st.times.size());

    const auto knots = m.knot_times(st.times);
    auto grid =
        sde::SolverGrid::make(0.0, cfg.t_end(), cfg.t_frames * cfg.substeps_per_frame,
                              enc.frame_times, knots);
    auto post = m.posterior_path(enc, grid, mix64(seed ^ 0x5EEDULL));
    const auto nu = m.nu_values();
    const auto mask = m.global_mask();
    BinSkeleton bins(knots.size(), std::vector<int>(nu.size()));
    for (std::size_t k = 0; k < knots.size(); ++k) {
      const auto& z = post.path.at_time(knots[k]).data();
      for (std::size_t d = 0; d < nu.size(); ++d) bins[k][d] = q.quantize(z[d]);
    }
    AnsMessage msg = AnsMessage::fresh();
    push_latents(msg, bins, knots, nu, mask, q, &local.latent_info_bits);
    c.payload = msg.serialize();
    local.bits_latents = static_cast<double>(msg.bit_length());
    local.bits_times_estimate = rec_rate_bits(
        st.log_q, tpp::prior_logp(cfg.lambda(), cfg.t_end(), st.times.size()));
    local.m_points = st.times.size();
    local.pruned_dims =
        static_cast<int>(std::count(mask.begin(), mask.end(), true));
  }
  local.bits_total = static_cast<double>(c.serialize().size()) * 8.0;
  if (stats) *stats = local;
  return c;
}

model::Sequence decompress(const model::Model& m, const CompressedContainer& c,
                           std::span<const double> query_times) {
  if (c.model_hash != m.param_hash())
    throw std::runtime_error("decompress: model hash mismatch");
  const auto& cfg = m.config();
  const Quantizer q = Quantizer::make(static_cast<int>(c.precision));
  if (c.mode == Mode::Lossless) {
    if (!query_times.empty())
      throw std::invalid_argument("decompress: lossless mode decodes frames only");
    auto [rest, x] = bitsback_decode(m, AnsMessage::deserialize(c.payload), q);
    return x;
  }
  std::vector<double> times;
  if (c.times_mode == TimesMode::Raw) {
    times = c.raw_times;
  } else {
    times = decode_times_astar(c.times_block, c.num_points, c.lambda, cfg.t_end(),
                               cfg.t_max, mix64(c.seed ^ 0x7E11ULL));
  }
  const auto knots = m.knot_times(times);
  const auto nu = m.nu_values();
  const auto mask = m.global_mask();
  AnsMessage msg = AnsMessage::deserialize(c.payload);
  const auto bins = pop_latents(msg, knots, nu, mask, q);
  std::vector<std::vector<double>> vals(knots.size(),
                                        std::vector<double>(nu.size()));
  for (std::size_t k = 0; k < knots.size(); ++k)
    for (std::size_t d = 0; d < nu.size(); ++d)
      vals[k][d] = q.dequantize(bins[k][d]);
  std::vector<double> query(query_times.begin(), query_times.end());
  if (query.empty()) {
    query.resize(static_cast<std::size_t>(cfg.t_frames));
    for (std::size_t i = 0; i < query.size(); ++i)
      query[i] = static_cast<double>(i + 1) * cfg.dt;
  }
  return m.reconstruct_d(knots, vals, query, mask);
}

}  // namespace ctsq::codec
