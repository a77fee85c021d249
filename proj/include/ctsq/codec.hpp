#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctsq/mathutil.hpp"
#include "ctsq/model.hpp"

namespace ctsq::codec {

// --- maximum-entropy quantizer ---------------------------------------------

// P bins of equal N(0,1) mass; reconstruction points are the bin conditional
// means under the standard normal.
struct Quantizer {
  int precision = 0;            // P, a power of two
  std::vector<double> edges;    // P-1 interior edges, strictly increasing
  std::vector<double> recon;    // P conditional means

  static Quantizer make(int precision);
  int quantize(double z) const;  // count of edges below z; tails clamp
  double dequantize(int index) const;
};

// --- rANS -------------------------------------------------------------------

inline constexpr std::uint32_t kPmfBits = 16;
inline constexpr std::uint32_t kPmfTotal = 1u << kPmfBits;

struct Pmf16 {
  std::vector<std::uint32_t> freq;  // sums to 2^16, all >= 1
  std::vector<std::uint32_t> cum;   // exclusive prefix sums, size n+1
};

// Largest-remainder scaling to 2^16 with minimum frequency 1. Deterministic:
// encoder and decoder must build identical tables from identical probs.
Pmf16 make_pmf16(std::span<const double> probs);
Pmf16 uniform_pmf16(int n);
// Gaussian mass per quantizer bin (error-function integration), then scaled.
Pmf16 gaussian_bin_pmf(const Quantizer& q, double mean, double sd);

struct AnsUnderflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// 32-bit head, 16-bit word stack, head kept in [2^16, 2^32) between ops.
class AnsMessage {
 public:
  static AnsMessage fresh();
  // head + `words` tail words filled with counter-based pseudo-random bits;
  // the standard bits-back initial-message seeding
  static AnsMessage random_init(std::uint64_t seed, std::size_t words);

  void push(int symbol, const Pmf16& pmf);
  int pop(const Pmf16& pmf);  // throws AnsUnderflow if the tail runs dry

  std::size_t bit_length() const { return 32 + 16 * tail_.size(); }
  std::size_t tail_words() const { return tail_.size(); }

  std::vector<std::uint8_t> serialize() const;
  static AnsMessage deserialize(std::span<const std::uint8_t> bytes);

  bool operator==(const AnsMessage&) const = default;

 private:
  std::uint32_t head_ = 1u << 16;
  std::vector<std::uint16_t> tail_;
};

// --- latent skeleton coding -------------------------------------------------

// Bin indices, K knots x D dims. Pruned dimensions carry only the z0 bin.
using BinSkeleton = std::vector<std::vector<int>>;

// z0 coded with the stationary (uniform) bin PMF; each later knot with the OU
// transition PMF conditioned on the previous dequantized value. Pushes run in
// reverse so the decoder pops in time order. `info_bits`, when given, receives
// the summed -log2 PMF(index) information content.
void push_latents(AnsMessage& m, const BinSkeleton& bins,
                  std::span<const double> knots, std::span<const double> nu,
                  const std::vector<bool>& pruned, const Quantizer& q,
                  double* info_bits = nullptr);
BinSkeleton pop_latents(AnsMessage& m, std::span<const double> knots,
                        std::span<const double> nu, const std::vector<bool>& pruned,
                        const Quantizer& q);

// --- bits-back lossless coding ----------------------------------------------

struct BitsBackStats {
  double elbo_bits = 0.0;  // discretized -log2 p(x,z) + log2 q(z|x)
};

// Pops a latent skeleton with q(z|x), pushes x with p(x|z) and z with the OU
// prior. Throws AnsUnderflow when the message cannot supply the q-pops
// (insufficient initial bits).
AnsMessage bitsback_encode(const model::Model& m, const model::Sequence& x,
                           AnsMessage msg, const Quantizer& q,
                           BitsBackStats* stats = nullptr);
std::pair<AnsMessage, model::Sequence> bitsback_decode(const model::Model& m,
                                                       AnsMessage msg,
                                                       const Quantizer& q);

// --- relative entropy coding ------------------------------------------------

inline double rec_rate_bits(double logq, double logp) {
  return (logq - logp) / kLn2;
}

using LogDensity = std::function<double(double)>;
using InvCdf = std::function<double(double)>;

struct AstarResult {
  std::uint64_t index = 0;  // 1-based
  double sample = 0.0;
  std::size_t steps = 0;
};

// Global-bound A* sampling over common randomness X_i ~ P keyed by
// (seed, i). log_ratio_bound must upper-bound sup_x log q(x) - log p(x);
// a non-finite bound throws (the documented refusal path).
AstarResult astar_encode(const LogDensity& logq, const LogDensity& logp,
                         const InvCdf& p_icdf, double log_ratio_bound,
                         std::uint64_t seed, std::size_t max_steps = 1u << 20);
double astar_decode(std::uint64_t index, const InvCdf& p_icdf, std::uint64_t seed);

std::size_t elias_gamma_bits(std::uint64_t n);

class BitWriter {
 public:
  void put_bit(int b);
  void put_gamma(std::uint64_t n);  // Elias gamma, n >= 1
  std::vector<std::uint8_t> finish() const;
  std::size_t bits_written() const { return bits_; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bits_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  int get_bit();
  std::uint64_t get_gamma();

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

// Truncated Exp(lambda) on (0, t_max]: the Poisson prior's gap law.
double trunc_exp_logpdf(double t, double lambda, double t_max);
double trunc_exp_icdf(double u, double lambda, double t_max);
// sup_t log q(t)/p(t) for q = truncated SoftplusLogistic(mu, s) against the
// truncated exponential; +inf when the ratio is unbounded (s >= 1 blows up
// at t -> 0).
double sl_vs_exp_log_ratio_bound(double mu, double s, double lambda, double t_max);

// --- container / pipeline ---------------------------------------------------

enum class Mode : std::uint8_t { Lossy = 0, Lossless = 1 };
enum class TimesMode : std::uint8_t { Raw = 0, Astar = 1 };

struct CompressedContainer {
  std::uint8_t version = 1;
  Mode mode = Mode::Lossy;
  TimesMode times_mode = TimesMode::Raw;
  std::uint64_t model_hash = 0;
  double lambda = 0.0;
  double dt = 0.0;
  std::uint32_t t_frames = 0;
  std::uint32_t num_points = 0;  // M
  std::uint32_t precision = 0;
  std::uint64_t seed = 0;
  std::uint32_t initial_words = 0;  // bits-back seeding (lossless)
  std::vector<double> raw_times;          // TimesMode::Raw
  std::vector<std::uint8_t> times_block;  // TimesMode::Astar (gamma indices)
  std::vector<std::uint8_t> payload;      // latents / bits-back message

  std::vector<std::uint8_t> serialize() const;
  static CompressedContainer deserialize(std::span<const std::uint8_t> bytes);
};

struct CompressStats {
  double bits_total = 0.0;
  double bits_latents = 0.0;          // payload bits (lossy) / net bits (lossless)
  double bits_times_estimate = 0.0;   // rec_rate_bits of the sampled times
  double latent_info_bits = 0.0;      // summed -log2 PMF(index)
  std::size_t m_points = 0;
  int pruned_dims = 0;
  bool astar_fell_back = false;       // unbounded ratio forced raw times
};

CompressedContainer compress(const model::Model& m, const model::Sequence& x,
                             Mode mode, int precision, std::uint64_t seed,
                             TimesMode times_mode = TimesMode::Raw,
                             CompressStats* stats = nullptr);

// Lossy: reconstruction at query_times (defaults to the frame times).
// Lossless: exact frames; query_times must be empty.
model::Sequence decompress(const model::Model& m, const CompressedContainer& c,
                           std::span<const double> query_times = {});

}  // namespace ctsq::codec
