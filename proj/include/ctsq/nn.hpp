#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ctsq::nn {

// Reverse-mode autodiff over dense double tensors. Graphs are built eagerly;
// backward() runs a reverse-topological sweep. Vectors and matrices are all
// the model needs, so shapes are limited to rank <= 2.
struct Node {
  std::vector<double> data;
  std::vector<double> grad;
  std::vector<int> shape;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  std::size_t size() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor constant(std::vector<double> data, std::vector<int> shape);
  static Tensor scalar(double v);
  static Tensor zeros(std::vector<int> shape);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->size(); }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& mutable_data() { return node_->data; }
  const std::vector<double>& grad() const;
  double value() const;  // scalar only
  bool requires_grad() const { return node_->requires_grad; }

  Tensor detach() const;

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor softplus_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor square(const Tensor& a);
// broadcast a scalar tensor over a vector
Tensor scale_by(const Tensor& a, const Tensor& s);
Tensor div_by(const Tensor& a, const Tensor& s);

// shape / reduction
Tensor matvec(const Tensor& w, const Tensor& x);  // [m,n] * [n] -> [m]
Tensor concat(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& a, std::size_t start, std::size_t len);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
// sum_k coeffs[k] * xs[k], all same shape; weights are constants
Tensor linear_comb(std::span<const Tensor> xs, std::span<const double> coeffs);

// sum over elements of log N(x; mean, var) with var = exp(log_var)
Tensor gaussian_logpdf(const Tensor& x, const Tensor& mean, const Tensor& log_var);

// Reverse sweep from a finite scalar. Gradients accumulate additively into
// every reachable node that requires grad. Throws if any produced gradient
// is non-finite.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------

class ParamStore {
 public:
  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); fan_in = 0 means zero init
  Tensor create(const std::string& name, std::vector<int> shape, int fan_in,
                std::mt19937_64& rng);
  Tensor create_const_init(const std::string& name, std::vector<int> shape,
                           double fill);

  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  const std::map<std::string, Tensor>& all() const { return params_; }

  void zero_grad();
  // Standard bias-corrected Adam. Throws on NaN gradient, naming the tensor.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

  std::vector<std::uint8_t> serialize() const;
  void deserialize(std::span<const std::uint8_t> bytes);

  std::size_t num_scalars() const;

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, std::vector<double>> adam_m_, adam_v_;
  std::int64_t adam_t_ = 0;
};

struct Linear {
  Tensor w, b;
  Tensor operator()(const Tensor& x) const { return add(matvec(w, x), b); }
};

Linear make_linear(ParamStore& ps, const std::string& prefix, int in, int out,
                   std::mt19937_64& rng);

// tanh MLP: hidden layers tanh, final layer affine
struct Mlp {
  std::vector<Linear> layers;
  Tensor operator()(const Tensor& x) const;
};

Mlp make_mlp(ParamStore& ps, const std::string& prefix, int in,
             const std::vector<int>& hidden, int out, std::mt19937_64& rng);

struct GruCellParams {
  Tensor wr, ur, br, wu, uu, bu, wc, uc, bc;
};

struct GruParams {
  GruCellParams fwd, bwd;
  int hidden = 0;
};

GruParams make_gru(ParamStore& ps, const std::string& prefix, int in, int hidden,
                   std::mt19937_64& rng);

Tensor gru_cell(const GruCellParams& p, const Tensor& x, const Tensor& h);

// Bidirectional pass over a sequence; output t concatenates forward state
// after reading x_0..x_t with backward state after reading x_{T-1}..x_t.
std::vector<Tensor> gru_bidirectional(const GruParams& p,
                                      const std::vector<Tensor>& inputs);

// REINFORCE surrogate with leave-one-out batch-mean baseline:
//   sum_b (L_b - mean_{b' != b} L_{b'}) * logq_b / B
// losses are plain detached numbers; gradient flows only through logqs.
// With a single element the baseline is disabled (raw estimator).
Tensor reinforce_surrogate(std::span<const double> losses,
                           std::span<const Tensor> logqs);

}  // namespace ctsq::nn
