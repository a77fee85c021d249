#include "ctsq/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

#include "ctsq/mathutil.hpp"

namespace ctsq::nn {

namespace {

std::shared_ptr<Node> make_node(std::vector<double> data, std::vector<int> shape) {
  auto n = std::make_shared<Node>();
  n->data = std::move(data);
  n->shape = std::move(shape);
  std::size_t prod = 1;
  for (int s : n->shape) prod *= static_cast<std::size_t>(s);
  if (prod != n->data.size()) throw std::invalid_argument("Tensor: shape/data mismatch");
  return n;
}

std::shared_ptr<Node> make_op(std::vector<double> data, std::vector<int> shape,
                              std::vector<std::shared_ptr<Node>> parents,
                              std::function<void(Node&)> bw) {
  auto n = make_node(std::move(data), std::move(shape));
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Tensor Tensor::constant(std::vector<double> data, std::vector<int> shape) {
  return Tensor(make_node(std::move(data), std::move(shape)));
}

Tensor Tensor::scalar(double v) { return constant({v}, {1}); }

Tensor Tensor::zeros(std::vector<int> shape) {
  std::size_t prod = 1;
  for (int s : shape) prod *= static_cast<std::size_t>(s);
  return constant(std::vector<double>(prod, 0.0), std::move(shape));
}

const std::vector<double>& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::value() const {
  if (node_->data.size() != 1) throw std::logic_error("Tensor::value: not a scalar");
  return node_->data[0];
}

Tensor Tensor::detach() const {
  return Tensor(make_node(node_->data, node_->shape));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor(make_op(std::move(out), a.shape(), {a.node(), b.node()}, [](Node& s) {
    for (int k = 0; k < 2; ++k) {
      auto& p = *s.parents[k];
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (std::size_t i = 0; i < s.size(); ++i) p.grad[i] += s.grad[i];
    }
  }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor(make_op(std::move(out), a.shape(), {a.node(), b.node()}, [](Node& s) {
    auto& pa = *s.parents[0];
    auto& pb = *s.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < s.size(); ++i) pa.grad[i] += s.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < s.size(); ++i) pb.grad[i] -= s.grad[i];
    }
  }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor(make_op(std::move(out), a.shape(), {a.node(), b.node()}, [](Node& s) {
    auto& pa = *s.parents[0];
    auto& pb = *s.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < s.size(); ++i) pa.grad[i] += s.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < s.size(); ++i) pb.grad[i] += s.grad[i] * pa.data[i];
    }
  }));
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  return Tensor(make_op(std::move(out), a.shape(), {a.node(), b.node()}, [](Node& s) {
    auto& pa = *s.parents[0];
    auto& pb = *s.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < s.size(); ++i) pa.grad[i] += s.grad[i] / pb.data[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < s.size(); ++i)
        pb.grad[i] -= s.grad[i] * pa.data[i] / (pb.data[i] * pb.data[i]);
    }
  }));
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * a.data()[i];
  return Tensor(make_op(std::move(out), a.shape(), {a.node()}, [c](Node& s) {
    auto& p = *s.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < s.size(); ++i) p.grad[i] += c * s.grad[i];
  }));
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
  return Tensor(make_op(std::move(out), a.shape(), {a.node()}, [](Node& s) {
    auto& p = *s.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < s.size(); ++i) p.grad[i] += s.grad[i];
  }));
}

namespace {
Tensor unary(const Tensor& a, double (*f)(double),
             const std::function<double(double x, double y)>& dfdx) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a.data()[i]);
  return Tensor(make_op(std::move(out), a.shape(), {a.node()}, [dfdx](Node& s) {
    auto& p = *s.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < s.size(); ++i)
      p.grad[i] += s.grad[i] * dfdx(p.data[i], s.data[i]);
  }));
}
}  // namespace

Tensor sigmoid(const Tensor& a) {
  return unary(a, +[](double x) { return ctsq::sigmoid(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_t(const Tensor& a) {
  return unary(a, +[](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus_t(const Tensor& a) {
  return unary(a, +[](double x) { return ctsq::softplus(x); },
               [](double x, double) { return ctsq::sigmoid(x); });
}

Tensor exp_t(const Tensor& a) {
  return unary(a, +[](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
  return unary(a, +[](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(a, +[](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw std::invalid_argument("scale_by: s must be scalar");
  const double sv = s.data()[0];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * sv;
  return Tensor(make_op(std::move(out), a.shape(), {a.node(), s.node()}, [](Node& n) {
    auto& pa = *n.parents[0];
    auto& ps = *n.parents[1];
    const double sv = ps.data[0];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += n.grad[i] * sv;
    }
    if (ps.requires_grad) {
      ps.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) ps.grad[0] += n.grad[i] * pa.data[i];
    }
  }));
}

Tensor div_by(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw std::invalid_argument("div_by: s must be scalar");
  const double sv = s.data()[0];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / sv;
  return Tensor(make_op(std::move(out), a.shape(), {a.node(), s.node()}, [](Node& n) {
    auto& pa = *n.parents[0];
    auto& ps = *n.parents[1];
    const double sv = ps.data[0];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pa.grad[i] += n.grad[i] / sv;
    }
    if (ps.requires_grad) {
      ps.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i)
        ps.grad[0] -= n.grad[i] * pa.data[i] / (sv * sv);
    }
  }));
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  if (w.shape().size() != 2 || x.shape().size() != 1 || w.shape()[1] != x.shape()[0])
    throw std::invalid_argument("matvec: shape mismatch");
  const int m = w.shape()[0], n = w.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(m), 0.0);
  const double* wd = w.data().data();
  const double* xd = x.data().data();
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = wd + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += row[j] * xd[j];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return Tensor(make_op(std::move(out), {m}, {w.node(), x.node()}, [m, n](Node& s) {
    auto& pw = *s.parents[0];
    auto& px = *s.parents[1];
    if (pw.requires_grad) {
      pw.ensure_grad();
      for (int i = 0; i < m; ++i) {
        const double g = s.grad[static_cast<std::size_t>(i)];
        if (g == 0.0) continue;
        double* row = pw.grad.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) row[j] += g * px.data[static_cast<std::size_t>(j)];
      }
    }
    if (px.requires_grad) {
      px.ensure_grad();
      for (int i = 0; i < m; ++i) {
        const double g = s.grad[static_cast<std::size_t>(i)];
        if (g == 0.0) continue;
        const double* row = pw.data.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) px.grad[static_cast<std::size_t>(j)] += g * row[j];
      }
    }
  }));
}

Tensor concat(const std::vector<Tensor>& parts) {
  std::vector<double> out;
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.shape().size() != 1) throw std::invalid_argument("concat: rank-1 only");
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.node());
  }
  const int total = static_cast<int>(out.size());
  return Tensor(make_op(std::move(out), {total}, std::move(parents),
                        [offsets](Node& s) {
                          for (std::size_t k = 0; k < s.parents.size(); ++k) {
                            auto& p = *s.parents[k];
                            if (!p.requires_grad) continue;
                            p.ensure_grad();
                            for (std::size_t i = 0; i < p.size(); ++i)
                              p.grad[i] += s.grad[offsets[k] + i];
                          }
                        }));
}

Tensor slice(const Tensor& a, std::size_t start, std::size_t len) {
  if (start + len > a.size()) throw std::invalid_argument("slice: out of range");
  std::vector<double> out(a.data().begin() + start, a.data().begin() + start + len);
  return Tensor(make_op(std::move(out), {static_cast<int>(len)}, {a.node()},
                        [start](Node& s) {
                          auto& p = *s.parents[0];
                          p.ensure_grad();
                          for (std::size_t i = 0; i < s.size(); ++i)
                            p.grad[start + i] += s.grad[i];
                        }));
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return Tensor(make_op({acc}, {1}, {a.node()}, [](Node& s) {
    auto& p = *s.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < p.size(); ++i) p.grad[i] += s.grad[0];
  }));
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

Tensor linear_comb(std::span<const Tensor> xs, std::span<const double> coeffs) {
  if (xs.empty() || xs.size() != coeffs.size())
    throw std::invalid_argument("linear_comb: size mismatch");
  std::vector<double> out(xs[0].size(), 0.0);
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<double> cs(coeffs.begin(), coeffs.end());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (xs[k].shape() != xs[0].shape())
      throw std::invalid_argument("linear_comb: shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += cs[k] * xs[k].data()[i];
    parents.push_back(xs[k].node());
  }
  return Tensor(make_op(std::move(out), xs[0].shape(), std::move(parents),
                        [cs](Node& s) {
                          for (std::size_t k = 0; k < s.parents.size(); ++k) {
                            auto& p = *s.parents[k];
                            if (!p.requires_grad || cs[k] == 0.0) continue;
                            p.ensure_grad();
                            for (std::size_t i = 0; i < s.size(); ++i)
                              p.grad[i] += cs[k] * s.grad[i];
                          }
                        }));
}

Tensor gaussian_logpdf(const Tensor& x, const Tensor& mean_, const Tensor& log_var) {
  // -0.5 * sum( log(2pi) + log_var + (x-mean)^2 / exp(log_var) )
  Tensor d = sub(x, mean_);
  Tensor quad = div(square(d), exp_t(log_var));
  Tensor terms = add(add_scalar(log_var, kLog2Pi), quad);
  return scale(sum(terms), -0.5);
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!std::isfinite(loss.value()))
    throw std::runtime_error("backward: non-finite loss");
  Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // iterative post-order DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------

Tensor ParamStore::create(const std::string& name, std::vector<int> shape, int fan_in,
                          std::mt19937_64& rng) {
  if (params_.count(name)) throw std::invalid_argument("ParamStore: duplicate " + name);
  std::size_t prod = 1;
  for (int s : shape) prod *= static_cast<std::size_t>(s);
  std::vector<double> data(prod, 0.0);
  if (fan_in > 0) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : data) {
      const double u = (static_cast<double>(rng() >> 11) + 0.5) / 9007199254740992.0;
      v = bound * (2.0 * u - 1.0);
    }
  }
  auto node = make_node(std::move(data), std::move(shape));
  node->requires_grad = true;
  Tensor t(node);
  params_.emplace(name, t);
  return t;
}

Tensor ParamStore::create_const_init(const std::string& name, std::vector<int> shape,
                                     double fill) {
  if (params_.count(name)) throw std::invalid_argument("ParamStore: duplicate " + name);
  std::size_t prod = 1;
  for (int s : shape) prod *= static_cast<std::size_t>(s);
  auto node = make_node(std::vector<double>(prod, fill), std::move(shape));
  node->requires_grad = true;
  Tensor t(node);
  params_.emplace(name, t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("ParamStore: missing " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : params_) {
    auto& g = t.node()->grad;
    g.assign(t.size(), 0.0);
  }
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  ++adam_t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t_));
  for (auto& [name, t] : params_) {
    auto node = t.node();
    node->ensure_grad();
    auto& m = adam_m_[name];
    auto& v = adam_v_[name];
    if (m.size() != t.size()) m.assign(t.size(), 0.0);
    if (v.size() != t.size()) v.assign(t.size(), 0.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = node->grad[i];
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: NaN gradient in " + name);
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      node->data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

namespace {
template <class T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}
template <class T>
T take(std::span<const std::uint8_t>& in) {
  if (in.size() < sizeof(T)) throw std::runtime_error("checkpoint: truncated");
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in = in.subspan(sizeof(T));
  return v;
}
}  // namespace

std::vector<std::uint8_t> ParamStore::serialize() const {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'C', 'K', 'P', 'T'});
  put<std::uint32_t>(out, 1);  // version
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& [name, t] : params_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
    for (int s : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(s));
    for (double v : t.data()) put<double>(out, v);
  }
  return out;
}

void ParamStore::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "CKPT", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  bytes = bytes.subspan(4);
  const auto version = take<std::uint32_t>(bytes);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  const auto count = take<std::uint32_t>(bytes);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = take<std::uint32_t>(bytes);
    if (bytes.size() < name_len) throw std::runtime_error("checkpoint: truncated");
    std::string name(reinterpret_cast<const char*>(bytes.data()), name_len);
    bytes = bytes.subspan(name_len);
    const auto ndim = take<std::uint32_t>(bytes);
    std::vector<int> shape(ndim);
    std::size_t prod = 1;
    for (auto& s : shape) {
      s = static_cast<int>(take<std::uint32_t>(bytes));
      prod *= static_cast<std::size_t>(s);
    }
    std::vector<double> data(prod);
    for (auto& v : data) v = take<double>(bytes);
    auto it = params_.find(name);
    if (it != params_.end()) {
      if (it->second.shape() != shape)
        throw std::runtime_error("checkpoint: shape mismatch for " + name);
      it->second.node()->data = std::move(data);
    } else {
      auto node = make_node(std::move(data), std::move(shape));
      node->requires_grad = true;
      params_.emplace(name, Tensor(node));
    }
  }
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

Linear make_linear(ParamStore& ps, const std::string& prefix, int in, int out,
                   std::mt19937_64& rng) {
  Linear l;
  l.w = ps.create(prefix + ".w", {out, in}, in, rng);
  l.b = ps.create(prefix + ".b", {out}, in, rng);
  return l;
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = tanh_t(h);
  }
  return h;
}

Mlp make_mlp(ParamStore& ps, const std::string& prefix, int in,
             const std::vector<int>& hidden, int out, std::mt19937_64& rng) {
  Mlp mlp;
  int cur = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    mlp.layers.push_back(
        make_linear(ps, prefix + ".l" + std::to_string(i), cur, hidden[i], rng));
    cur = hidden[i];
  }
  mlp.layers.push_back(
      make_linear(ps, prefix + ".l" + std::to_string(hidden.size()), cur, out, rng));
  return mlp;
}

GruParams make_gru(ParamStore& ps, const std::string& prefix, int in, int hidden,
                   std::mt19937_64& rng) {
  GruParams g;
  g.hidden = hidden;
  auto cell = [&](const std::string& dir) {
    GruCellParams c;
    c.wr = ps.create(prefix + "." + dir + ".wr", {hidden, in}, in, rng);
    c.ur = ps.create(prefix + "." + dir + ".ur", {hidden, hidden}, hidden, rng);
    c.br = ps.create_const_init(prefix + "." + dir + ".br", {hidden}, 0.0);
    c.wu = ps.create(prefix + "." + dir + ".wu", {hidden, in}, in, rng);
    c.uu = ps.create(prefix + "." + dir + ".uu", {hidden, hidden}, hidden, rng);
    c.bu = ps.create_const_init(prefix + "." + dir + ".bu", {hidden}, 0.0);
    c.wc = ps.create(prefix + "." + dir + ".wc", {hidden, in}, in, rng);
    c.uc = ps.create(prefix + "." + dir + ".uc", {hidden, hidden}, hidden, rng);
    c.bc = ps.create_const_init(prefix + "." + dir + ".bc", {hidden}, 0.0);
    return c;
  };
  g.fwd = cell("fwd");
  g.bwd = cell("bwd");
  return g;
}

Tensor gru_cell(const GruCellParams& p, const Tensor& x, const Tensor& h) {
  Tensor r = sigmoid(add(add(matvec(p.wr, x), matvec(p.ur, h)), p.br));
  Tensor u = sigmoid(add(add(matvec(p.wu, x), matvec(p.uu, h)), p.bu));
  Tensor c = tanh_t(add(add(matvec(p.wc, x), matvec(p.uc, mul(r, h))), p.bc));
  // h' = (1-u)*h + u*c
  return add(sub(h, mul(u, h)), mul(u, c));
}

std::vector<Tensor> gru_bidirectional(const GruParams& p,
                                      const std::vector<Tensor>& inputs) {
  const std::size_t t = inputs.size();
  if (t == 0) throw std::invalid_argument("gru_bidirectional: empty sequence");
  std::vector<Tensor> fwd(t), bwd(t);
  Tensor h = Tensor::zeros({p.hidden});
  for (std::size_t i = 0; i < t; ++i) {
    h = gru_cell(p.fwd, inputs[i], h);
    fwd[i] = h;
  }
  h = Tensor::zeros({p.hidden});
  for (std::size_t i = t; i-- > 0;) {
    h = gru_cell(p.bwd, inputs[i], h);
    bwd[i] = h;
  }
  std::vector<Tensor> out(t);
  for (std::size_t i = 0; i < t; ++i) out[i] = concat({fwd[i], bwd[i]});
  return out;
}

Tensor reinforce_surrogate(std::span<const double> losses,
                           std::span<const Tensor> logqs) {
  if (losses.empty() || losses.size() != logqs.size())
    throw std::invalid_argument("reinforce_surrogate: size mismatch");
  const std::size_t b = losses.size();
  double total = 0.0;
  for (double l : losses) total += l;
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < b; ++i) {
    double baseline = 0.0;
    if (b >= 2) {
      baseline = (total - losses[i]) / static_cast<double>(b - 1);
    }
    const double advantage = losses[i] - baseline;
    acc = add(acc, scale(logqs[i], advantage));
  }
  return scale(acc, 1.0 / static_cast<double>(b));
}

}  // namespace ctsq::nn
