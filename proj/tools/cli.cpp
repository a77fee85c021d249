#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctsq/codec.hpp"
#include "ctsq/data.hpp"
#include "ctsq/model.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitModelMismatch = 3;
constexpr int kExitSelftest = 4;

// flat key=value config with [section] headers; lookups use "section.key"
class Config {
 public:
  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    Config cfg;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[' && line.back() == ']') {
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config parse error at line " +
                                 std::to_string(lineno));
      const std::string key = trim(line.substr(0, eq));
      cfg.kv_[section.empty() ? key : section + "." + key] =
          trim(line.substr(eq + 1));
    }
    return cfg;
  }

  std::string get(const std::string& key, const std::string& def) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? def : it->second;
  }
  double get_d(const std::string& key, double def) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return def;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw std::runtime_error("config: bad numeric value for " + key);
    }
  }
  int get_i(const std::string& key, int def) const {
    const double v = get_d(key, def);
    if (v != std::floor(v)) throw std::runtime_error("config: expected integer " + key);
    return static_cast<int>(v);
  }

 private:
  std::map<std::string, std::string> kv_;
};

ctsq::model::ModelConfig model_config_from(const Config& cfg, const std::string& mode,
                                           double lambda_frac_override) {
  ctsq::model::ModelConfig mc;
  mc.d_x = cfg.get_i("model.d_x", mc.d_x);
  mc.d_z = cfg.get_i("model.d_z", mc.d_z);
  mc.gru_hidden = cfg.get_i("model.gru_hidden", mc.gru_hidden);
  mc.embed_hidden = cfg.get_i("model.embed_hidden", mc.embed_hidden);
  mc.embed_out = cfg.get_i("model.embed_out", mc.embed_out);
  const int drift_h = cfg.get_i("model.drift_hidden", 128);
  const int dec_h = cfg.get_i("model.dec_hidden", 128);
  mc.drift_hidden = {drift_h, drift_h};
  mc.dec_hidden = {dec_h, dec_h};
  mc.tpp_hidden = {cfg.get_i("model.tpp_hidden", 64)};
  mc.sigma_obs = cfg.get_d("model.sigma_obs", mc.sigma_obs);
  mc.lambda_frac = lambda_frac_override > 0.0
                       ? lambda_frac_override
                       : cfg.get_d("model.lambda_frac", mc.lambda_frac);
  mc.dt = cfg.get_d("model.dt", mc.dt);
  mc.t_frames = cfg.get_i("data.t", mc.t_frames);
  mc.substeps_per_frame = cfg.get_i("model.substeps_per_frame", mc.substeps_per_frame);
  mc.nu_init = cfg.get_d("model.nu_init", mc.nu_init);
  mc.obs_kind = mode == "lossless"
                    ? ctsq::model::ObsKind::DiscretizedLogisticMixture
                    : ctsq::model::ObsKind::Gaussian;
  mc.dlm_components = cfg.get_i("model.dlm_components", mc.dlm_components);
  return mc;
}

ctsq::data::SequenceDataset dataset_from(const Config& cfg, const std::string& mode) {
  const std::string kind = cfg.get("data.kind", "sinusoid-mix");
  const auto t = static_cast<std::size_t>(cfg.get_i("data.t", 100));
  ctsq::data::SequenceDataset ds;
  if (kind == "csv") {
    ds = ctsq::data::ingest_csv(cfg.get("data.path", ""), t,
                                cfg.get_d("model.dt", 0.1));
  } else {
    ds = ctsq::data::gen_synthetic(
        ctsq::data::synthetic_kind_from_string(kind),
        static_cast<std::size_t>(cfg.get_i("data.n", 16)), t,
        static_cast<std::size_t>(cfg.get_i("data.d_x", 4)),
        static_cast<std::uint64_t>(cfg.get_i("data.seed", 12345)),
        cfg.get_d("model.dt", 0.1));
    ds.normalize();
  }
  if (mode == "lossless") ds = ds.to_symbols8();
  return ds;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

ctsq::model::Sequence read_sequence_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  ctsq::model::Sequence seq;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    seq.push_back(std::move(row));
  }
  return seq;
}

void write_sequence_csv(const std::string& path, const ctsq::model::Sequence& seq) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out.precision(17);
  for (const auto& row : seq) {
    for (std::size_t c = 0; c < row.size(); ++c)
      out << (c ? "," : "") << row[c];
    out << "\n";
  }
}

std::vector<double> parse_times_range(const std::string& spec) {
  // a:b:step, inclusive of both ends up to rounding
  double a = 0.0, b = 0.0, step = 0.0;
  char c1 = 0, c2 = 0;
  std::stringstream ss(spec);
  if (!(ss >> a >> c1 >> b >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0.0)
    throw std::runtime_error("bad --times range: " + spec);
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * step);
  return out;
}

int run_train(const Config& cfg, std::uint64_t seed, const std::string& mode,
              double lambda_frac, const std::string& out_path,
              const std::string& log_path) {
  auto ds = dataset_from(cfg, mode);
  auto mc = model_config_from(cfg, mode, lambda_frac);
  mc.d_x = static_cast<int>(ds.d_x());
  mc.t_frames = static_cast<int>(ds.t_frames());
  ctsq::model::Model m(mc, seed);
  ctsq::model::TrainConfig tc;
  tc.stage1_iters = cfg.get_i("train.stage1_iters", tc.stage1_iters);
  tc.stage2_iters = cfg.get_i("train.stage2_iters", tc.stage2_iters);
  tc.batch_size = cfg.get_i("train.batch_size", tc.batch_size);
  tc.lr = cfg.get_d("train.lr", tc.lr);
  tc.seed = seed;
  const auto log = m.train(ds.sequences, tc);
  write_file(out_path, m.save());
  if (!log_path.empty()) {
    std::ofstream lf(log_path);
    if (!lf) throw std::runtime_error("cannot write: " + log_path);
    lf << "iter,stage,loss,recon,rate,times_rate,mean_m,nu_min,nu_median,nu_max\n";
    lf.precision(12);
    for (const auto& r : log)
      lf << r.iter << ',' << r.stage << ',' << r.loss << ',' << r.recon << ','
         << r.rate << ',' << r.times_rate << ',' << r.mean_m << ',' << r.nu_min
         << ',' << r.nu_median << ',' << r.nu_max << "\n";
  }
  std::cout << "trained " << m.params().num_scalars() << " parameters; final loss "
            << log.back().loss << "\n";
  return kExitOk;
}

int run_rd_sweep(const Config& cfg, const std::string& model_path,
                 const std::string& mode, std::uint64_t seed,
                 const std::vector<int>& precisions, const std::string& out_path) {
  const auto bytes = read_file(model_path);
  auto m = ctsq::model::Model::load(bytes);
  auto ds = dataset_from(cfg, mode);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write: " + out_path);
  out << "precision,bits_total,bits_latents,bits_times_estimate,M_mean,"
         "pruned_dims,mse,mae\n";
  out.precision(10);
  const auto cmode =
      mode == "lossless" ? ctsq::codec::Mode::Lossless : ctsq::codec::Mode::Lossy;
  for (int p : precisions) {
    double bits_total = 0.0, bits_lat = 0.0, bits_times = 0.0, m_mean = 0.0;
    double se = 0.0, ae = 0.0;
    int pruned = 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
      ctsq::codec::CompressStats st;
      auto c = ctsq::codec::compress(m, ds.sequences[i], cmode, p,
                                     seed + i, ctsq::codec::TimesMode::Raw, &st);
      auto rec = ctsq::codec::decompress(m, c);
      bits_total += st.bits_total;
      bits_lat += st.bits_latents;
      bits_times += st.bits_times_estimate;
      m_mean += static_cast<double>(st.m_points);
      pruned = st.pruned_dims;
      for (std::size_t f = 0; f < rec.size(); ++f) {
        const auto x = ds.denormalize_frame(ds.sequences[i][f]);
        const auto xh = ds.denormalize_frame(rec[f]);
        for (std::size_t ch = 0; ch < x.size(); ++ch) {
          const double e = x[ch] - xh[ch];
          se += e * e;
          ae += std::abs(e);
          ++count;
        }
      }
    }
    const double n = static_cast<double>(ds.sequences.size());
    out << p << ',' << bits_total / n << ',' << bits_lat / n << ','
        << bits_times / n << ',' << m_mean / n << ',' << pruned << ','
        << se / static_cast<double>(count) << ','
        << ae / static_cast<double>(count) << "\n";
  }
  return kExitOk;
}

int run_selftest() {
  int failures = 0;
  auto check = [&](bool ok, const std::string& name) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
    if (!ok) ++failures;
  };
  using namespace ctsq;
  // quantizer mass / idempotence
  {
    auto q = codec::Quantizer::make(64);
    bool ok = true;
    for (int i = 0; i < 64; ++i)
      ok = ok && q.quantize(q.dequantize(i)) == i;
    check(ok, "quantizer round-trip idempotence");
  }
  // ANS inverse pair on random cases
  {
    std::mt19937_64 rng(7);
    bool ok = true;
    for (int rep = 0; rep < 1000 && ok; ++rep) {
      std::vector<double> probs(1 + rng() % 32);
      for (auto& p : probs) p = 1e-6 + static_cast<double>(rng() % 1000);
      auto pmf = codec::make_pmf16(probs);
      auto m = codec::AnsMessage::random_init(rng(), 8);
      std::vector<int> syms(50);
      for (auto& s : syms) s = static_cast<int>(rng() % probs.size());
      for (auto it = syms.rbegin(); it != syms.rend(); ++it) m.push(*it, pmf);
      for (int s : syms) ok = ok && m.pop(pmf) == s;
    }
    check(ok, "ans push/pop inverse (1000 cases)");
  }
  // OU stationarity
  {
    bool ok = true;
    for (double nu : {0.1, 0.5, 2.0}) {
      auto tr = ou::transition_params(nu, 0.7);
      ok = ok && std::abs(tr.mean_mult * tr.mean_mult + tr.var - 1.0) < 1e-12;
    }
    check(ok, "ou stationarity identity");
  }
  // end-to-end lossy pipeline determinism on a tiny model
  {
    model::ModelConfig mc;
    mc.d_x = 2;
    mc.d_z = 4;
    mc.gru_hidden = 8;
    mc.embed_hidden = 8;
    mc.embed_out = 8;
    mc.drift_hidden = {16};
    mc.dec_hidden = {16};
    mc.tpp_hidden = {8};
    mc.t_frames = 20;
    mc.substeps_per_frame = 2;
    model::Model m(mc, 3);
    auto ds = data::gen_synthetic(data::SyntheticKind::SinusoidMix, 2, 20, 2, 5);
    ds.normalize();
    auto c1 = codec::compress(m, ds.sequences[0], codec::Mode::Lossy, 64, 11);
    auto c2 = codec::compress(m, ds.sequences[0], codec::Mode::Lossy, 64, 11);
    const bool same = c1.serialize() == c2.serialize();
    auto r1 = codec::decompress(m, c1);
    auto r2 = codec::decompress(m, c2);
    check(same && r1 == r2, "compress/decompress determinism");
  }
  return failures == 0 ? kExitOk : kExitSelftest;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous-time sequence codec"};
  app.require_subcommand(1);

  std::string config_path, out_path, log_path, model_path, input_path;
  std::string mode = "lossy", times_spec, times_mode = "raw";
  std::uint64_t seed = 1;
  int precision = 256;
  double lambda_frac = -1.0;
  std::vector<int> precisions = {16, 64, 256, 1024, 4096};

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path)->required();
  train->add_option("--seed", seed);
  train->add_option("--mode", mode)->check(CLI::IsMember({"lossy", "lossless"}));
  train->add_option("--lambda-frac", lambda_frac);
  train->add_option("--out", out_path)->required();
  train->add_option("--log", log_path);

  auto* comp = app.add_subcommand("compress", "compress a sequence");
  comp->add_option("--model", model_path)->required();
  comp->add_option("--input", input_path)->required();
  comp->add_option("--mode", mode)->check(CLI::IsMember({"lossy", "lossless"}));
  comp->add_option("--precision", precision);
  comp->add_option("--seed", seed);
  comp->add_option("--times-mode", times_mode)
      ->check(CLI::IsMember({"raw", "astar"}));
  comp->add_option("--out", out_path)->required();

  auto* decomp = app.add_subcommand("decompress", "decompress a container");
  decomp->add_option("--model", model_path)->required();
  decomp->add_option("--input", input_path)->required();
  decomp->add_option("--times", times_spec, "a:b:step query grid (lossy only)");
  decomp->add_option("--out", out_path)->required();

  auto* sweep = app.add_subcommand("rd-sweep", "rate-distortion sweep");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--model", model_path)->required();
  sweep->add_option("--mode", mode)->check(CLI::IsMember({"lossy", "lossless"}));
  sweep->add_option("--seed", seed);
  sweep->add_option("--precisions", precisions)->delimiter(',');
  sweep->add_option("--out", out_path)->required();

  app.add_subcommand("selftest", "run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand("train"))
      return run_train(Config::from_file(config_path), seed, mode, lambda_frac,
                       out_path, log_path);
    if (app.got_subcommand("compress")) {
      auto m = ctsq::model::Model::load(read_file(model_path));
      auto x = read_sequence_csv(input_path);
      const auto cmode = mode == "lossless" ? ctsq::codec::Mode::Lossless
                                            : ctsq::codec::Mode::Lossy;
      const auto tmode = times_mode == "astar" ? ctsq::codec::TimesMode::Astar
                                               : ctsq::codec::TimesMode::Raw;
      ctsq::codec::CompressStats st;
      auto c = ctsq::codec::compress(m, x, cmode, precision, seed, tmode, &st);
      write_file(out_path, c.serialize());
      std::cout << "bits_total=" << st.bits_total
                << " bits_latents=" << st.bits_latents
                << " bits_times_estimate=" << st.bits_times_estimate
                << " M=" << st.m_points << "\n";
      return kExitOk;
    }
    if (app.got_subcommand("decompress")) {
      auto m = ctsq::model::Model::load(read_file(model_path));
      auto c = ctsq::codec::CompressedContainer::deserialize(read_file(input_path));
      std::vector<double> query;
      if (!times_spec.empty()) query = parse_times_range(times_spec);
      auto x = ctsq::codec::decompress(m, c, query);
      write_sequence_csv(out_path, x);
      std::cout << "decoded " << x.size() << " frames\n";
      return kExitOk;
    }
    if (app.got_subcommand("rd-sweep"))
      return run_rd_sweep(Config::from_file(config_path), model_path, mode, seed,
                          precisions, out_path);
    if (app.got_subcommand("selftest")) return run_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    const std::string what = e.what();
    if (what.find("hash mismatch") != std::string::npos) return kExitModelMismatch;
    if (what.find("cannot open") != std::string::npos ||
        what.find("cannot write") != std::string::npos ||
        what.find("truncated") != std::string::npos ||
        what.find("bad magic") != std::string::npos)
      return kExitIo;
    return kExitUsage;
  }
  return kExitUsage;
}
