#include "ctsq/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ctsq/mathutil.hpp"

namespace ctsq::data {

void SequenceDataset::normalize() {
  const std::size_t d = d_x();
  if (d == 0) throw std::invalid_argument("normalize: empty dataset");
  channel_mean.assign(d, 0.0);
  channel_std.assign(d, 0.0);
  std::size_t count = 0;
  for (const auto& seq : sequences)
    for (const auto& frame : seq) {
      for (std::size_t c = 0; c < d; ++c) channel_mean[c] += frame[c];
      ++count;
    }
  for (auto& m : channel_mean) m /= static_cast<double>(count);
  for (const auto& seq : sequences)
    for (const auto& frame : seq)
      for (std::size_t c = 0; c < d; ++c) {
        const double e = frame[c] - channel_mean[c];
        channel_std[c] += e * e;
      }
  for (std::size_t c = 0; c < d; ++c) {
    channel_std[c] = std::sqrt(channel_std[c] / static_cast<double>(count));
    if (!(channel_std[c] > 1e-12))
      throw std::runtime_error("normalize: zero variance channel " +
                               std::to_string(c));
  }
  for (auto& seq : sequences)
    for (auto& frame : seq)
      for (std::size_t c = 0; c < d; ++c)
        frame[c] = (frame[c] - channel_mean[c]) / channel_std[c];
}

std::vector<double> SequenceDataset::denormalize_frame(
    std::span<const double> frame) const {
  if (channel_mean.empty()) return {frame.begin(), frame.end()};
  std::vector<double> out(frame.size());
  for (std::size_t c = 0; c < frame.size(); ++c)
    out[c] = frame[c] * channel_std[c] + channel_mean[c];
  return out;
}

SequenceDataset SequenceDataset::to_symbols8() const {
  SequenceDataset out = *this;
  out.provenance += "+8bit";
  for (auto& seq : out.sequences)
    for (auto& frame : seq)
      for (auto& v : frame) {
        const double clipped = std::clamp(v, -4.0, 4.0);
        v = std::round((clipped + 4.0) / 8.0 * 255.0);
      }
  return out;
}

SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "sinusoid-mix") return SyntheticKind::SinusoidMix;
  if (s == "bounce-2d") return SyntheticKind::Bounce2d;
  if (s == "piecewise-erratic") return SyntheticKind::PiecewiseErratic;
  throw std::invalid_argument("unknown synthetic kind: " + s);
}

SequenceDataset gen_synthetic(SyntheticKind kind, std::size_t n, std::size_t t,
                              std::size_t d_x, std::uint64_t seed, double dt) {
  if (n < 2 || t < 2) throw std::invalid_argument("gen_synthetic: N, T >= 2");
  if (kind == SyntheticKind::Bounce2d && d_x != 2)
    throw std::invalid_argument("bounce-2d is 2-channel");
  SequenceDataset out;
  out.dt = dt;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto normal = [&] {
    // explicit Box-Muller keeps draws identical across standard libraries
    const double u1 = std::max(unif(rng), 1e-300);
    const double u2 = unif(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  out.sequences.resize(n, model::Sequence(t, std::vector<double>(d_x)));
  switch (kind) {
    case SyntheticKind::SinusoidMix: {
      out.provenance = "sinusoid-mix";
      for (auto& seq : out.sequences)
        for (std::size_t c = 0; c < d_x; ++c) {
          const double a1 = 0.5 + unif(rng), a2 = 0.3 + 0.7 * unif(rng);
          const double f1 = 0.2 + 0.6 * unif(rng), f2 = 0.1 + 0.4 * unif(rng);
          const double p1 = 2.0 * M_PI * unif(rng), p2 = 2.0 * M_PI * unif(rng);
          for (std::size_t i = 0; i < t; ++i) {
            const double tt = static_cast<double>(i + 1) * dt;
            seq[i][c] = a1 * std::sin(2.0 * M_PI * f1 * tt + p1) +
                        a2 * std::sin(2.0 * M_PI * f2 * tt + p2) + 0.1 * normal();
          }
        }
      break;
    }
    case SyntheticKind::Bounce2d: {
      out.provenance = "bounce-2d";
      for (auto& seq : out.sequences) {
        double px = unif(rng), py = unif(rng);
        double vx = 0.2 + 0.6 * unif(rng), vy = 0.2 + 0.6 * unif(rng);
        if (unif(rng) < 0.5) vx = -vx;
        if (unif(rng) < 0.5) vy = -vy;
        for (std::size_t i = 0; i < t; ++i) {
          auto step = [&](double& p, double& v) {
            p += v * dt;
            while (p < 0.0 || p > 1.0) {
              if (p < 0.0) p = -p;
              if (p > 1.0) p = 2.0 - p;
              v = -v;
            }
          };
          step(px, vx);
          step(py, vy);
          seq[i][0] = px;
          seq[i][1] = py;
        }
      }
      break;
    }
    case SyntheticKind::PiecewiseErratic: {
      out.provenance = "piecewise-erratic";
      for (auto& seq : out.sequences)
        for (std::size_t c = 0; c < d_x; ++c) {
          const double a = 0.5 + unif(rng);
          const double f = 0.2 + 0.5 * unif(rng);
          const double p = 2.0 * M_PI * unif(rng);
          std::vector<std::size_t> jumps(3);
          std::vector<double> offs(3);
          for (int j = 0; j < 3; ++j) {
            jumps[static_cast<std::size_t>(j)] =
                1 + static_cast<std::size_t>(unif(rng) * static_cast<double>(t - 1));
            offs[static_cast<std::size_t>(j)] = 2.0 * unif(rng) - 1.0;
          }
          std::sort(jumps.begin(), jumps.end());
          for (std::size_t i = 0; i < t; ++i) {
            const double tt = static_cast<double>(i + 1) * dt;
            double v = a * std::sin(2.0 * M_PI * f * tt + p);
            for (int j = 0; j < 3; ++j)
              if (i >= jumps[static_cast<std::size_t>(j)])
                v += offs[static_cast<std::size_t>(j)];
            seq[i][c] = v + 0.05 * normal();
          }
        }
      break;
    }
  }
  return out;
}

SequenceDataset ingest_csv(const std::string& path, std::size_t t, double dt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw std::runtime_error("ingest_csv: non-numeric cell at line " +
                                 std::to_string(lineno));
      }
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
        ++used;
      if (used != cell.size())
        throw std::runtime_error("ingest_csv: non-numeric cell at line " +
                                 std::to_string(lineno));
      row.push_back(v);
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw std::runtime_error("ingest_csv: ragged row at line " +
                               std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  if (rows.size() < t)
    throw std::runtime_error("ingest_csv: file shorter than one window");
  SequenceDataset out;
  out.dt = dt;
  out.provenance = "csv:" + path;
  for (std::size_t start = 0; start + t <= rows.size(); start += t)
    out.sequences.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(start),
                               rows.begin() + static_cast<std::ptrdiff_t>(start + t));
  out.normalize();
  return out;
}

}  // namespace ctsq::data
