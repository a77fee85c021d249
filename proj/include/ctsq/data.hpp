#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctsq/model.hpp"

namespace ctsq::data {

struct SequenceDataset {
  std::vector<model::Sequence> sequences;  // N x T x D_x
  std::vector<double> channel_mean, channel_std;
  double dt = 0.1;
  std::string provenance;

  std::size_t num_sequences() const { return sequences.size(); }
  std::size_t t_frames() const { return sequences.empty() ? 0 : sequences[0].size(); }
  std::size_t d_x() const {
    return sequences.empty() || sequences[0].empty() ? 0 : sequences[0][0].size();
  }

  // z-normalize in place using pooled per-channel stats; throws on a
  // zero-variance channel
  void normalize();
  std::vector<double> denormalize_frame(std::span<const double> frame) const;
  // scale normalized values into 8-bit symbols (clipped at +-4 sigma) and back
  SequenceDataset to_symbols8() const;
};

enum class SyntheticKind { SinusoidMix, Bounce2d, PiecewiseErratic };

SyntheticKind synthetic_kind_from_string(const std::string& s);

// sinusoid-mix: per channel, sum of two random-phase/frequency sinusoids plus
// N(0, 0.01) noise. bounce-2d: a point reflecting inside the unit box (d_x
// must be 2). piecewise-erratic: sinusoid with 3 random jumps. Deterministic
// per seed.
SequenceDataset gen_synthetic(SyntheticKind kind, std::size_t n, std::size_t t,
                              std::size_t d_x, std::uint64_t seed, double dt = 0.1);

// Rectangular numeric CSV, rows = frames, columns = channels; cut into
// non-overlapping windows of t frames. Parse errors carry the line number.
SequenceDataset ingest_csv(const std::string& path, std::size_t t, double dt);

}  // namespace ctsq::data
