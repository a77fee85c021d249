#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ctsq/data.hpp"

using namespace ctsq;
using data::SequenceDataset;
using data::SyntheticKind;

namespace {

SequenceDataset two_channel_toy() {
  SequenceDataset ds;
  ds.sequences = {{{1.0, 10.0}, {2.0, 20.0}, {3.0, 30.0}},
                  {{4.0, 40.0}, {5.0, 50.0}, {6.0, 60.0}}};
  return ds;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& content) {
    static int counter = 0;
    path = "/tmp/ctsq_data_test_" + std::to_string(counter++) + ".csv";
    std::ofstream f(path);
    f << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("normalize produces pooled zero-mean unit-variance channels") {
  auto ds = two_channel_toy();
  ds.normalize();
  REQUIRE(ds.channel_mean.size() == 2);
  CHECK(ds.channel_mean[0] == doctest::Approx(3.5));
  CHECK(ds.channel_mean[1] == doctest::Approx(35.0));
  for (int c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (const auto& seq : ds.sequences)
      for (const auto& f : seq) {
        sum += f[static_cast<std::size_t>(c)];
        sq += f[static_cast<std::size_t>(c)] * f[static_cast<std::size_t>(c)];
        ++n;
      }
    CHECK(sum / n == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(sq / n == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("denormalize inverts normalize") {
  auto ds = two_channel_toy();
  const auto original = ds.sequences;
  ds.normalize();
  for (std::size_t s = 0; s < ds.sequences.size(); ++s)
    for (std::size_t t = 0; t < ds.sequences[s].size(); ++t) {
      const auto back = ds.denormalize_frame(ds.sequences[s][t]);
      for (std::size_t c = 0; c < back.size(); ++c)
        CHECK(back[c] == doctest::Approx(original[s][t][c]).epsilon(1e-12));
    }
}

TEST_CASE("normalize rejects a zero-variance channel") {
  SequenceDataset ds;
  ds.sequences = {{{1.0, 7.0}, {2.0, 7.0}, {3.0, 7.0}}};
  CHECK_THROWS_WITH_AS(ds.normalize(), doctest::Contains("channel 1"),
                       std::runtime_error);
}

TEST_CASE("8-bit symbolization clips at 4 sigma and stays in range") {
  SequenceDataset ds;
  ds.sequences = {{{-10.0}, {-4.0}, {0.0}, {4.0}, {10.0}}};
  ds.channel_mean = {0.0};
  ds.channel_std = {1.0};
  auto sym = ds.to_symbols8();
  CHECK(sym.sequences[0][0][0] == 0.0);    // below -4 sigma
  CHECK(sym.sequences[0][1][0] == 0.0);
  CHECK(sym.sequences[0][2][0] == doctest::Approx(128.0).epsilon(0.01));
  CHECK(sym.sequences[0][3][0] == 255.0);
  CHECK(sym.sequences[0][4][0] == 255.0);  // above +4 sigma
  for (const auto& seq : sym.sequences)
    for (const auto& f : seq)
      for (double v : f) {
        CHECK(v >= 0.0);
        CHECK(v <= 255.0);
        CHECK(v == std::floor(v));
      }
}

TEST_CASE("synthetic generators are deterministic per seed and well-shaped") {
  for (auto kind : {SyntheticKind::SinusoidMix, SyntheticKind::Bounce2d,
                    SyntheticKind::PiecewiseErratic}) {
    const std::size_t d = kind == SyntheticKind::Bounce2d ? 2 : 3;
    auto a = data::gen_synthetic(kind, 4, 50, d, 77);
    auto b = data::gen_synthetic(kind, 4, 50, d, 77);
    auto c = data::gen_synthetic(kind, 4, 50, d, 78);
    REQUIRE(a.num_sequences() == 4);
    REQUIRE(a.t_frames() == 50);
    REQUIRE(a.d_x() == d);
    CHECK(a.sequences == b.sequences);
    CHECK(a.sequences != c.sequences);
    for (const auto& seq : a.sequences)
      for (const auto& f : seq)
        for (double v : f) CHECK(std::isfinite(v));
  }
}

TEST_CASE("bounce-2d stays inside the unit box and needs d_x = 2") {
  auto ds = data::gen_synthetic(SyntheticKind::Bounce2d, 3, 200, 2, 5);
  for (const auto& seq : ds.sequences)
    for (const auto& f : seq)
      for (double v : f) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
  CHECK_THROWS(data::gen_synthetic(SyntheticKind::Bounce2d, 1, 10, 3, 5));
}

TEST_CASE("kind parsing") {
  CHECK(data::synthetic_kind_from_string("sinusoid-mix") ==
        SyntheticKind::SinusoidMix);
  CHECK(data::synthetic_kind_from_string("bounce-2d") == SyntheticKind::Bounce2d);
  CHECK(data::synthetic_kind_from_string("piecewise-erratic") ==
        SyntheticKind::PiecewiseErratic);
  CHECK_THROWS(data::synthetic_kind_from_string("unknown"));
}

TEST_CASE("CSV ingestion windows the rows and normalizes") {
  std::string csv;
  for (int i = 0; i < 10; ++i)
    csv += std::to_string(0.1 * i) + "," + std::to_string(1.0 - 0.05 * i) + "\n";
  TempFile f(csv);
  auto ds = data::ingest_csv(f.path, 4, 0.05);
  CHECK(ds.num_sequences() == 2);  // 10 rows -> two full windows of 4
  CHECK(ds.t_frames() == 4);
  CHECK(ds.d_x() == 2);
  CHECK(ds.dt == 0.05);
  CHECK(ds.channel_mean.size() == 2);  // auto-normalized
}

TEST_CASE("CSV ingestion reports the offending line") {
  TempFile f("1.0,2.0\n3.0,oops\n");
  CHECK_THROWS_WITH_AS(data::ingest_csv(f.path, 2, 0.1), doctest::Contains("line 2"),
                       std::runtime_error);
  TempFile g("1.0,2.0\n3.0\n");
  CHECK_THROWS_WITH_AS(data::ingest_csv(g.path, 2, 0.1), doctest::Contains("line 2"),
                       std::runtime_error);
  CHECK_THROWS(data::ingest_csv("/nonexistent/file.csv", 2, 0.1));
}
