#include "hmtmf/noise.hpp"

#include "../support/gen.hpp"

#include <doctest.h>

using namespace hmtmf;
using testing::Gen;
using testing::make_replicated_task;

TEST_CASE("sample variance") {
  const std::vector<double> a{1.0, 2.0, 3.0}, b{5.0, 5.0, 5.0}, one{4.0};
  CHECK(*sample_variance(a) == doctest::Approx(1.0));
  CHECK(*sample_variance(b) == 0.0);
  CHECK_FALSE(sample_variance(one).has_value());
  CHECK_FALSE(sample_variance(std::vector<double>{}).has_value());
}

TEST_CASE("sample variance is unbiased for triplets") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> draw(0.0, 0.2);
  const int batches = 100000 / 3;
  double sum = 0.0;
  for (int b = 0; b < batches; ++b) {
    const std::vector<double> r{draw(rng), draw(rng), draw(rng)};
    sum += *sample_variance(r);
  }
  CHECK(std::abs(sum / batches - 0.04) <= 0.002);
}

TEST_CASE("noise matrix examples") {
  const FidelityTable table{{"g", 0.05, true}, {"u", 0.3, false}};

  Matrix one(1, 1);
  one << 0.0;
  const TaskDataset triple = make_replicated_task(1, one, {{1.0, 2.0, 3.0}});
  CHECK(build_noise_matrix(triple, table, NoisePolicy::sample_variance_only).diag(0) == doctest::Approx(1.0 / 3.0));

  const TaskDataset single = make_replicated_task(1, one, {{4.2}});
  CHECK(build_noise_matrix(single, table, NoisePolicy::declared_variance_fallback).diag(0) ==
        doctest::Approx(0.0025));
  try {
    build_noise_matrix(single, table, NoisePolicy::sample_variance_only);
    FAIL("expected insufficient replicates");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::insufficient_replicates);
  }

  Matrix two(2, 1);
  two << 0.0, 1.0;
  const TaskDataset pair = make_replicated_task(1, two, {{0.0, 0.0, 0.0}, {1.0, 3.0}});
  const Vector d = build_noise_matrix(pair, table, NoisePolicy::sample_variance_only).diag;
  CHECK(d(0) == 0.0);
  CHECK(d(1) == doctest::Approx(1.0));
}

TEST_CASE("declared variance wins only when flagged as known") {
  const FidelityTable table{{"known", 0.1, true}, {"unknown", 0.1, false}};
  Matrix X(2, 1);
  X << 0.0, 1.0;
  const TaskDataset t = make_replicated_task(1, X, {{0.0, 2.0}, {0.0, 2.0}}, {"known", "unknown"});
  const Vector d = build_noise_matrix(t, table, NoisePolicy::declared_variance_fallback).diag;
  CHECK(d(0) == doctest::Approx(0.01 / 2));
  CHECK(d(1) == doctest::Approx(2.0 / 2));
}

TEST_CASE("noise entries are finite and nonnegative on random replicate sets") {
  Gen g(32);
  const FidelityTable table{{"g", 0.2, false}};
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = g.integer(1, 6);
    std::vector<std::vector<double>> reps;
    for (Index i = 0; i < n; ++i) {
      std::vector<double> r;
      const int count = g.integer(1, 5);
      for (int k = 0; k < count; ++k) r.push_back(g.normal(0.0, g.uniform(0.0, 3.0)));
      reps.push_back(r);
    }
    const TaskDataset t = make_replicated_task(1, g.points(n, 1, 0, 1), reps);
    const Vector d = build_noise_matrix(t, table, NoisePolicy::declared_variance_fallback).diag;
    CHECK(d.allFinite());
    CHECK((d.array() >= 0.0).all());
    // Oracle: direct two-pass variance divided by the replicate count.
    for (Index i = 0; i < n; ++i) {
      const auto& r = reps[static_cast<std::size_t>(i)];
      double expect = 0.04;
      if (r.size() > 1) {
        double mean = 0.0, ss = 0.0;
        for (double v : r) mean += v / static_cast<double>(r.size());
        for (double v : r) ss += (v - mean) * (v - mean);
        expect = ss / static_cast<double>(r.size() - 1);
      }
      CHECK(d(i) == doctest::Approx(expect / static_cast<double>(r.size())).epsilon(1e-12));
    }
  }
}

TEST_CASE("noise floor") {
  NoiseMatrix s{Vector(3)};
  s.diag << 0.0, 1e-20, 0.5;
  const NoiseMatrix f = floor_noise(s, 1e-12);
  CHECK(f.diag(0) == 1e-12);
  CHECK(f.diag(1) == 1e-12);
  CHECK(f.diag(2) == 0.5);
}
