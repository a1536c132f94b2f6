#include "hmtmf/noise.hpp"
#include "hmtmf/synth.hpp"

#include "../support/gen.hpp"

#include <doctest.h>

#include <cmath>

using namespace hmtmf;

namespace {

double corr(const Vector& a, const Vector& b) {
  const Vector x = a.array() - a.mean(), y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

bool same(const TaskDataset& a, const TaskDataset& b) {
  if (a.size() != b.size() || a.basis != b.basis) return false;
  for (std::size_t i = 0; i < a.measurements.size(); ++i) {
    const auto &p = a.measurements[i], &q = b.measurements[i];
    if (p.location != q.location || p.replicates != q.replicates || p.fidelity_id != q.fidelity_id) return false;
  }
  return true;
}

EngineBenchConfig small_engine(std::uint64_t seed) {
  EngineBenchConfig c;
  c.n_test = 2000;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("1D truth values") {
  CHECK(truth_1d(0, 0.0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(truth_1d(0, 5.0) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(truth_1d(1, 0.0) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK_THROWS_AS(truth_1d(3, 0.0), Error);

  const double a[3] = {0.1, 5.0, 0.3}, b[3] = {0.1, -0.2, 0.3}, c[3] = {0.2, 0.4, 0.3};
  const double pi = 3.14159265358979323846;
  const Vector x = dense_grid_1d(0.0, 20.0);
  CHECK(x.size() == 1001);
  for (int l = 0; l < 3; ++l)
    for (Index i = 0; i < x.size(); ++i)
      CHECK(std::abs(truth_1d(l, x(i)) - (a[l] + b[l] * x(i) + std::sin(pi * x(i) / 5) + c[l] * std::sin(4 * pi * x(i) / 5))) <= 1e-12);
}

TEST_CASE("1D configuration defaults") {
  const Bench1DConfig c;
  CHECK(c.n_points_per_task == 10);
  CHECK(c.replicates == 3);
  CHECK(c.sigma_low == 0.2);
  CHECK(c.sigma_high == 0.05);
  CHECK(c.lower == 0.0);
  CHECK(c.upper == 20.0);
}

TEST_CASE("1D benchmark structure") {
  Bench1DConfig c;
  c.seed = 5;
  const Bench1D b = gen_1d_tasks(c);
  REQUIRE(b.tasks.size() == 3);
  for (const auto& t : b.tasks) {
    CHECK(t.size() == 10);
    CHECK_NOTHROW(validate(t));
    for (Index i = 0; i < t.size(); ++i) {
      const auto& m = t.measurements[static_cast<std::size_t>(i)];
      CHECK(m.replicates.size() == 3);
      CHECK(m.location(0) >= 0.0);
      CHECK(m.location(0) <= 20.0);
      CHECK(t.basis(i, 0) == 1.0);
      CHECK(t.basis(i, 1) == m.location(0));
      CHECK_NOTHROW(find_fidelity(b.fidelities, m.fidelity_id));
    }
  }

  c.gaps = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    c.seed = seed;
    const Bench1D g = gen_1d_tasks(c);
    for (const auto& m : g.tasks[1].measurements) CHECK(m.location(0) >= 5.0);
    for (const auto& m : g.tasks[2].measurements) CHECK((m.location(0) <= 7.0 || m.location(0) >= 10.0));
  }
}

TEST_CASE("appending 1D points") {
  Bench1DConfig c;
  Bench1D b = gen_1d_tasks(c);
  Rng rng(3);
  append_1d_points(b, c, 0, {7.5, 8.5}, rng);
  CHECK(b.tasks[0].size() == 12);
  CHECK(b.tasks[0].basis.rows() == 12);
  CHECK(b.tasks[0].measurements.back().location(0) == 8.5);
  CHECK_THROWS_AS(append_1d_points(b, c, 3, {1.0}, rng), Error);
}

TEST_CASE("1D replicate variance matches the gauge variance") {
  double sum[2] = {0, 0};
  int count[2] = {0, 0};
  Bench1DConfig c;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    c.seed = seed;
    for (const auto& t : gen_1d_tasks(c).tasks) {
      for (const auto& m : t.measurements) {
        const int k = m.fidelity_id == "high" ? 1 : 0;
        sum[k] += *sample_variance(m.replicates);
        ++count[k];
      }
    }
  }
  CHECK(sum[0] / count[0] == doctest::Approx(0.04).epsilon(0.1));
  CHECK(sum[1] / count[1] == doctest::Approx(0.0025).epsilon(0.1));
}

TEST_CASE("gauge table and repeatability") {
  CHECK(gauge_std(0.1, 20.0) == doctest::Approx(0.02));
  CHECK(gauge_std(12.5, 20.0) == doctest::Approx(2.5));
  const auto pairs = gauge_pairs_table();
  REQUIRE(pairs.size() == 9);
  CHECK(pairs.front() == std::pair{0.1, 0.5});
  CHECK(pairs.back() == std::pair{2.5, 12.5});
  const std::vector<std::pair<double, double>> rows{{0.1, 0.5}, {0.1, 2.5}, {0.1, 5.0}, {0.1, 12.5}, {0.5, 2.5},
                                                    {0.5, 5.0}, {0.5, 12.5}, {2.5, 5.0}, {2.5, 12.5}};
  CHECK(pairs == rows);
}

TEST_CASE("engine configuration defaults") {
  const EngineBenchConfig c;
  CHECK(c.n_tasks == 3);
  CHECK(c.n_low == 25);
  CHECK(c.n_high == 25);
  CHECK(c.n_test == 15000);
  CHECK(c.mrr_correlation == 0.7);
  CHECK(c.mean_height == 20.0);
}

TEST_CASE("engine benchmark structure") {
  EngineBenchConfig c = small_engine(4);
  c.p_high = 0.5;
  c.p_low = 5.0;
  const EngineBench e = gen_engine_tasks(c);
  REQUIRE(e.tasks.size() == 3);
  CHECK(e.test_points.rows() == 2000);
  CHECK(find_fidelity(e.fidelities, "high").sigma == doctest::Approx(0.1));
  CHECK(find_fidelity(e.fidelities, "low").sigma == doctest::Approx(1.0));
  for (std::size_t l = 0; l < 3; ++l) {
    const TaskDataset& t = e.tasks[l];
    CHECK(t.size() == 50);
    int high = 0;
    for (const auto& m : t.measurements) high += m.fidelity_id == "high";
    CHECK(high == 25);
    CHECK(t.basis.cols() == 2);
    CHECK(t.basis.col(0).isOnes());
    CHECK((t.basis.col(1) - e.surfaces[l].mrr(t.locations())).norm() < 1e-12);
    CHECK((e.truth[l] - e.surfaces[l].height(e.test_points)).norm() == 0.0);
  }
}

TEST_CASE("MRR correlation with the surface") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const EngineBench e = gen_engine_tasks(small_engine(seed));
    for (std::size_t l = 0; l < e.tasks.size(); ++l) {
      CHECK(std::abs(corr(e.test_basis[l].col(1), e.truth[l]) - 0.7) <= 0.05);
    }
  }
}

TEST_CASE("engine gauge noise has the configured spread") {
  EngineBenchConfig c = small_engine(0);
  c.n_test = 1;
  c.features = 40;  // noise draws do not depend on field resolution
  c.p_high = 2.5;
  c.p_low = 12.5;
  double ss[2] = {0, 0};
  int n[2] = {0, 0};
  for (int rep = 0; rep < 40; ++rep) {
    c.replication = rep;
    const EngineBench e = gen_engine_tasks(c);
    for (std::size_t l = 0; l < e.tasks.size(); ++l) {
      const Vector truth = e.surfaces[l].height(e.tasks[l].locations());
      for (Index i = 0; i < e.tasks[l].size(); ++i) {
        const auto& m = e.tasks[l].measurements[static_cast<std::size_t>(i)];
        const int k = m.fidelity_id == "high" ? 0 : 1;
        ss[k] += std::pow(m.replicates[0] - truth(i), 2);
        ++n[k];
      }
    }
  }
  CHECK(ss[0] / n[0] == doctest::Approx(0.25).epsilon(0.1));
  CHECK(ss[1] / n[1] == doctest::Approx(6.25).epsilon(0.1));
}

TEST_CASE("generators are deterministic in the seed") {
  Bench1DConfig c;
  c.seed = 77;
  const Bench1D a = gen_1d_tasks(c), b = gen_1d_tasks(c);
  for (std::size_t l = 0; l < 3; ++l) CHECK(same(a.tasks[l], b.tasks[l]));
  c.seed = 78;
  CHECK_FALSE(same(a.tasks[0], gen_1d_tasks(c).tasks[0]));

  const EngineBench e1 = gen_engine_tasks(small_engine(9)), e2 = gen_engine_tasks(small_engine(9));
  CHECK(e1.test_points == e2.test_points);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(same(e1.tasks[l], e2.tasks[l]));
    CHECK(e1.truth[l] == e2.truth[l]);
  }

  // A new replication redraws designs and noise but keeps the surfaces.
  EngineBenchConfig r = small_engine(9);
  r.replication = 1;
  const EngineBench e3 = gen_engine_tasks(r);
  CHECK(e3.truth[0] == e1.truth[0]);
  CHECK_FALSE(same(e3.tasks[0], e1.tasks[0]));
}

TEST_CASE("seed derivation") {
  // Reference splitmix64 output for state 0.
  CHECK(splitmix64(0) == 0xE220A8397B1DCDAFULL);
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}

TEST_CASE("generator configuration validation") {
  Bench1DConfig c;
  c.n_points_per_task = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  EngineBenchConfig e;
  e.mrr_correlation = 1.0;
  CHECK_THROWS_AS(e.validate(), Error);
  e = EngineBenchConfig{};
  e.upper = e.lower;
  CHECK_THROWS_AS(e.validate(), Error);
}
