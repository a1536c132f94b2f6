#include "hmtmf/types.hpp"

#include "../support/gen.hpp"

#include <doctest.h>

using namespace hmtmf;
using testing::Gen;
using testing::make_task;

namespace {

std::vector<TaskDataset> line_tasks(const std::vector<std::vector<double>>& xs) {
  std::vector<TaskDataset> out;
  int id = 1;
  for (const auto& row : xs) {
    Matrix X(static_cast<Index>(row.size()), 1);
    for (std::size_t i = 0; i < row.size(); ++i) X(static_cast<Index>(i), 0) = row[i];
    out.push_back(make_task(id++, X, Vector::Zero(X.rows())));
  }
  return out;
}

double min_pairwise_distance(const Matrix& P) {
  double best = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < P.rows(); ++i)
    for (Index j = i + 1; j < P.rows(); ++j) best = std::min(best, (P.row(i) - P.row(j)).norm());
  return best;
}

}  // namespace

TEST_CASE("pooling identical grids keeps one copy and identity maps") {
  std::vector<double> grid;
  for (int i = 0; i < 10; ++i) grid.push_back(i);
  const auto tasks = line_tasks({grid, grid, grid});
  const PooledDesign p = pool_designs(tasks, 1e-9);
  CHECK(p.size() == 10);
  for (const auto& map : p.index_maps) {
    for (std::size_t i = 0; i < map.size(); ++i) CHECK(map[i] == static_cast<Index>(i));
  }
}

TEST_CASE("pooling disjoint sets concatenates them") {
  std::vector<std::vector<double>> sets(3);
  for (int l = 0; l < 3; ++l)
    for (int i = 0; i < 10; ++i) sets[static_cast<std::size_t>(l)].push_back(100.0 * l + i);
  CHECK(pool_designs(line_tasks(sets), 1e-9).size() == 30);
}

TEST_CASE("near duplicate within tolerance is merged") {
  const double tau = 1e-6;
  const auto tasks = line_tasks({{0.0, 1.0}, {1.0 + tau / 2, 2.0}});
  const PooledDesign p = pool_designs(tasks, tau);
  CHECK(p.size() == 3);
  CHECK(p.index_maps[1][0] == p.index_maps[0][1]);
  // Brute-force check: exactly one pair of inputs lies within tau.
  int close = 0;
  const std::vector<double> all{0.0, 1.0, 1.0 + tau / 2, 2.0};
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) close += std::abs(all[i] - all[j]) <= tau;
  CHECK(close == 1);
}

TEST_CASE("pooled design invariants hold on random instances") {
  Gen g(11);
  for (int trial = 0; trial < 50; ++trial) {
    CAPTURE(trial);
    const int m = g.integer(1, 4);
    const Index d = g.integer(1, 3);
    const double tau = 0.05;
    std::vector<TaskDataset> tasks;
    Index total = 0;
    // Coarse lattice values force frequent exact and near duplicates.
    for (int l = 0; l < m; ++l) {
      const Index n = g.integer(1, 8);
      Matrix X(n, d);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j) X(i, j) = g.integer(0, 3) + (g.coin() ? 0.0 : tau / 3);
      tasks.push_back(make_task(l + 1, X, Vector::Zero(n)));
      total += n;
    }
    const PooledDesign p = pool_designs(tasks, tau);
    CHECK(p.size() <= total);
    CHECK(p.size() >= 1);
    if (p.size() > 1) CHECK(min_pairwise_distance(p.points) > tau);
    // Every task location maps to a pooled point within tau.
    for (std::size_t l = 0; l < tasks.size(); ++l) {
      for (std::size_t i = 0; i < tasks[l].measurements.size(); ++i) {
        const Vector& x = tasks[l].measurements[i].location;
        CHECK((p.points.row(p.index_maps[l][i]).transpose() - x).norm() <= tau);
      }
    }
  }
}

TEST_CASE("pooled size lies between the largest task and the total") {
  Gen g(12);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<TaskDataset> tasks;
    Index total = 0, largest = 0;
    for (int l = 0; l < 3; ++l) {
      const Index n = g.integer(1, 6);
      tasks.push_back(make_task(l + 1, g.points(n, 2, 0, 1), Vector::Zero(n)));
      total += n;
      largest = std::max(largest, n);
    }
    const PooledDesign p = pool_designs(tasks, 1e-9);
    CHECK(p.size() >= largest);
    CHECK(p.size() <= total);
  }
}

TEST_CASE("sample means") {
  Matrix X(3, 1);
  X << 0, 1, 2;
  const TaskDataset t = testing::make_replicated_task(1, X, {{1.0, 2.0, 3.0}, {5.0}, {0.1, -0.1}});
  const Vector z = sample_means(t);
  CHECK(z(0) == doctest::Approx(2.0));
  CHECK(z(1) == doctest::Approx(5.0));
  CHECK(z(2) == doctest::Approx(0.0));
}

TEST_CASE("dataset validation names the failure") {
  Matrix X(2, 1);
  X << 0, 1;
  TaskDataset t = testing::make_replicated_task(7, X, {{1.0}, {2.0}});
  CHECK_NOTHROW(validate(t));

  SUBCASE("basis rows") {
    t.basis = Matrix::Ones(3, 1);
    try {
      validate(t);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::dimension_mismatch);
      CHECK(std::string(e.what()).find("task 7") != std::string::npos);
    }
  }
  SUBCASE("empty replicates") {
    t.measurements[1].replicates.clear();
    CHECK_THROWS_AS(validate(t), Error);
  }
  SUBCASE("outside domain") {
    t.measurements[1].location(0) = 5.0;
    CHECK_THROWS_AS(validate(t), Error);
  }
  SUBCASE("no measurements") {
    t.measurements.clear();
    t.basis.resize(0, 1);
    CHECK_THROWS_AS(validate(t), Error);
  }
}

TEST_CASE("fidelity table validation") {
  CHECK_NOTHROW(validate(FidelityTable{{"a", 0.1, true}, {"b", 0.0, false}}));
  CHECK_THROWS_AS(validate(FidelityTable{{"a", -0.1, true}}), Error);
  CHECK_THROWS_AS(validate(FidelityTable{{"a", 0.1, true}, {"a", 0.2, true}}), Error);
  CHECK_THROWS_AS(find_fidelity(FidelityTable{{"a", 0.1, true}}, "b"), Error);
}

TEST_CASE("hyperparameter validation") {
  HyperParams h;
  CHECK_NOTHROW(h.validate());
  h.nu = 0.0;
  CHECK_THROWS_AS(h.validate(), Error);
  h = HyperParams{};
  h.k2_max = 0;
  CHECK_THROWS_AS(h.validate(), Error);
}

TEST_CASE("dedup tolerance scales with the bounding box") {
  Matrix X(2, 2);
  X << 0, 0, 3, 4;
  const std::vector<TaskDataset> tasks{make_task(1, X, Vector::Zero(2))};
  CHECK(default_dedup_tolerance(tasks) == doctest::Approx(5e-9));
}
