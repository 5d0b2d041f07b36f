#include "bqo/sparse_vector.hpp"

#include <doctest.h>

#include <random>

using namespace bqo;

TEST_CASE("from_pairs sorts, merges duplicates and drops zeros") {
  const SparseVec v = SparseVec::from_pairs({{5, 1.0}, {2, 3.0}, {5, 2.0}, {7, 1.0}, {7, -1.0}});
  REQUIRE(v.nonzeros() == 2);
  CHECK(v.entries()[0] == SparseVec::Entry{2, 3.0});
  CHECK(v.entries()[1] == SparseVec::Entry{5, 3.0});
}

TEST_CASE("from_sorted validates its input") {
  CHECK_NOTHROW(SparseVec::from_sorted({{1, 1.0}, {4, 2.0}}));
  CHECK_THROWS_AS(SparseVec::from_sorted({{4, 1.0}, {1, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(SparseVec::from_sorted({{1, 1.0}, {1, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(SparseVec::from_sorted({{1, 0.0}}), std::invalid_argument);
}

TEST_CASE("sparse algebra agrees with dense algebra") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<Index> slot(0, 63);
  std::normal_distribution<double> value;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SparseVec::Entry> pa, pb;
    for (int k = 0; k < 12; ++k) pa.push_back({slot(rng), value(rng)});
    for (int k = 0; k < 9; ++k) pb.push_back({slot(rng), value(rng)});
    const SparseVec a = SparseVec::from_pairs(pa);
    const SparseVec b = SparseVec::from_pairs(pb);
    const ModelVector da = a.to_dense(64);
    const ModelVector db = b.to_dense(64);
    CHECK(a.dot(b) == doctest::Approx(da.dot(db)).epsilon(1e-12));
    CHECK(a.dot(db) == doctest::Approx(da.dot(db)).epsilon(1e-12));
    CHECK(a.squared_norm() == doctest::Approx(da.squaredNorm()).epsilon(1e-12));
    CHECK(((a - b).to_dense(64) - (da - db)).norm() < 1e-12);
    CHECK(((a + b).to_dense(64) - (da + db)).norm() < 1e-12);
    CHECK((axpy(b, 0.5, a).to_dense(64) - (0.5 * da + db)).norm() < 1e-12);
    ModelVector acc = db;
    a.add_to(acc, -2.0);
    CHECK((acc - (db - 2.0 * da)).norm() < 1e-12);
  }
}
