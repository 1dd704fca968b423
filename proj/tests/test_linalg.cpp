#include <doctest.h>

#include "mmdtl2/linalg.hpp"

using namespace mmdtl2;
using namespace mmdtl2::linalg;

TEST_SUITE("linalg") {
  TEST_CASE("identity is neutral for matmul") {
    const Matrix b = seeded_fill(3, 4, Distribution::standard_normal, 5);
    CHECK(matmul(Matrix::identity(3), b) == b);
  }

  TEST_CASE("cholesky of diag(4) is diag(2)") {
    const Matrix a = Matrix::diagonal(std::vector<double>{4.0, 4.0, 4.0});
    CHECK(cholesky(a).lower == Matrix::diagonal(std::vector<double>{2.0, 2.0, 2.0}));
  }

  TEST_CASE("cholesky rejects an indefinite matrix") {
    const Matrix a{{1.0, 2.0}, {2.0, 1.0}};
    CHECK_THROWS_AS(cholesky(a), NotPositiveDefinite);
  }

  TEST_CASE("seeded_fill is deterministic") {
    CHECK(seeded_fill(2, 2, Distribution::uniform01, 42) == seeded_fill(2, 2, Distribution::uniform01, 42));
    CHECK_FALSE(seeded_fill(2, 2, Distribution::uniform01, 42) == seeded_fill(2, 2, Distribution::uniform01, 43));
    const Matrix u = seeded_fill(10, 10, Distribution::uniform01, 1);
    for (double v : u.values()) {
      CHECK(v >= 0.0);
      CHECK(v < 1.0);
    }
  }

  TEST_CASE("SplitMix64 reference outputs") {
    SplitMix64 rng(0);
    CHECK(rng.next() == 0xE220A8397B1DCDAFULL);
    CHECK(rng.next() == 0x6E789E6AA1B965F4ULL);
  }

  TEST_CASE("matmul is associative on random triples") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Matrix a = seeded_fill(3, 4, Distribution::standard_normal, seed);
      const Matrix b = seeded_fill(4, 5, Distribution::standard_normal, seed + 100);
      const Matrix c = seeded_fill(5, 2, Distribution::standard_normal, seed + 200);
      const Matrix left = matmul(matmul(a, b), c);
      const Matrix right = matmul(a, matmul(b, c));
      CHECK(max_abs_diff(left, right) <= 1e-12 * (1.0 + norm_inf(left)));
    }
  }

  TEST_CASE("transpose of a product") {
    const Matrix a = seeded_fill(3, 4, Distribution::standard_normal, 1);
    const Matrix b = seeded_fill(4, 2, Distribution::standard_normal, 2);
    CHECK(max_abs_diff(matmul(a, b).transpose(), matmul(b.transpose(), a.transpose())) < 1e-14);
    CHECK(max_abs_diff(matmul_tn(a.transpose(), b), matmul(a, b)) == 0.0);
    CHECK(max_abs_diff(matmul_nt(a, b.transpose()), matmul(a, b)) == 0.0);
  }

  TEST_CASE("shape mismatch is reported") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), InputError);
    CHECK_THROWS_AS(solve_factored(cholesky(Matrix::identity(2)), Matrix(3, 1)), InputError);
  }

  TEST_CASE("solve_factored and lu_solve satisfy the system") {
    const Matrix g = seeded_fill(5, 5, Distribution::standard_normal, 9);
    Matrix spd = matmul_nt(g, g);
    spd += Matrix::identity(5);
    const Matrix b = seeded_fill(5, 3, Distribution::standard_normal, 10);
    const Matrix x = solve_factored(cholesky(spd), b);
    CHECK(max_abs_diff(matmul(spd, x), b) < 1e-10);
    const Matrix y = lu_solve(g, b);
    CHECK(max_abs_diff(matmul(g, y), b) < 1e-9);
  }

  TEST_CASE("norms") {
    const Matrix a{{1.0, -3.0}, {2.0, 0.5}};
    CHECK(norm_inf(a) == 3.0);
    CHECK(trace(a) == 1.5);
    CHECK(squared_norm(std::vector<double>{3.0, 4.0}) == 25.0);
    CHECK(asymmetry(a) == doctest::Approx(1.25));
  }

  TEST_CASE("shuffle is a deterministic permutation") {
    std::vector<std::size_t> a(20), b(20);
    for (std::size_t i = 0; i < 20; ++i) a[i] = b[i] = i;
    SplitMix64 r1(3), r2(3);
    seeded_shuffle(a, r1);
    seeded_shuffle(b, r2);
    CHECK(a == b);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 20; ++i) CHECK(sorted[i] == i);
  }

  TEST_CASE("allocation guard") {
    AllocationGuard outer(10);
    CHECK_NOTHROW(Matrix(10, 1000));
    CHECK_THROWS_AS(Matrix(11, 11), AllocationGuardViolation);
    {
      AllocationGuard inner(3);
      CHECK_THROWS_AS(Matrix(4, 4), AllocationGuardViolation);
    }
    CHECK_NOTHROW(Matrix(4, 4));
    CHECK(outer.peak_square_side() == 11);  // refused requests count too
  }
}
