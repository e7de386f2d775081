#include <doctest.h>

#include <random>

#include "ndhinf/cmatrix.hpp"
#include "test_support.hpp"

using namespace ndhinf;
using namespace ndhinf::testing;

TEST_CASE("herm_eig on trivial matrices") {
  // zero matrix
  auto e0 = herm_eig(CMatrix::zero(3, 3));
  REQUIRE(e0.values.size() == 3);
  for (double v : e0.values) CHECK(std::abs(v) < 1e-14);

  // diagonal case
  auto ed = herm_eig(CMatrix::diag({cplx(1, 0), cplx(2, 0)}));
  CHECK(ed.values[0] == doctest::Approx(1.0));
  CHECK(ed.values[1] == doctest::Approx(2.0));

  // [[0,1],[1,0]] -> eigenvalues -1, 1 (characteristic polynomial l^2 - 1)
  auto es = herm_eig(CMatrix{{cplx(0, 0), cplx(1, 0)}, {cplx(1, 0), cplx(0, 0)}});
  CHECK(es.values[0] == doctest::Approx(-1.0));
  CHECK(es.values[1] == doctest::Approx(1.0));
}

TEST_CASE("herm_eig rejects non-Hermitian input") {
  CMatrix m{{cplx(0, 0), cplx(1, 0)}, {cplx(0, 0), cplx(0, 0)}};
  CHECK_THROWS_AS(herm_eig(m), NonHermitianError);
}

TEST_CASE("herm_eig reconstruction property on random Hermitian matrices") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 1 + trial % 12;
    CMatrix m = random_hermitian(rng, n);
    auto e = herm_eig(m);
    // V diag(lambda) V* == M
    CMatrix rec(n, n);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          rec(i, j) += e.values[k] * e.vectors(i, k) * std::conj(e.vectors(j, k));
    CHECK((rec - m).frobenius() <= 1e-8 * (1.0 + m.frobenius()));
    // M V - V diag residual
    CMatrix diff = m * e.vectors - e.vectors * CMatrix::diag(std::vector<cplx>(
                                                   e.values.begin(), e.values.end()));
    CHECK(diff.frobenius() <= 1e-9 * (1.0 + m.frobenius()));
    // unitarity
    CHECK((e.vectors.adjoint() * e.vectors - CMatrix::identity(n)).frobenius() < 1e-10);
    // ascending
    for (std::size_t k = 1; k < n; ++k) CHECK(e.values[k - 1] <= e.values[k] + 1e-12);
  }
}

TEST_CASE("herm_eig handles repeated eigenvalues") {
  std::mt19937_64 rng(7);
  // U diag(1,1,1,2,2) U* has a triple and a double eigenvalue.
  CMatrix u = random_unitary(rng, 5);
  CMatrix d = CMatrix::diag({1, 1, 1, 2, 2});
  CMatrix m = (u * d * u.adjoint()).hermitian_part(1e-8);
  auto e = herm_eig(m);
  CHECK(e.values[0] == doctest::Approx(1.0));
  CHECK(e.values[2] == doctest::Approx(1.0));
  CHECK(e.values[3] == doctest::Approx(2.0));
  CHECK((e.vectors.adjoint() * e.vectors - CMatrix::identity(5)).frobenius() < 1e-9);
}

TEST_CASE("min_eig basics") {
  CHECK(min_eig(CMatrix::identity(2)) == doctest::Approx(1.0));
  CHECK(min_eig(-CMatrix::identity(2)) == doctest::Approx(-1.0));
  // [[2,1],[1,2]] -> eigenvalues 1 and 3
  CMatrix m{{cplx(2, 0), cplx(1, 0)}, {cplx(1, 0), cplx(2, 0)}};
  CHECK(min_eig(m) == doctest::Approx(1.0));
}

TEST_CASE("largest_singular_value basics") {
  CHECK(largest_singular_value(CMatrix::zero(3, 2)) == doctest::Approx(0.0));
  std::mt19937_64 rng(3);
  CHECK(largest_singular_value(random_unitary(rng, 3)) == doctest::Approx(1.0));
  // [[0,2],[0,0]]: M*M = diag(0,4)
  CMatrix m{{cplx(0, 0), cplx(2, 0)}, {cplx(0, 0), cplx(0, 0)}};
  CHECK(largest_singular_value(m) == doctest::Approx(2.0));
}

TEST_CASE("spectral_radius basics") {
  CMatrix nil{{cplx(0, 0), cplx(1, 0)}, {cplx(0, 0), cplx(0, 0)}};
  CHECK(spectral_radius(nil) == doctest::Approx(0.0));
  CHECK(spectral_radius(CMatrix::diag({cplx(0.3, 0), cplx(-0.9, 0)})) ==
        doctest::Approx(0.9));
  // [[0,1],[-0.25,0]] has eigenvalues +-0.5i
  CMatrix m{{cplx(0, 0), cplx(1, 0)}, {cplx(-0.25, 0), cplx(0, 0)}};
  CHECK(spectral_radius(m) == doctest::Approx(0.5));
}

TEST_CASE("eigenvalues against characteristic roots on random matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + trial % 7;
    CMatrix m = random_matrix(rng, n, n);
    auto lams = eigenvalues(m);
    REQUIRE(lams.size() == n);
    // each reported eigenvalue must make M - lam I numerically singular
    for (const auto& l : lams) {
      CMatrix shifted = m;
      for (std::size_t i = 0; i < n; ++i) shifted(i, i) -= l;
      CHECK(smallest_singular_value(shifted) < 1e-7 * (1.0 + m.frobenius()));
    }
    // trace identity
    cplx tr(0, 0), sum(0, 0);
    for (std::size_t i = 0; i < n; ++i) tr += m(i, i);
    for (const auto& l : lams) sum += l;
    CHECK(std::abs(tr - sum) < 1e-8 * (1.0 + std::abs(tr)));
  }
}

TEST_CASE("solve_linear basics") {
  std::mt19937_64 rng(13);
  CMatrix rhs = random_matrix(rng, 3, 2);
  CHECK(rel_err(solve_linear(CMatrix::identity(3), rhs), rhs) < 1e-14);

  CMatrix twoI = 2.0 * CMatrix::identity(3);
  CHECK(rel_err(solve_linear(twoI, CMatrix::identity(3)),
                0.5 * CMatrix::identity(3)) < 1e-14);

  // [[1,1],[0,1]] x = e2  =>  x = (-1, 1)
  CMatrix m{{cplx(1, 0), cplx(1, 0)}, {cplx(0, 0), cplx(1, 0)}};
  CMatrix e2{{cplx(0, 0)}, {cplx(1, 0)}};
  CMatrix x = solve_linear(m, e2);
  CHECK(std::abs(x(0, 0) - cplx(-1, 0)) < 1e-14);
  CHECK(std::abs(x(1, 0) - cplx(1, 0)) < 1e-14);

  CHECK_THROWS_AS(solve_linear(CMatrix::zero(2, 2), CMatrix::identity(2)), SingularError);
}

TEST_CASE("solve_linear residual on random systems") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial % 10;
    CMatrix m = random_matrix(rng, n, n) + 0.5 * CMatrix::identity(n);
    CMatrix rhs = random_matrix(rng, n, 3);
    auto sol = solve_linear_full(m, rhs);
    CHECK((m * sol.x - rhs).frobenius() <= 1e-10 * (1.0 + rhs.frobenius()));
    CHECK(sol.rcond > 0.0);
  }
}

TEST_CASE("sigma equals sqrt of spectral radius of M*M") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t n = 2 + trial % 19;
    CMatrix m = random_matrix(rng, n, n);
    const double s = largest_singular_value(m);
    const double r = std::sqrt(spectral_radius(m.adjoint() * m));
    CHECK(std::abs(s - r) <= 1e-8 * (1.0 + s));
    // rho(M) <= sigma(M)
    CHECK(spectral_radius(m) <= s + 1e-8 * (1.0 + s));
  }
}

TEST_CASE("kernel and range bases") {
  std::mt19937_64 rng(23);
  // rank-1 map on C^3
  CMatrix col = random_matrix(rng, 3, 1);
  CMatrix row = random_matrix(rng, 1, 3);
  CMatrix m = col * row;
  CMatrix k = kernel_basis(m);
  REQUIRE(k.cols() == 2);
  CHECK((m * k).frobenius() < 1e-8 * m.frobenius());
  CHECK((k.adjoint() * k - CMatrix::identity(2)).frobenius() < 1e-10);
  CMatrix r = range_basis(m);
  REQUIRE(r.cols() == 1);

  // full-rank: empty kernel
  CHECK(kernel_basis(CMatrix::identity(4)).cols() == 0);
  // zero rows: kernel is everything
  CHECK(kernel_basis(CMatrix::zero(0, 3)).cols() == 3);
}

TEST_CASE("psd_sqrt") {
  std::mt19937_64 rng(29);
  CMatrix b = random_matrix(rng, 4, 4);
  CMatrix m = (b * b.adjoint()).hermitian_part(1e-9);
  CMatrix s = psd_sqrt(m);
  CHECK((s * s - m).frobenius() < 1e-9 * (1.0 + m.frobenius()));
}

TEST_CASE("zero-dimensional matrices behave") {
  CMatrix e(0, 0);
  CHECK(herm_eig(e).values.empty());
  CHECK(min_eig(e) == 0.0);
  CMatrix a(0, 3), b(3, 0);
  CHECK((b * a).rows() == 3);
  CHECK((b * a).cols() == 3);
  CHECK((b * a).frobenius() == 0.0);
}
