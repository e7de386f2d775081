#include <doctest.h>

#include <random>

#include "ndhinf/grsys.hpp"
#include "test_support.hpp"

using namespace ndhinf;
using namespace ndhinf::grsys;
using namespace ndhinf::testing;

namespace {

Realization random_plant(std::mt19937_64& rng, std::vector<std::size_t> dims, IoSplit io,
                         double scale = 0.8, bool zero_d22 = true) {
  Realization g;
  g.space.dims = std::move(dims);
  const std::size_t n = g.space.total_dim();
  g.a = random_with_norm(rng, n, n, scale);
  g.b = random_matrix(rng, n, io.in(), 0.7);
  g.c = random_matrix(rng, io.out(), n, 0.7);
  g.d = random_matrix(rng, io.out(), io.in(), 0.5);
  g.io = io;
  if (zero_d22) g.d.set_block(io.nz, io.nw, CMatrix(io.ny, io.nu));
  g.validate();
  return g;
}

PointPolydisk random_point(std::mt19937_64& rng, std::size_t d, double radius = 0.9) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointPolydisk z(d);
  for (auto& v : z) {
    const double r = radius * std::sqrt(u(rng));
    const double th = 2.0 * M_PI * u(rng);
    v = cplx(r * std::cos(th), r * std::sin(th));
  }
  return z;
}

}  // namespace

TEST_CASE("z_pencil assembly") {
  StructuredSpace s11{{1, 1}};
  CHECK(z_pencil(s11, {cplx(0, 0), cplx(0, 0)}).frobenius() == 0.0);

  StructuredSpace s21{{2, 1}};
  CHECK((z_pencil(s21, {cplx(1, 0), cplx(1, 0)}) - CMatrix::identity(3)).frobenius() <
        1e-15);

  StructuredSpace s12{{1, 2}};
  CMatrix zp = z_pencil(s12, {cplx(0, 1), cplx(0.5, 0)});
  CHECK(std::abs(zp(0, 0) - cplx(0, 1)) < 1e-15);
  CHECK(std::abs(zp(1, 1) - cplx(0.5, 0)) < 1e-15);
  CHECK(std::abs(zp(2, 2) - cplx(0.5, 0)) < 1e-15);
}

TEST_CASE("eval_transfer basics") {
  std::mt19937_64 rng(31);
  auto g = random_plant(rng, {2, 2}, IoSplit{2, 1, 1, 1});
  // z = 0 gives D
  CHECK(rel_err(eval_transfer(g, {cplx(0, 0), cplx(0, 0)}), g.d) < 1e-14);

  // scalar resolvent: A=0.5, B=C=1, D=0 at z=0.5 -> 0.5/(1-0.25) = 2/3
  Realization s = Realization::single_block(StructuredSpace{{1}}, CMatrix{{cplx(0.5, 0)}},
                                            CMatrix{{cplx(1, 0)}}, CMatrix{{cplx(1, 0)}},
                                            CMatrix{{cplx(0, 0)}});
  const cplx v = eval_transfer(s, {cplx(0.5, 0)})(0, 0);
  CHECK(std::abs(v - cplx(2.0 / 3.0, 0)) < 1e-14);

  // C = 0 gives D for all z
  auto g2 = g;
  g2.c = CMatrix(g.io.out(), g.order());
  CHECK(rel_err(eval_transfer(g2, random_point(rng, 2)), g2.d) < 1e-14);
}

TEST_CASE("eval_transfer reports singular pencils") {
  Realization s = Realization::single_block(StructuredSpace{{1}}, CMatrix{{cplx(1, 0)}},
                                            CMatrix{{cplx(1, 0)}}, CMatrix{{cplx(1, 0)}},
                                            CMatrix{{cplx(0, 0)}});
  CHECK_THROWS_AS(eval_transfer(s, {cplx(1, 0)}), SingularPencilError);
}

TEST_CASE("eval_nc basics") {
  std::mt19937_64 rng(37);
  auto g = random_plant(rng, {2, 1}, IoSplit{1, 1, 1, 1});

  // all deltas zero -> D ⊗ I
  OperatorTuple zeros{{CMatrix(3, 3), CMatrix(3, 3)}};
  CHECK(rel_err(eval_nc(g, zeros), kron(g.d, CMatrix::identity(3))) < 1e-14);

  // scalar tuple reduces to the commutative evaluation
  const auto z = random_point(rng, 2);
  OperatorTuple scalars{{z[0] * CMatrix::identity(3), z[1] * CMatrix::identity(3)}};
  CHECK(rel_err(eval_nc(g, scalars), kron(eval_transfer(g, z), CMatrix::identity(3))) <
        1e-12);

  // d=1 nilpotent shift with A=B=C=1, D=0: delta (I - delta)^{-1} = delta
  Realization s = Realization::single_block(StructuredSpace{{1}}, CMatrix{{cplx(1, 0)}},
                                            CMatrix{{cplx(1, 0)}}, CMatrix{{cplx(1, 0)}},
                                            CMatrix{{cplx(0, 0)}});
  CMatrix shift(2, 2);
  shift(0, 1) = 1.0;
  CHECK(rel_err(eval_nc(s, OperatorTuple{{shift}}), shift) < 1e-14);
}

TEST_CASE("close_loop trivial cases") {
  std::mt19937_64 rng(41);
  auto g = random_plant(rng, {2, 1}, IoSplit{2, 1, 1, 1});

  // static zero controller
  Realization k0;
  k0.space.dims = {0, 0};
  k0.a = CMatrix(0, 0);
  k0.b = CMatrix(0, g.io.ny);
  k0.c = CMatrix(g.io.nu, 0);
  k0.d = CMatrix(g.io.nu, g.io.ny);
  k0.io = IoSplit{g.io.ny, 0, g.io.nu, 0};
  auto cl = close_loop(g, k0);
  CHECK(rel_err(cl.a, g.a) < 1e-15);
  CHECK(rel_err(cl.b, g.b1()) < 1e-15);
  CHECK(rel_err(cl.c, g.c1()) < 1e-15);
  CHECK(rel_err(cl.d, g.d11()) < 1e-15);

  // disconnected loop: B2 = 0, C2 = 0 -> spectrum is the union
  auto gd = g;
  gd.b.set_block(0, gd.io.nw, CMatrix(gd.order(), gd.io.nu));
  gd.c.set_block(gd.io.nz, 0, CMatrix(gd.io.ny, gd.order()));
  auto k = random_plant(rng, {1, 1}, IoSplit{g.io.ny, 0, g.io.nu, 0});
  auto cld = close_loop(gd, k);
  cplx prod1(1, 0), prod2(1, 0);
  for (auto& l : eigenvalues(cld.a)) prod1 *= (cplx(2, 0) - l);
  for (auto& l : eigenvalues(gd.a)) prod2 *= (cplx(2, 0) - l);
  for (auto& l : eigenvalues(k.a)) prod2 *= (cplx(2, 0) - l);
  CHECK(std::abs(prod1 - prod2) < 1e-8 * (1.0 + std::abs(prod2)));
}

TEST_CASE("close_loop rejects nonzero D22") {
  std::mt19937_64 rng(43);
  auto g = random_plant(rng, {1, 1}, IoSplit{1, 1, 1, 1}, 0.8, false);
  g.d(g.io.nz, g.io.nw) = 0.3;
  auto k = random_plant(rng, {1, 1}, IoSplit{1, 0, 1, 0});
  CHECK_THROWS_AS(close_loop(g, k), D22NotZeroError);
}

TEST_CASE("close_loop matches the LFT formula at random points") {
  std::mt19937_64 rng(47);
  int points = 0;
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t d = 1 + trial % 3;
    std::vector<std::size_t> pdims(d), kdims(d);
    for (auto& v : pdims) v = 1 + rng() % 2;
    for (auto& v : kdims) v = 1 + rng() % 2;
    IoSplit io{1 + rng() % 2, 1 + rng() % 2, 1 + rng() % 2, 1 + rng() % 2};
    auto g = random_plant(rng, pdims, io, 0.7);
    auto k = random_plant(rng, kdims, IoSplit{io.ny, 0, io.nu, 0}, 0.7);
    auto cl = close_loop(g, k);

    for (int pt = 0; pt < 9; ++pt, ++points) {
      const auto z = random_point(rng, d, 0.8);
      const CMatrix gz = eval_transfer(g, z);
      const CMatrix kz = eval_transfer(k, z);
      const CMatrix g11 = gz.block(0, 0, io.nz, io.nw);
      const CMatrix g12 = gz.block(0, io.nw, io.nz, io.nu);
      const CMatrix g21 = gz.block(io.nz, 0, io.ny, io.nw);
      const CMatrix g22 = gz.block(io.nz, io.nw, io.ny, io.nu);
      const CMatrix inv = inverse(CMatrix::identity(io.ny) - g22 * kz);
      const CMatrix want = g11 + g12 * kz * inv * g21;
      CHECK((eval_transfer(cl, z) - want).frobenius() <= 1e-9 * (1.0 + want.frobenius()));
    }
  }
  CHECK(points >= 50);
}

TEST_CASE("series, parallel, invert") {
  std::mt19937_64 rng(53);
  auto g = random_plant(rng, {2, 1}, IoSplit{2, 0, 2, 0});

  // series with an identity feedthrough leaves the transfer unchanged
  auto id = Realization::constant(2, CMatrix::identity(2));
  auto s = series(g, id);
  for (int pt = 0; pt < 10; ++pt) {
    const auto z = random_point(rng, 2);
    CHECK(rel_err(eval_transfer(s, z), eval_transfer(g, z)) < 1e-12);
  }

  // parallel(G, -G) is zero
  auto gneg = g;
  gneg.c = -g.c;
  gneg.d = -g.d;
  auto p = parallel(g, gneg);
  for (int pt = 0; pt < 5; ++pt) {
    const auto z = random_point(rng, 2);
    CHECK(eval_transfer(p, z).frobenius() < 1e-12);
  }

  // invert of a D-only realization
  auto dd = Realization::constant(2, 2.0 * CMatrix::identity(2));
  auto di = invert(dd);
  CHECK(rel_err(eval_transfer(di, random_point(rng, 2)), 0.5 * CMatrix::identity(2)) <
        1e-14);
  CHECK_THROWS_AS(invert(Realization::constant(2, CMatrix(2, 2))), SingularError);

  // invert round trip on a random square system
  auto q = random_plant(rng, {1, 1}, IoSplit{2, 0, 2, 0});
  q.d = q.d + 2.0 * CMatrix::identity(2);
  auto qi = invert(q);
  // series(q, qi) evaluates to the identity: qi(z) q(z) = I
  for (int pt = 0; pt < 5; ++pt) {
    const auto z = random_point(rng, 2);
    CHECK(rel_err(eval_transfer(qi, z) * eval_transfer(q, z), CMatrix::identity(2)) <
          1e-9);
  }
}

TEST_CASE("hautus_stable_grid examples") {
  // A = 0 passes
  CHECK(hautus_stable_grid(CMatrix(2, 2), StructuredSpace{{1, 1}}).pass);

  // d=1, A=1: pencil 1 - z vanishes at z = 1
  auto v1 = hautus_stable_grid(CMatrix{{cplx(1, 0)}}, StructuredSpace{{1}});
  CHECK(!v1.pass);
  CHECK(std::abs(v1.worst_point[0] - cplx(1, 0)) < 1e-9);

  // d=2, A = diag(0.5, 2): 1 - 2 z2 = 0 at z2 = 0.5 inside the polydisk
  auto v2 = hautus_stable_grid(CMatrix::diag({cplx(0.5, 0), cplx(2, 0)}),
                               StructuredSpace{{1, 1}});
  CHECK(!v2.pass);
  CHECK(std::abs(v2.worst_point[1] - cplx(0.5, 0)) < 1e-9);
  CHECK(v2.min_singular < 1e-9);

  // threaded sweep gives the same verdict deterministically
  std::mt19937_64 rng(71);
  CMatrix a = random_with_norm(rng, 4, 4, 0.95);
  auto s1 = hautus_stable_grid(a, StructuredSpace{{2, 2}}, 32, 1);
  auto s4 = hautus_stable_grid(a, StructuredSpace{{2, 2}}, 32, 4);
  CHECK(s1.pass == s4.pass);
  CHECK(s1.min_singular == doctest::Approx(s4.min_singular));
}

TEST_CASE("scaled_stable examples and implication") {
  std::mt19937_64 rng(59);

  // A = 0
  auto x0 = scaled_stable(CMatrix(2, 2), StructuredSpace{{1, 1}});
  REQUIRE(x0.has_value());

  // contraction: feasible
  CMatrix a = random_with_norm(rng, 4, 4, 0.9);
  StructuredSpace sp{{2, 2}};
  auto xs = scaled_stable(a, sp);
  REQUIRE(xs.has_value());
  CHECK(min_eig(*xs) > 0.0);
  CHECK(max_eig((a * *xs * a.adjoint() - *xs).hermitian_part(1e-8)) < 0.0);

  // d=1 single full block: any Schur-stable A is similarity-contractible
  CMatrix schur{{cplx(0, 0), cplx(3, 0)}, {cplx(0, 0), cplx(0.5, 0)}};
  auto xschur = scaled_stable(schur, StructuredSpace{{2}});
  REQUIRE(xschur.has_value());

  // scaled stable implies passing the grid test and sigma(Q^-1 A Q) < 1
  auto verdict = hautus_stable_grid(a, sp);
  CHECK(verdict.pass);
  const CMatrix q = psd_sqrt(*xs);
  CHECK(largest_singular_value(solve_linear(q, a * q)) < 1.0);

  // unstable d=1: no witness
  CHECK(!scaled_stable(CMatrix{{cplx(2, 0)}}, StructuredSpace{{1}}).has_value());
}

TEST_CASE("scaled_stable implies nc pencil invertibility") {
  std::mt19937_64 rng(61);
  CMatrix a = random_with_norm(rng, 3, 3, 0.85);
  StructuredSpace sp{{2, 1}};
  auto x = scaled_stable(a, sp);
  REQUIRE(x.has_value());
  Realization g = Realization::single_block(sp, a, CMatrix::identity(3),
                                            CMatrix::identity(3), CMatrix(3, 3));
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + trial % 5;
    OperatorTuple t;
    for (std::size_t j = 0; j < sp.var_count(); ++j)
      t.deltas.push_back(random_with_norm(rng, k, k, 0.999));
    CHECK(t.is_contractive());
    CHECK_NOTHROW(eval_nc(g, t));
  }
}

TEST_CASE("assemble_lft") {
  std::mt19937_64 rng(67);
  const std::size_t ns = 2;

  // zero-dimensional uncertainty returns the nominal 1-D plant
  LftParts p0;
  p0.a_uu = CMatrix(0, 0);
  p0.a_us = CMatrix(0, ns);
  p0.a_su = CMatrix(ns, 0);
  p0.a_ss = random_with_norm(rng, ns, ns, 0.8);
  p0.b_u1 = CMatrix(0, 1);
  p0.b_u2 = CMatrix(0, 1);
  p0.b_s1 = random_matrix(rng, ns, 1);
  p0.b_s2 = random_matrix(rng, ns, 1);
  p0.c_1u = CMatrix(1, 0);
  p0.c_1s = random_matrix(rng, 1, ns);
  p0.c_2u = CMatrix(1, 0);
  p0.c_2s = random_matrix(rng, 1, ns);
  p0.d11 = random_matrix(rng, 1, 1);
  p0.d12 = random_matrix(rng, 1, 1);
  p0.d21 = random_matrix(rng, 1, 1);
  p0.d22 = CMatrix(1, 1);
  auto g0 = assemble_lft(p0, StructuredSpace{{}});
  CHECK(g0.space.dims.size() == 1);
  CHECK(rel_err(g0.a, p0.a_ss) < 1e-15);

  // random parts: aggregate evaluation equals the nested two-stage formula
  const std::size_t nu_dim = 2;
  LftParts p;
  p.a_uu = random_with_norm(rng, nu_dim, nu_dim, 0.5);
  p.a_us = random_matrix(rng, nu_dim, ns, 0.5);
  p.a_su = random_matrix(rng, ns, nu_dim, 0.5);
  p.a_ss = random_with_norm(rng, ns, ns, 0.6);
  p.b_u1 = random_matrix(rng, nu_dim, 1, 0.5);
  p.b_u2 = random_matrix(rng, nu_dim, 1, 0.5);
  p.b_s1 = random_matrix(rng, ns, 1, 0.5);
  p.b_s2 = random_matrix(rng, ns, 1, 0.5);
  p.c_1u = random_matrix(rng, 1, nu_dim, 0.5);
  p.c_1s = random_matrix(rng, 1, ns, 0.5);
  p.c_2u = random_matrix(rng, 1, nu_dim, 0.5);
  p.c_2s = random_matrix(rng, 1, ns, 0.5);
  p.d11 = random_matrix(rng, 1, 1, 0.5);
  p.d12 = random_matrix(rng, 1, 1, 0.5);
  p.d21 = random_matrix(rng, 1, 1, 0.5);
  p.d22 = CMatrix(1, 1);
  StructuredSpace usp{{1, 1}};
  auto g = assemble_lft(p, usp);
  REQUIRE(g.space.dims.size() == 3);

  for (int pt = 0; pt < 8; ++pt) {
    const auto zu = random_point(rng, 2, 0.7);
    const cplx lam = random_point(rng, 1, 0.7)[0];

    // stage 1: close the shift variable analytically
    const CMatrix res = inverse(CMatrix::identity(ns) - lam * p.a_ss);
    auto coef = [&](const CMatrix& left, const CMatrix& corner, const CMatrix& right) {
      return corner + lam * left * res * right;
    };
    const CMatrix guu = coef(p.a_us, p.a_uu, p.a_su);
    const CMatrix gu1 = coef(p.a_us, p.b_u1, p.b_s1);
    const CMatrix gu2 = coef(p.a_us, p.b_u2, p.b_s2);
    const CMatrix g1u = coef(p.c_1s, p.c_1u, p.a_su);
    const CMatrix g11 = coef(p.c_1s, p.d11, p.b_s1);
    const CMatrix g12 = coef(p.c_1s, p.d12, p.b_s2);
    const CMatrix g2u = coef(p.c_2s, p.c_2u, p.a_su);
    const CMatrix g21 = coef(p.c_2s, p.d21, p.b_s1);
    const CMatrix g22 = coef(p.c_2s, p.d22, p.b_s2);

    // stage 2: close the uncertainty loop with Z(delta_U)
    const CMatrix zd = z_pencil(usp, zu);
    const CMatrix resu = inverse(CMatrix::identity(nu_dim) - zd * guu);
    const CMatrix top = vcat(hcat(g11, g12), hcat(g21, g22));
    const CMatrix left = vcat(g1u, g2u);
    const CMatrix right = hcat(gu1, gu2);
    const CMatrix want = top + left * resu * zd * right;

    PointPolydisk zfull = zu;
    zfull.push_back(lam);
    CHECK((eval_transfer(g, zfull) - want).frobenius() <=
          1e-9 * (1.0 + want.frobenius()));
  }

  // decoupled: zero cross blocks make the value independent of delta_U
  LftParts pd = p;
  pd.a_us = CMatrix(nu_dim, ns);
  pd.a_su = CMatrix(ns, nu_dim);
  pd.c_1u = CMatrix(1, nu_dim);
  pd.c_2u = CMatrix(1, nu_dim);
  pd.b_u1 = CMatrix(nu_dim, 1);
  pd.b_u2 = CMatrix(nu_dim, 1);
  auto gdec = assemble_lft(pd, usp);
  const cplx lam = cplx(0.3, 0.2);
  PointPolydisk za{cplx(0.1, 0), cplx(0.2, 0), lam};
  PointPolydisk zb{cplx(-0.5, 0.2), cplx(0.6, 0), lam};
  CHECK(rel_err(eval_transfer(gdec, za), eval_transfer(gdec, zb)) < 1e-12);
}
