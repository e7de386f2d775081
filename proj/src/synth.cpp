#include "ndhinf/synth.hpp"

#include <cmath>

namespace ndhinf::synth {

namespace {

using lmi::LmiProblem;
using lmi::Sense;
using lmi::UnknownSpec;

// Kernel-form feasibility: K*(A* X A - X)K < 0 with X >= I in the commutant
// (homogeneous, so X >= I is no loss).  K spans ker C2.
bool kernel_form_detectable(const CMatrix& c2, const CMatrix& a,
                            const StructuredSpace& space) {
  const std::size_t n = a.rows();
  const CMatrix k = kernel_basis(c2.rows() ? c2 : CMatrix(0, n));
  if (k.cols() == 0) return true;
  LmiProblem p;
  p.unknowns.push_back(UnknownSpec::commutant("X", space.z_structure()));
  p.constraints.push_back(
      {"normalize", Sense::positive_semidefinite,
       [n](const std::vector<CMatrix>& v) { return v[0] - CMatrix::identity(n); }});
  p.constraints.push_back(
      {"kernel", Sense::strict_negative, [a, k](const std::vector<CMatrix>& v) {
         return k.adjoint() * (a.adjoint() * v[0] * a - v[0]) * k;
       }});
  return lmi::solve_feasibility(p).has_value();
}

bool kernel_form_stabilizable(const CMatrix& a, const CMatrix& b2,
                              const StructuredSpace& space) {
  const std::size_t n = a.rows();
  const CMatrix w = kernel_basis(b2.cols() ? b2.adjoint() : CMatrix(0, n));
  if (w.cols() == 0) return true;
  LmiProblem p;
  p.unknowns.push_back(UnknownSpec::commutant("Y", space.z_structure()));
  p.constraints.push_back(
      {"normalize", Sense::positive_semidefinite,
       [n](const std::vector<CMatrix>& v) { return v[0] - CMatrix::identity(n); }});
  p.constraints.push_back(
      {"kernel", Sense::strict_negative, [a, w](const std::vector<CMatrix>& v) {
         return w.adjoint() * (a * v[0] * a.adjoint() - v[0]) * w;
       }});
  return lmi::solve_feasibility(p).has_value();
}

}  // namespace

std::optional<CMatrix> detectable_lmi(const CMatrix& c2, const CMatrix& a,
                                      const StructuredSpace& space) {
  const std::size_t n = a.rows();
  if (a.cols() != n || space.total_dim() != n)
    throw DimensionError("detectable_lmi: A/space mismatch");
  if (c2.rows() > 0 && c2.cols() != n)
    throw DimensionError("detectable_lmi: C2 column mismatch");
  const CMatrix gram = (c2.rows() > 0) ? (c2.adjoint() * c2).hermitian_part(1e-9)
                                       : CMatrix(n, n);

  LmiProblem p;
  p.unknowns.push_back(UnknownSpec::commutant("X", space.z_structure()));
  p.constraints.push_back({"positive", Sense::strict_positive,
                           [](const std::vector<CMatrix>& v) { return v[0]; }});
  p.constraints.push_back(
      {"stein", Sense::strict_negative, [a, gram](const std::vector<CMatrix>& v) {
         return a.adjoint() * v[0] * a - v[0] - gram;
       }});
  // Solutions survive downscaling, so capping the certificate is harmless
  // and keeps it usable in later constructions.
  p.constraints.push_back(
      {"cap", Sense::positive_semidefinite, [n](const std::vector<CMatrix>& v) {
         return 1e4 * CMatrix::identity(n) - v[0];
       }});
  auto sol = lmi::solve_feasibility(p);

  const bool kernel_verdict = kernel_form_detectable(c2, a, space);
  if (kernel_verdict != sol.has_value())
    throw Error("detectable_lmi: kernel-form and completed-form verdicts disagree");
  if (!sol) return std::nullopt;
  return sol->assignment.at("X");
}

std::optional<CMatrix> stabilizable_lmi(const CMatrix& a, const CMatrix& b2,
                                        const StructuredSpace& space) {
  const std::size_t n = a.rows();
  if (a.cols() != n || space.total_dim() != n)
    throw DimensionError("stabilizable_lmi: A/space mismatch");
  if (b2.cols() > 0 && b2.rows() != n)
    throw DimensionError("stabilizable_lmi: B2 row mismatch");
  const CMatrix gram = (b2.cols() > 0) ? (b2 * b2.adjoint()).hermitian_part(1e-9)
                                       : CMatrix(n, n);

  LmiProblem p;
  p.unknowns.push_back(UnknownSpec::commutant("Y", space.z_structure()));
  p.constraints.push_back({"positive", Sense::strict_positive,
                           [](const std::vector<CMatrix>& v) { return v[0]; }});
  p.constraints.push_back(
      {"stein", Sense::strict_negative, [a, gram](const std::vector<CMatrix>& v) {
         return a * v[0] * a.adjoint() - v[0] - gram;
       }});
  p.constraints.push_back(
      {"cap", Sense::positive_semidefinite, [n](const std::vector<CMatrix>& v) {
         return 1e4 * CMatrix::identity(n) - v[0];
       }});
  auto sol = lmi::solve_feasibility(p);

  const bool kernel_verdict = kernel_form_stabilizable(a, b2, space);
  if (kernel_verdict != sol.has_value())
    throw Error("stabilizable_lmi: kernel-form and completed-form verdicts disagree");
  if (!sol) return std::nullopt;
  return sol->assignment.at("Y");
}

CMatrix gain_from_certificate(const CMatrix& a, const CMatrix& b2, const CMatrix& y) {
  const std::size_t n = a.rows();
  const std::size_t nu = b2.cols();
  if (nu == 0 || b2.max_abs() == 0.0) {
    // nothing to feed back; the certificate says A itself is scaled stable
    if (max_eig((a * y * a.adjoint() - y).hermitian_part(1e-8)) >= 0.0)
      throw ConstructionFailedError("gain_from_certificate: certificate invalid");
    return CMatrix(nu, n);
  }
  // Equilibrated congruence of [[-Y, A],[A*, -Y^{-1}]] by diag(Y^{-1/2},
  // Y^{1/2}); the completing J is invariant under congruence of the data.
  const CMatrix ysq = psd_sqrt(y, 1e-8);
  const CMatrix ysqinv = inverse(ysq);
  const CMatrix at = ysqinv * a * ysq;
  const CMatrix h =
      vcat(hcat(-CMatrix::identity(n), at), hcat(at.adjoint(), -CMatrix::identity(n)))
          .hermitian_part(1e-8);
  const CMatrix r = hcat(b2.adjoint() * ysqinv.adjoint(), CMatrix(nu, n));
  const CMatrix s = hcat(CMatrix(n, n), ysq);
  auto j = lmi::finsler_complete(h, r, s);
  if (!j) throw ConstructionFailedError("gain_from_certificate: certificate invalid");
  const CMatrix f = j->adjoint();
  const CMatrix acl = a + b2 * f;
  if (max_eig((acl * y * acl.adjoint() - y).hermitian_part(1e-8)) >= 0.0)
    throw ConstructionFailedError("gain_from_certificate: verification failed");
  return f;
}

CMatrix injection_from_certificate(const CMatrix& c2, const CMatrix& a, const CMatrix& x) {
  const std::size_t n = a.rows();
  const std::size_t ny = c2.rows();
  if (ny == 0 || c2.max_abs() == 0.0) {
    if (max_eig((a.adjoint() * x * a - x).hermitian_part(1e-8)) >= 0.0)
      throw ConstructionFailedError("injection_from_certificate: certificate invalid");
    return CMatrix(n, ny);
  }
  // Dual equilibration of [[-X^{-1}, A],[A*, -X]] by diag(X^{1/2}, X^{-1/2}).
  const CMatrix xsq = psd_sqrt(x, 1e-8);
  const CMatrix xsqinv = inverse(xsq);
  const CMatrix at = xsq * a * xsqinv;
  const CMatrix h =
      vcat(hcat(-CMatrix::identity(n), at), hcat(at.adjoint(), -CMatrix::identity(n)))
          .hermitian_part(1e-8);
  const CMatrix r = hcat(CMatrix(ny, n), c2 * xsqinv);
  const CMatrix s = hcat(xsq, CMatrix(n, n));
  auto j = lmi::finsler_complete(h, r, s);
  if (!j)
    throw ConstructionFailedError("injection_from_certificate: certificate invalid");
  const CMatrix l = *j;
  const CMatrix acl = a + l * c2;
  if (max_eig((acl.adjoint() * x * acl - x).hermitian_part(1e-8)) >= 0.0)
    throw ConstructionFailedError("injection_from_certificate: verification failed");
  return l;
}

std::optional<GainPair> make_gains(const CMatrix& a, const CMatrix& b2, const CMatrix& c2,
                                   const StructuredSpace& space) {
  auto y = stabilizable_lmi(a, b2, space);
  if (!y) return std::nullopt;
  auto x = detectable_lmi(c2, a, space);
  if (!x) return std::nullopt;
  GainPair g;
  g.f = gain_from_certificate(a, b2, *y);
  g.l = injection_from_certificate(c2, a, *x);
  g.f_witness = *y;
  g.l_witness = *x;
  return g;
}

Realization observer_controller(const CMatrix& a, const CMatrix& b2, const CMatrix& c2,
                                const StructuredSpace& space, const GainPair& gains) {
  const std::size_t n = a.rows();
  if (gains.f.cols() != n || gains.l.rows() != n)
    throw DimensionError("observer_controller: gain dimensions");
  Realization k;
  k.space = space;
  k.a = a + b2 * gains.f + gains.l * c2;
  k.b = -gains.l;
  k.c = gains.f;
  k.d = CMatrix(gains.f.rows(), gains.l.cols());
  k.io = grsys::IoSplit{gains.l.cols(), 0, gains.f.rows(), 0};
  k.validate();
  return k;
}

// ---------------------------------------------------------------------------
// Scaled H-infinity
// ---------------------------------------------------------------------------

std::optional<HinfCertificate> hinf_feasibility(const Realization& g) {
  g.validate();
  if (g.d22().max_abs() > 1e-12 * (1.0 + g.d.max_abs()))
    throw grsys::D22NotZeroError("hinf_feasibility: D22 must vanish");
  const CMatrix a = g.a, b1 = g.b1(), b2 = g.b2();
  const CMatrix c1 = g.c1(), c2 = g.c2(), d11 = g.d11(), d12 = g.d12(), d21 = g.d21();
  const std::size_t n = g.order(), nw = g.io.nw, nz = g.io.nz;

  const CMatrix nc = kernel_basis(hcat(b2.adjoint(), d12.adjoint()));
  const CMatrix no = kernel_basis(hcat(c2, d21));
  const CMatrix conj_c = block_diag({nc, CMatrix::identity(nw)});
  const CMatrix conj_o = block_diag({no, CMatrix::identity(nz)});

  LmiProblem p;
  p.unknowns.push_back(UnknownSpec::commutant("X", g.space.z_structure()));
  p.unknowns.push_back(UnknownSpec::commutant("Y", g.space.z_structure()));
  p.constraints.push_back({"X-positive", Sense::strict_positive,
                           [](const std::vector<CMatrix>& v) { return v[0]; }});
  p.constraints.push_back({"Y-positive", Sense::strict_positive,
                           [](const std::vector<CMatrix>& v) { return v[1]; }});
  p.constraints.push_back(
      {"Y-LMI", Sense::strict_negative, [=](const std::vector<CMatrix>& v) {
         const CMatrix& y = v[1];
         const CMatrix inner =
             vcat({hcat({a * y * a.adjoint() - y, a * y * c1.adjoint(), b1}),
                   hcat({c1 * y * a.adjoint(),
                         c1 * y * c1.adjoint() - CMatrix::identity(nz), d11}),
                   hcat({b1.adjoint(), d11.adjoint(), -CMatrix::identity(nw)})});
         return conj_c.adjoint() * inner * conj_c;
       }});
  p.constraints.push_back(
      {"X-LMI", Sense::strict_negative, [=](const std::vector<CMatrix>& v) {
         const CMatrix& x = v[0];
         const CMatrix inner =
             vcat({hcat({a.adjoint() * x * a - x, a.adjoint() * x * b1, c1.adjoint()}),
                   hcat({b1.adjoint() * x * a,
                         b1.adjoint() * x * b1 - CMatrix::identity(nw), d11.adjoint()}),
                   hcat({c1, d11, -CMatrix::identity(nz)})});
         return conj_o.adjoint() * inner * conj_o;
       }});
  p.constraints.push_back(
      {"coupling", Sense::positive_semidefinite, [n](const std::vector<CMatrix>& v) {
         return vcat(hcat(v[0], CMatrix::identity(n)),
                     hcat(CMatrix::identity(n), v[1]));
       }});

  auto sol = lmi::solve_feasibility(p);
  if (!sol) return std::nullopt;

  HinfCertificate cert;
  cert.x = sol->assignment.at("X");
  cert.y = sol->assignment.at("Y");
  std::vector<CMatrix> vals{cert.x, cert.y};
  for (const auto& c : p.constraints) {
    const CMatrix m = c.map(vals);
    if (m.rows() == 0) continue;
    const double flip = (c.sense == Sense::strict_negative) ? -1.0 : 1.0;
    cert.margins[c.name] = min_eig((flip * m).hermitian_part(1e-6));
  }
  return cert;
}

std::optional<CMatrix> scaled_performance(const Realization& g) {
  g.validate();
  const std::size_t n = g.order();
  const std::size_t nin = g.io.in(), nout = g.io.out();
  const CMatrix m = g.system_matrix();
  if (n == 0)
    return (largest_singular_value(g.d) < 1.0) ? std::make_optional(CMatrix(0, 0))
                                               : std::nullopt;
  LmiProblem p;
  p.unknowns.push_back(UnknownSpec::commutant("X", g.space.z_structure()));
  p.constraints.push_back({"positive", Sense::strict_positive,
                           [](const std::vector<CMatrix>& v) { return v[0]; }});
  p.constraints.push_back(
      {"brl", Sense::strict_negative, [m, nin, nout](const std::vector<CMatrix>& v) {
         const CMatrix pi = block_diag({v[0], CMatrix::identity(nin)});
         const CMatrix sg = block_diag({v[0], CMatrix::identity(nout)});
         return m * pi * m.adjoint() - sg;
       }});
  auto sol = lmi::solve_feasibility(p);
  if (!sol) return std::nullopt;
  return sol->assignment.at("X");
}

namespace {

struct ReconstructionPieces {
  CMatrix m0, u, v;  // stacked ordering: plant states first, controller second
  std::size_t n = 0, nw = 0, nu = 0, nz = 0, ny = 0;
};

ReconstructionPieces build_pieces(const Realization& g) {
  ReconstructionPieces rp;
  rp.n = g.order();
  rp.nw = g.io.nw;
  rp.nu = g.io.nu;
  rp.nz = g.io.nz;
  rp.ny = g.io.ny;
  const std::size_t n = rp.n;
  rp.m0 = vcat({hcat({g.a, CMatrix(n, n), g.b1()}), CMatrix(n, 2 * n + rp.nw),
                hcat({g.c1(), CMatrix(rp.nz, n), g.d11()})});
  rp.u = vcat({hcat(CMatrix(n, n), g.b2()), hcat(CMatrix::identity(n), CMatrix(n, rp.nu)),
               hcat(CMatrix(rp.nz, n), g.d12())});
  rp.v = vcat({hcat({CMatrix(n, n), CMatrix::identity(n), CMatrix(n, rp.nw)}),
               hcat({g.c2(), CMatrix(rp.ny, n), g.d21()})});
  return rp;
}

// Normalized bounded-real slack of the stacked closed loop at witness xcl.
double brl_slack(const ReconstructionPieces& rp, const CMatrix& j, const CMatrix& xcl) {
  const CMatrix mcl = rp.m0 + rp.u * j * rp.v;
  const CMatrix pi = block_diag({xcl, CMatrix::identity(rp.nw)});
  const CMatrix sg = block_diag({xcl, CMatrix::identity(rp.nz)});
  const CMatrix form = (mcl * pi * mcl.adjoint() - sg).hermitian_part(1e-6);
  return -max_eig(form) / (1.0 + form.frobenius());
}

std::optional<CMatrix> try_complete_and_solve(const ReconstructionPieces& rp,
                                              const CMatrix& x, const CMatrix& y,
                                              bool sqrt_completion) {
  const std::size_t n = rp.n;
  // The bounded-real form here is M Pi M* - Sigma with Pi = diag(Ycl, I), so
  // the closed-loop scaling completes Y; X is the compression of its
  // inverse.  N = Y - X^{-1} >= 0 comes from the coupling condition.
  const CMatrix xinv = inverse(x);
  const CMatrix m = (y - xinv).hermitian_part(1e-6);

  CMatrix xcl;
  if (!sqrt_completion) {
    xcl = vcat(hcat(y, m), hcat(m, m));
  } else {
    CMatrix ms;
    try {
      ms = psd_sqrt(m, 1e-8);
    } catch (const NonHermitianError&) {
      return std::nullopt;
    }
    xcl = vcat(hcat(y, ms), hcat(ms, CMatrix::identity(n)));
  }
  const double scale = xcl.frobenius() / static_cast<double>(2 * n);
  if (min_eig(xcl.hermitian_part(1e-6)) <= 1e-10 * (1.0 + scale)) return std::nullopt;

  // Equilibrated Schur form: congruence by diag(Sigma^{-1/2}, Pi^{-1/2})
  // turns the diagonal blocks into -I without moving the unknown J.
  CMatrix xcl_sq, xcl_sqinv;
  try {
    xcl_sq = psd_sqrt(xcl.hermitian_part(1e-6), 1e-8);
    xcl_sqinv = inverse(xcl_sq);
  } catch (const Error&) {
    return std::nullopt;
  }
  const CMatrix pi_sq = block_diag({xcl_sq, CMatrix::identity(rp.nw)});
  const CMatrix pi_sqinv = block_diag({xcl_sqinv, CMatrix::identity(rp.nw)});
  const CMatrix sg_sqinv = block_diag({xcl_sqinv, CMatrix::identity(rp.nz)});
  const std::size_t rows_top = 2 * n + rp.nz, rows_bot = 2 * n + rp.nw;

  const CMatrix mid = sg_sqinv * rp.m0 * pi_sq;
  const CMatrix h = vcat(hcat(-CMatrix::identity(rows_top), mid),
                         hcat(mid.adjoint(), -CMatrix::identity(rows_bot)))
                        .hermitian_part(1e-6);
  const CMatrix r = hcat(rp.u.adjoint() * sg_sqinv, CMatrix(n + rp.nu, rows_bot));
  const CMatrix s = hcat(CMatrix(n + rp.ny, rows_top), rp.v * pi_sq);

  std::optional<CMatrix> jf;
  try {
    jf = lmi::finsler_complete(h, r, s);
  } catch (const NoConvergenceError&) {
    return std::nullopt;
  }
  if (!jf) return std::nullopt;
  CMatrix j = jf->adjoint();
  if (brl_slack(rp, j, xcl) <= 0.0) return std::nullopt;
  return j;
}

}  // namespace

Realization hinf_reconstruct(const Realization& g, const HinfCertificate& cert,
                             const StructuredSpace& controller_space) {
  g.validate();
  if (g.d22().max_abs() > 1e-12 * (1.0 + g.d.max_abs()))
    throw grsys::D22NotZeroError("hinf_reconstruct: D22 must vanish");
  StructuredSpace kspace = controller_space;
  if (kspace.dims.empty()) kspace = g.space;
  if (!(kspace == g.space))
    throw Error("hinf_reconstruct: controller order is fixed to the plant order per block");

  const std::size_t n = g.order();
  const std::size_t nu = g.io.nu, ny = g.io.ny;

  auto controller_from = [&](const CMatrix& j) {
    Realization k;
    k.space = kspace;
    k.a = j.block(0, 0, n, n);
    k.b = j.block(0, n, n, ny);
    k.c = j.block(n, 0, nu, n);
    k.d = j.block(n, n, nu, ny);
    k.io = grsys::IoSplit{ny, 0, nu, 0};
    k.validate();
    return k;
  };

  const ReconstructionPieces rp = build_pieces(g);

  // A disconnected loop may already perform with the zero controller.
  if (g.b2().max_abs() == 0.0 && g.c2().max_abs() == 0.0) {
    Realization k0 = controller_from(CMatrix(n + nu, n + ny));
    if (scaled_performance(close_loop(g, k0)).has_value()) return k0;
  }

  const CMatrix x0 = cert.x, y0 = cert.y;
  const double tscale = (x0.frobenius() + y0.frobenius()) /
                        static_cast<double>(std::max<std::size_t>(1, 2 * n));

  std::string failures;
  const double rho_sweep[] = {1.0,    3.16,  0.316, 10.0,  0.1,  31.6,
                              0.0316, 100.0, 0.01,  316.0, 1e-3, 1000.0};
  for (double rho : rho_sweep) {
    CMatrix xs = rho * x0, ys = rho * y0;
    const CMatrix coup =
        vcat(hcat(xs, CMatrix::identity(n)), hcat(CMatrix::identity(n), ys));
    if (min_eig(coup.hermitian_part(1e-8)) < 1e-9 * (1.0 + tscale)) {
      // boundary-tight coupling: inflate slightly
      const double eps = 1e-9 * (1.0 + tscale);
      xs += (2.0 * eps) * CMatrix::identity(n);
      ys += (2.0 * eps) * CMatrix::identity(n);
      if (min_eig((vcat(hcat(xs, CMatrix::identity(n)), hcat(CMatrix::identity(n), ys)))
                      .hermitian_part(1e-8)) <= 0.0) {
        failures += " rho=" + std::to_string(rho) + ":coupling;";
        continue;
      }
    }
    for (bool sqrt_completion : {false, true}) {
      if (auto j = try_complete_and_solve(rp, xs, ys, sqrt_completion))
        return controller_from(*j);
    }
    failures += " rho=" + std::to_string(rho) + ";";
  }
  throw ReconstructionFailedError(
      "hinf_reconstruct: completion/Finsler step failed (attempts:" + failures + ")");
}

}  // namespace ndhinf::synth
