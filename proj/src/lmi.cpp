#include "ndhinf/lmi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace ndhinf::lmi {

// ---------------------------------------------------------------------------
// Structures and parametrizations
// ---------------------------------------------------------------------------

ScalingStructure ScalingStructure::scalar_blocks(const std::vector<std::size_t>& dims) {
  ScalingStructure s;
  for (auto d : dims) s.blocks.push_back({d, BlockKind::scalar_repeated});
  return s;
}

ScalingStructure ScalingStructure::single_full(std::size_t dim) {
  ScalingStructure s;
  s.blocks.push_back({dim, BlockKind::full});
  return s;
}

ScalingStructure ScalingStructure::single_scalar(std::size_t dim) {
  ScalingStructure s;
  s.blocks.push_back({dim, BlockKind::scalar_repeated});
  return s;
}

std::size_t ScalingStructure::total_dim() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.dim;
  return n;
}

std::size_t ScalingStructure::commutant_param_count() const {
  // Opposite a scalar_repeated algebra block the commutant is a full
  // Hermitian block (dim^2 real parameters); opposite a full block it is a
  // real multiple of the identity.
  std::size_t p = 0;
  for (const auto& b : blocks)
    p += (b.kind == BlockKind::scalar_repeated) ? b.dim * b.dim : (b.dim > 0 ? 1 : 0);
  return p;
}

namespace {

// Fills a Hermitian dim x dim block from dim^2 real parameters:
// diagonal first, then (re, im) pairs for i < j.
void fill_hermitian_block(CMatrix& x, std::size_t off, std::size_t dim,
                          const double*& p) {
  for (std::size_t i = 0; i < dim; ++i) x(off + i, off + i) = *p++;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i + 1; j < dim; ++j) {
      const double re = *p++;
      const double im = *p++;
      x(off + i, off + j) = cplx(re, im);
      x(off + j, off + i) = cplx(re, -im);
    }
}

}  // namespace

CMatrix commutant_from_params(const ScalingStructure& s, const double* params) {
  CMatrix x(s.total_dim(), s.total_dim());
  const double* p = params;
  std::size_t off = 0;
  for (const auto& b : s.blocks) {
    if (b.kind == BlockKind::scalar_repeated) {
      fill_hermitian_block(x, off, b.dim, p);
    } else if (b.dim > 0) {
      const double lam = *p++;
      for (std::size_t i = 0; i < b.dim; ++i) x(off + i, off + i) = lam;
    }
    off += b.dim;
  }
  return x;
}

UnknownSpec UnknownSpec::commutant(std::string name, ScalingStructure s) {
  UnknownSpec u;
  u.name = std::move(name);
  u.kind = Kind::commutant;
  u.structure = std::move(s);
  u.rows = u.cols = u.structure.total_dim();
  return u;
}

UnknownSpec UnknownSpec::hermitian(std::string name, std::size_t n) {
  UnknownSpec u;
  u.name = std::move(name);
  u.kind = Kind::hermitian;
  u.rows = u.cols = n;
  return u;
}

UnknownSpec UnknownSpec::rectangular(std::string name, std::size_t rows, std::size_t cols) {
  UnknownSpec u;
  u.name = std::move(name);
  u.kind = Kind::rectangular;
  u.rows = rows;
  u.cols = cols;
  return u;
}

UnknownSpec UnknownSpec::reals(std::string name, std::size_t count) {
  UnknownSpec u;
  u.name = std::move(name);
  u.kind = Kind::reals;
  u.rows = count;
  u.cols = 1;
  return u;
}

std::size_t UnknownSpec::param_count() const {
  switch (kind) {
    case Kind::commutant:
      return structure.commutant_param_count();
    case Kind::hermitian:
      return rows * rows;
    case Kind::rectangular:
      return 2 * rows * cols;
    case Kind::reals:
      return rows;
  }
  return 0;
}

namespace {

CMatrix materialize_unknown(const UnknownSpec& u, const double* p) {
  switch (u.kind) {
    case UnknownSpec::Kind::commutant:
      return commutant_from_params(u.structure, p);
    case UnknownSpec::Kind::hermitian: {
      CMatrix x(u.rows, u.rows);
      const double* q = p;
      fill_hermitian_block(x, 0, u.rows, q);
      return x;
    }
    case UnknownSpec::Kind::rectangular: {
      CMatrix x(u.rows, u.cols);
      for (std::size_t i = 0; i < u.rows; ++i)
        for (std::size_t j = 0; j < u.cols; ++j) {
          const std::size_t k = 2 * (i * u.cols + j);
          x(i, j) = cplx(p[k], p[k + 1]);
        }
      return x;
    }
    case UnknownSpec::Kind::reals: {
      CMatrix x(u.rows, 1);
      for (std::size_t i = 0; i < u.rows; ++i) x(i, 0) = p[i];
      return x;
    }
  }
  return CMatrix();
}

std::vector<CMatrix> materialize_all(const std::vector<UnknownSpec>& unknowns,
                                     const std::vector<double>& params) {
  std::vector<CMatrix> out;
  out.reserve(unknowns.size());
  std::size_t off = 0;
  for (const auto& u : unknowns) {
    out.push_back(materialize_unknown(u, params.data() + off));
    off += u.param_count();
  }
  return out;
}

// -------------------------------------------------------------------------
// Small real symmetric matrix helpers (row-major full storage)
// -------------------------------------------------------------------------

struct RMat {
  std::size_t n = 0;
  std::vector<double> a;
  RMat() = default;
  explicit RMat(std::size_t n_) : n(n_), a(n_ * n_, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return a[i * n + j]; }
  double at(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

RMat embed_hermitian(const CMatrix& h) {
  const std::size_t m = h.rows();
  RMat r(2 * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const cplx v = h(i, j);
      r.at(i, j) = v.real();
      r.at(i, j + m) = -v.imag();
      r.at(i + m, j) = v.imag();
      r.at(i + m, j + m) = v.real();
    }
  return r;
}

// In-place lower Cholesky; returns false if not positive definite.
bool cholesky(RMat& m) {
  const std::size_t n = m.n;
  for (std::size_t j = 0; j < n; ++j) {
    double d = m.at(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= m.at(j, k) * m.at(j, k);
    if (d <= 0.0 || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    m.at(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= m.at(i, k) * m.at(j, k);
      m.at(i, j) = s / ljj;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.at(i, j) = 0.0;
  return true;
}

// Given lower L and symmetric D, computes G = L^{-1} D L^{-T} (symmetric).
RMat sandwich_inverse(const RMat& l, const RMat& d) {
  const std::size_t n = l.n;
  RMat y = d;  // solve L Y = D column by column
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = y.at(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l.at(i, k) * y.at(k, c);
      y.at(i, c) = s / l.at(i, i);
    }
  }
  RMat g(n);  // solve G L^T = Y  <=>  row-wise forward solves with L
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = y.at(r, i);
      for (std::size_t k = 0; k < i; ++k) s -= l.at(i, k) * g.at(r, k);
      g.at(r, i) = s / l.at(i, i);
    }
  }
  return g;
}

double dot(const RMat& a, const RMat& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.a.size(); ++k) s += a.a[k] * b.a[k];
  return s;
}

double trace(const RMat& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.n; ++i) s += a.at(i, i);
  return s;
}

// Dense symmetric solve for Newton systems; solves into g.  Regularization
// must not swamp directions whose curvature is orders of magnitude below the
// largest diagonal, so start from a relative per-diagonal ridge and only
// fall back to progressively larger uniform shifts if Cholesky fails.
bool sym_solve(const std::vector<double>& h, std::vector<double>& g, std::size_t n) {
  double diag_scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    diag_scale = std::max(diag_scale, std::abs(h[i * n + i]));
  const std::vector<double> rhs = g;
  for (int level = 0; level < 5; ++level) {
    RMat m(n);
    m.a = h;
    if (level == 0) {
      for (std::size_t i = 0; i < n; ++i)
        m.at(i, i) += 1e-13 * std::abs(m.at(i, i)) + 1e-300;
    } else {
      const double ridge = std::pow(1e4, level - 1) * 1e-13 * std::max(1.0, diag_scale);
      for (std::size_t i = 0; i < n; ++i) m.at(i, i) += ridge;
    }
    if (!cholesky(m)) continue;
    g = rhs;
    for (std::size_t i = 0; i < n; ++i) {
      double s = g[i];
      for (std::size_t k = 0; k < i; ++k) s -= m.at(i, k) * g[k];
      g[i] = s / m.at(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = g[i];
      for (std::size_t k = i + 1; k < n; ++k) s -= m.at(k, i) * g[k];
      g[i] = s / m.at(i, i);
    }
    bool finite = true;
    for (double v : g) finite &= std::isfinite(v);
    if (finite) return true;
  }
  return false;
}

// -------------------------------------------------------------------------
// Preprocessed constraint data
// -------------------------------------------------------------------------

struct PreppedConstraint {
  std::string name;
  Sense sense = Sense::strict_negative;
  std::size_t cdim = 0;  // complex dimension
  double scale = 1.0;    // normalization divisor
  CMatrix f0;            // normalized, in "< 0" orientation
  std::vector<std::pair<std::size_t, CMatrix>> basis;  // active params only
  RMat f0_emb;
  std::vector<std::pair<std::size_t, RMat>> basis_emb;
};

struct Prepped {
  std::size_t nparams = 0;
  std::vector<PreppedConstraint> cons;
};

// Evaluates the user's affine map, flips orientation so every constraint
// reads "matrix < 0" (PSD becomes -F <= 0), and probes the basis matrices.
Prepped preprocess(const LmiProblem& problem, const LmiOptions& options) {
  Prepped prep;
  for (const auto& u : problem.unknowns) prep.nparams += u.param_count();
  if (prep.nparams > options.unknown_cap)
    throw SizeCapError("solve_feasibility: unknown count " +
                       std::to_string(prep.nparams) + " exceeds cap " +
                       std::to_string(options.unknown_cap));

  std::vector<double> zero(prep.nparams, 0.0);
  const auto at_zero = materialize_all(problem.unknowns, zero);

  for (const auto& c : problem.constraints) {
    PreppedConstraint pc;
    pc.name = c.name;
    pc.sense = c.sense;
    const double flip = (c.sense == Sense::strict_negative) ? 1.0 : -1.0;
    CMatrix f0 = c.map(at_zero);
    if (f0.rows() != f0.cols())
      throw DimensionError("constraint " + c.name + " is not square");
    pc.cdim = f0.rows();
    if (pc.cdim == 0) continue;  // trivially satisfied
    pc.f0 = (flip * f0).hermitian_part(1e-8);

    std::vector<double> probe(prep.nparams, 0.0);
    double max_norm = std::max(1.0, pc.f0.frobenius());
    for (std::size_t j = 0; j < prep.nparams; ++j) {
      probe[j] = 1.0;
      const auto vals = materialize_all(problem.unknowns, probe);
      probe[j] = 0.0;
      CMatrix bj = ((flip * c.map(vals)) - pc.f0).hermitian_part(1e-8);
      const double nrm = bj.frobenius();
      if (nrm > 1e-14) {
        max_norm = std::max(max_norm, nrm);
        pc.basis.emplace_back(j, std::move(bj));
      }
    }
    pc.scale = max_norm;
    const cplx inv_scale(1.0 / pc.scale, 0.0);
    pc.f0 = inv_scale * pc.f0;
    for (auto& [j, b] : pc.basis) b = inv_scale * b;

    // Affinity spot check with a deterministic pseudo-random point.
    {
      std::vector<double> xr(prep.nparams, 0.0);
      std::uint64_t state = 0x9e3779b97f4a7c15ull;
      for (auto& v : xr) {
        state = state * 6364136223846793005ull + 1442695040888963407ull;
        v = (static_cast<double>(state >> 11) / 9007199254740992.0) * 2.0 - 1.0;
      }
      CMatrix lin = pc.f0;
      for (const auto& [j, b] : pc.basis) lin += xr[j] * b;
      const CMatrix direct =
          inv_scale * ((flip * c.map(materialize_all(problem.unknowns, xr)))
                           .hermitian_part(1e-8));
      if ((lin - direct).frobenius() > 1e-6 * (1.0 + lin.frobenius()))
        throw Error("constraint " + c.name + " is not affine in the unknowns");
    }

    pc.f0_emb = embed_hermitian(pc.f0);
    for (const auto& [j, b] : pc.basis) pc.basis_emb.emplace_back(j, embed_hermitian(b));
    prep.cons.push_back(std::move(pc));
  }
  return prep;
}

// Normalized slack of one constraint at a parameter point: min_eig(-M) in the
// "< 0" orientation, positive when strictly satisfied.
double constraint_slack(const PreppedConstraint& pc, const std::vector<double>& x) {
  CMatrix m = pc.f0;
  for (const auto& [j, b] : pc.basis) m += x[j] * b;
  return -max_eig(m, 1e-6);
}

bool margins_ok(const Prepped& prep, const std::vector<double>& x, const LmiOptions& o) {
  for (const auto& pc : prep.cons) {
    const double slack = constraint_slack(pc, x);
    const double need =
        (pc.sense == Sense::positive_semidefinite) ? -o.psd_tolerance : o.target_margin;
    if (slack < need) return false;
  }
  return true;
}

// -------------------------------------------------------------------------
// Phase-I barrier: minimize the common cap t with M_i(x) < cap_i * I
// -------------------------------------------------------------------------

struct BarrierSetup {
  const Prepped* prep = nullptr;
  const LmiOptions* opts = nullptr;
  std::vector<char> uses_t;       // cap_i = t when set, else fixed_cap[i]
  std::vector<double> fixed_cap;
};

struct BarrierState {
  std::vector<double> x;
  double t = 0.0;
};

bool factor_slacks(const BarrierSetup& bs, const std::vector<double>& x, double t,
                   std::vector<RMat>& chol, double* phi_barrier) {
  const auto& cons = bs.prep->cons;
  chol.resize(cons.size());
  double phi = 0.0;
  for (std::size_t i = 0; i < cons.size(); ++i) {
    const auto& pc = cons[i];
    const double cap = bs.uses_t[i] ? t : bs.fixed_cap[i];
    RMat s(2 * pc.cdim);
    for (std::size_t k = 0; k < s.n; ++k) s.at(k, k) = cap;
    for (std::size_t k = 0; k < s.a.size(); ++k) s.a[k] -= pc.f0_emb.a[k];
    for (const auto& [j, b] : pc.basis_emb)
      for (std::size_t k = 0; k < s.a.size(); ++k) s.a[k] -= x[j] * b.a[k];
    if (!cholesky(s)) return false;
    for (std::size_t k = 0; k < s.n; ++k) phi -= 2.0 * std::log(s.at(k, k));
    chol[i] = std::move(s);
  }
  const double r = bs.opts->bound_radius;
  for (double v : x) {
    if (std::abs(v) >= r) return false;
    phi -= std::log(r - v) + std::log(r + v);
  }
  if (phi_barrier) *phi_barrier = phi;
  return true;
}

BarrierState run_barrier(const BarrierSetup& bs, std::vector<double> x0, double t0,
                         bool allow_early_exit) {
  const auto& cons = bs.prep->cons;
  const auto& o = *bs.opts;
  const std::size_t p = bs.prep->nparams;

  BarrierState st;
  st.x = std::move(x0);
  st.t = t0;

  double nu = 2.0 * p;  // barrier degree
  for (const auto& pc : cons) nu += 2.0 * pc.cdim;
  nu = std::max(nu, 1.0);

  std::vector<RMat> chol;
  if (!factor_slacks(bs, st.x, st.t, chol, nullptr))
    throw NoConvergenceError("barrier: start point is not strictly feasible");

  double mu = std::max(1.0, std::abs(st.t));
  int total_iters = 0;
  const std::size_t dim = p + 1;  // params + t

  while (true) {
    for (int inner = 0; inner < 80; ++inner) {
      if (++total_iters > o.max_newton_iters)
        throw NoConvergenceError("barrier: Newton iteration cap exceeded");

      std::vector<double> g(dim, 0.0);
      std::vector<double> h(dim * dim, 0.0);
      g[p] += 1.0 / mu;

      for (std::size_t i = 0; i < cons.size(); ++i) {
        const auto& pc = cons[i];
        const RMat& l = chol[i];
        // slack directions: d/dx_j -> -B_j ; d/dt -> +I when capped by t
        std::vector<std::size_t> idx;
        std::vector<RMat> gs;
        idx.reserve(pc.basis_emb.size() + 1);
        for (const auto& [j, b] : pc.basis_emb) {
          RMat nb(b.n);
          for (std::size_t k = 0; k < b.a.size(); ++k) nb.a[k] = -b.a[k];
          idx.push_back(j);
          gs.push_back(sandwich_inverse(l, nb));
        }
        if (bs.uses_t[i]) {
          RMat id(l.n);
          for (std::size_t k = 0; k < l.n; ++k) id.at(k, k) = 1.0;
          idx.push_back(p);
          gs.push_back(sandwich_inverse(l, id));
        }
        for (std::size_t a = 0; a < idx.size(); ++a) {
          g[idx[a]] -= trace(gs[a]);
          for (std::size_t b2 = a; b2 < idx.size(); ++b2) {
            const double v = dot(gs[a], gs[b2]);
            h[idx[a] * dim + idx[b2]] += v;
            if (idx[a] != idx[b2]) h[idx[b2] * dim + idx[a]] += v;
          }
        }
      }
      const double r = o.bound_radius;
      for (std::size_t j = 0; j < p; ++j) {
        g[j] += 1.0 / (r - st.x[j]) - 1.0 / (r + st.x[j]);
        h[j * dim + j] += 1.0 / ((r - st.x[j]) * (r - st.x[j])) +
                          1.0 / ((r + st.x[j]) * (r + st.x[j]));
      }

      std::vector<double> d = g;
      if (!sym_solve(h, d, dim))
        throw NoConvergenceError("barrier: Newton system not positive definite");
      for (auto& v : d) v = -v;

      double decrement = 0.0;
      for (std::size_t k = 0; k < dim; ++k) decrement -= g[k] * d[k];
      if (decrement < 1e-11 * (1.0 + std::abs(st.t))) break;

      double phi0;
      factor_slacks(bs, st.x, st.t, chol, &phi0);
      phi0 += st.t / mu;
      double alpha = 1.0;
      bool stepped = false;
      for (int ls = 0; ls < 60; ++ls) {
        std::vector<double> xn = st.x;
        for (std::size_t k = 0; k < p; ++k) xn[k] += alpha * d[k];
        const double tn = st.t + alpha * d[p];
        std::vector<RMat> chn;
        double phib;
        if (factor_slacks(bs, xn, tn, chn, &phib) &&
            phib + tn / mu <= phi0 - 1e-4 * alpha * decrement) {
          st.x = std::move(xn);
          st.t = tn;
          chol = std::move(chn);
          stepped = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!stepped) break;

      if (allow_early_exit && st.t < -1.5 * o.target_margin && (total_iters % 4 == 0) &&
          margins_ok(*bs.prep, st.x, o))
        return st;
    }

    if (allow_early_exit && margins_ok(*bs.prep, st.x, o)) return st;
    if (mu * nu <= 1e-12 * (1.0 + std::abs(st.t)) || mu < 1e-16) break;
    mu *= 0.12;
  }
  return st;
}

double initial_cap(const Prepped& prep, const std::vector<double>& x,
                   const std::vector<char>& uses_t) {
  double t0 = 0.0;
  for (std::size_t i = 0; i < prep.cons.size(); ++i) {
    if (!uses_t[i]) continue;
    t0 = std::max(t0, -constraint_slack(prep.cons[i], x));
  }
  return t0 + 1.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// solve_feasibility
// ---------------------------------------------------------------------------

std::optional<LmiSolution> solve_feasibility(const LmiProblem& problem,
                                             const LmiOptions& options) {
  Prepped prep = preprocess(problem, options);

  auto build_solution = [&](const std::vector<double>& x) {
    LmiSolution sol;
    const auto vals = materialize_all(problem.unknowns, x);
    for (std::size_t k = 0; k < problem.unknowns.size(); ++k)
      sol.assignment[problem.unknowns[k].name] = vals[k];
    sol.margin = std::numeric_limits<double>::infinity();
    for (const auto& pc : prep.cons)
      if (pc.sense != Sense::positive_semidefinite)
        sol.margin = std::min(sol.margin, constraint_slack(pc, x));
    if (!std::isfinite(sol.margin)) sol.margin = 0.0;
    return sol;
  };

  // No unknowns: the verdict is a direct eigenvalue check.
  if (prep.nparams == 0) {
    std::vector<double> x;
    if (!margins_ok(prep, x, options)) return std::nullopt;
    auto sol = build_solution(x);
    sol.phase1_objective = -sol.margin;
    return sol;
  }

  BarrierSetup bs;
  bs.prep = &prep;
  bs.opts = &options;
  bs.uses_t.assign(prep.cons.size(), 1);
  bs.fixed_cap.assign(prep.cons.size(), 0.0);

  std::vector<double> x0(prep.nparams, 0.0);
  BarrierState st = run_barrier(bs, x0, initial_cap(prep, x0, bs.uses_t), true);
  if (margins_ok(prep, st.x, options)) {
    auto sol = build_solution(st.x);
    sol.phase1_objective = st.t;
    return sol;
  }

  // Stage 2: allow PSD constraints to sit on the boundary (within
  // psd_tolerance) while the strict constraints attain the margin.
  bool has_psd = false;
  for (const auto& pc : prep.cons)
    has_psd |= (pc.sense == Sense::positive_semidefinite);
  if (!has_psd || st.t > options.psd_tolerance) return std::nullopt;

  for (std::size_t i = 0; i < prep.cons.size(); ++i) {
    if (prep.cons[i].sense == Sense::positive_semidefinite) {
      bs.uses_t[i] = 0;
      bs.fixed_cap[i] = options.psd_tolerance;
    }
  }
  std::vector<RMat> chk;
  const double t2 = initial_cap(prep, st.x, bs.uses_t);
  if (!factor_slacks(bs, st.x, t2, chk, nullptr)) return std::nullopt;
  BarrierState st2 = run_barrier(bs, st.x, t2, true);
  if (margins_ok(prep, st2.x, options)) {
    auto sol = build_solution(st2.x);
    sol.phase1_objective = st2.t;
    return sol;
  }
  return std::nullopt;
}

double verify_solution(const LmiProblem& problem, const LmiSolution& solution,
                       const LmiOptions& options) {
  Prepped prep = preprocess(problem, options);
  std::vector<CMatrix> vals;
  for (const auto& u : problem.unknowns) {
    auto it = solution.assignment.find(u.name);
    if (it == solution.assignment.end())
      throw Error("verify_solution: missing unknown " + u.name);
    vals.push_back(it->second);
  }
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& c : problem.constraints) {
    CMatrix f = c.map(vals);
    if (f.rows() == 0) continue;
    const double flip = (c.sense == Sense::strict_negative) ? 1.0 : -1.0;
    double scale = 1.0;
    for (const auto& pc : prep.cons)
      if (pc.name == c.name) scale = pc.scale;
    const double slack = -max_eig((cplx(flip / scale, 0.0) * f).hermitian_part(1e-6));
    const double need = (c.sense == Sense::positive_semidefinite)
                            ? -options.psd_tolerance
                            : options.target_margin;
    worst = std::min(worst, slack - need);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Finsler constructions
// ---------------------------------------------------------------------------

namespace {

// Negative definiteness of the compression K* H K; an empty kernel counts as
// vacuously negative.
bool compression_negative(const CMatrix& h, const CMatrix& k) {
  if (k.cols() == 0) return true;
  const CMatrix c = (k.adjoint() * h * k).hermitian_part(1e-8);
  return max_eig(c) < -1e-10 * (1.0 + c.frobenius());
}

// Kernel detection is row-scale invariant, so equilibrate rows first: badly
// mixed row magnitudes (e.g. [0, Y^{1/2}] blocks with spread-out Y) otherwise
// push genuine directions under the relative rank cut.
CMatrix equilibrated_kernel(const CMatrix& m) {
  if (m.rows() == 0) return kernel_basis(m);
  double max_row = 0.0;
  std::vector<double> norms(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += std::norm(m(i, j));
    norms[i] = std::sqrt(s);
    max_row = std::max(max_row, norms[i]);
  }
  if (max_row == 0.0) return kernel_basis(m);
  CMatrix scaled(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (norms[i] <= 1e-13 * max_row) continue;  // effectively a zero row
    const double inv = 1.0 / norms[i];
    for (std::size_t j = 0; j < m.cols(); ++j) scaled(i, j) = inv * m(i, j);
  }
  return kernel_basis(scaled);
}

}  // namespace

std::optional<double> finsler_scalar(const CMatrix& r, const CMatrix& h) {
  if (h.rows() != h.cols()) throw DimensionError("finsler_scalar: H must be square");
  if (r.cols() != h.rows()) throw DimensionError("finsler_scalar: R/H size mismatch");
  const CMatrix hh = h.hermitian_part(1e-8);
  const CMatrix kr = equilibrated_kernel(r);
  if (!compression_negative(hh, kr)) return std::nullopt;

  const CMatrix rr = (r.adjoint() * r).hermitian_part(1e-9);
  double mu = std::max(1.0, max_eig(hh));
  for (int k = 0; k < 64; ++k) {
    if (min_eig((mu * rr - hh).hermitian_part(1e-9)) > 0.0) return mu;
    mu *= 2.0;
  }
  throw NoConvergenceError("finsler_scalar: doubling cap exceeded");
}

std::optional<CMatrix> finsler_complete(const CMatrix& h, const CMatrix& r,
                                        const CMatrix& s) {
  if (h.rows() != h.cols()) throw DimensionError("finsler_complete: H must be square");
  const std::size_t n = h.rows();
  if (r.cols() != n || s.cols() != n)
    throw DimensionError("finsler_complete: R/S column mismatch");
  const std::size_t p = r.rows(), q = s.rows();
  const CMatrix hh = h.hermitian_part(1e-8);

  const CMatrix kr = equilibrated_kernel(r);
  const CMatrix ks = equilibrated_kernel(s);
  if (!compression_negative(hh, kr) || !compression_negative(hh, ks))
    return std::nullopt;

  // Subspace split: T1 = ker R ∩ ker S, T2/T3 the complements inside each
  // kernel, T4 the residual.
  const CMatrix t1 = equilibrated_kernel(vcat(r, s));
  const CMatrix proj = CMatrix::identity(n) - t1 * t1.adjoint();
  const CMatrix t2 = range_basis(proj * kr);
  const CMatrix t3 = range_basis(proj * ks);
  const CMatrix t4 = kernel_basis(hcat(kr, ks).adjoint());
  const std::size_t v0 = t1.cols(), vr = t2.cols(), vs = t3.cols(), v1 = t4.cols();
  if (v0 + vr + vs + v1 != n)
    throw NoConvergenceError("finsler_complete: subspace split is rank deficient");

  const CMatrix t = hcat({t1, t2, t3, t4});
  const CMatrix hp = (t.adjoint() * hh * t).hermitian_part(1e-6);
  const std::size_t off[5] = {0, v0, v0 + vr, v0 + vr + vs, n};
  auto blk = [&](std::size_t bi, std::size_t bj) {
    return hp.block(off[bi], off[bj], off[bi + 1] - off[bi], off[bj + 1] - off[bj]);
  };

  // Schur-complement completion of the (2,3) coupling; rows/cols 1, and the
  // (2,2)/(3,3) diagonals, are fixed by the data.
  CMatrix z23(vr, vs);
  if (v0 > 0 && vr > 0 && vs > 0) z23 = blk(1, 0) * solve_linear(blk(0, 0), blk(0, 2));
  const CMatrix n23 = z23 - blk(1, 2);
  const CMatrix n24 = -blk(1, 3);
  const CMatrix n43 = -blk(3, 2);

  const CMatrix a3 = r * t3, a4 = r * t4;
  const CMatrix b2 = s * t2, b4 = s * t4;
  const CMatrix xk = hcat(b2, b4);  // q x (vr+v1), full column rank
  const CMatrix mk = hcat(a3, a4);  // p x (vs+v1), full column rank

  const double delta0 =
      std::max(1.0, hh.frobenius() / static_cast<double>(std::max<std::size_t>(1, n)));
  for (int k = 0; k <= 40; ++k) {
    const int e = (k + 1) / 2;
    const double delta =
        delta0 * ((k % 2 == 1) ? std::ldexp(1.0, e) : std::ldexp(1.0, -e));
    const CMatrix n44 = 0.5 * (-(delta * CMatrix::identity(v1)) - blk(3, 3));
    const CMatrix blkmat = vcat(hcat(n23, n24), hcat(n43, n44));

    CMatrix j(q, p);
    if (xk.cols() > 0 && mk.cols() > 0) {
      const CMatrix gx = (xk.adjoint() * xk).hermitian_part(1e-8);
      const CMatrix gm = (mk.adjoint() * mk).hermitian_part(1e-8);
      j = xk * solve_linear(gx, blkmat * solve_linear(gm, mk.adjoint()));
    }
    const CMatrix phi =
        (hh + r.adjoint() * j.adjoint() * s + s.adjoint() * j * r).hermitian_part(1e-6);
    if (max_eig(phi) < 0.0) return j;
  }
  throw NoConvergenceError("finsler_complete: residual scaling sweep exhausted");
}

// ---------------------------------------------------------------------------
// Scaled-norm bisection
// ---------------------------------------------------------------------------

ScaledNormResult scaled_norm_bisect(const CMatrix& a, const ScalingStructure& structure,
                                    double tol) {
  if (a.rows() != a.cols()) throw DimensionError("scaled_norm_bisect: square A required");
  if (structure.total_dim() != a.rows())
    throw DimensionError("scaled_norm_bisect: structure dimension mismatch");
  if (tol <= 0.0) throw Error("scaled_norm_bisect: tol must be positive");
  const std::size_t n = a.rows();

  auto probe = [&](double gamma) -> std::optional<CMatrix> {
    LmiProblem prob;
    prob.unknowns.push_back(UnknownSpec::commutant("X", structure));
    prob.constraints.push_back(
        {"normalize", Sense::positive_semidefinite,
         [n](const std::vector<CMatrix>& v) { return v[0] - CMatrix::identity(n); }});
    const double g2 = gamma * gamma;
    prob.constraints.push_back(
        {"stein", Sense::strict_negative, [&a, g2](const std::vector<CMatrix>& v) {
           return a * v[0] * a.adjoint() - g2 * v[0];
         }});
    LmiOptions o;
    o.target_margin = 1e-9;
    auto sol = solve_feasibility(prob, o);
    if (!sol) return std::nullopt;
    return sol->assignment.at("X");
  };

  const double sigma = largest_singular_value(a);
  double hi = sigma * (1.0 + 1e-6) + 0.5 * tol;
  CMatrix hi_witness;
  bool have_hi = false;
  for (int k = 0; k < 8 && !have_hi; ++k) {
    if (auto w = probe(hi)) {
      hi_witness = *w;
      have_hi = true;
    } else {
      hi = hi * 2.0 + tol;
    }
  }
  if (!have_hi) throw NoConvergenceError("scaled_norm_bisect: no feasible upper bracket");

  double lo = 0.0;
  int guard = 0;
  while (hi - lo > tol) {
    if (++guard > 200) throw NoConvergenceError("scaled_norm_bisect: bisection stalled");
    const double mid = 0.5 * (lo + hi);
    if (auto w = probe(mid)) {
      hi = mid;
      hi_witness = *w;
    } else {
      lo = mid;
    }
  }

  ScaledNormResult out;
  out.muhat = 0.5 * (lo + hi);
  const double gw = out.muhat + tol;
  if (auto w = probe(gw)) {
    out.witness = *w;
  } else if (auto w2 = probe(gw * (1.0 + tol) + tol)) {
    out.witness = *w2;
  } else {
    out.witness = hi_witness;  // from the last feasible probe
  }
  return out;
}

}  // namespace ndhinf::lmi
