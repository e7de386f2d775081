#include "ndhinf/grsys.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace ndhinf::grsys {

std::size_t StructuredSpace::total_dim() const {
  std::size_t n = 0;
  for (auto d : dims) n += d;
  return n;
}

lmi::ScalingStructure StructuredSpace::z_structure() const {
  return lmi::ScalingStructure::scalar_blocks(dims);
}

StructuredSpace interleave(const StructuredSpace& a, const StructuredSpace& b,
                           std::vector<std::size_t>& perm) {
  if (a.dims.size() != b.dims.size())
    throw DimensionError("interleave: variable count mismatch");
  StructuredSpace out;
  perm.clear();
  std::size_t off_a = 0, off_b = 0;
  const std::size_t na = a.total_dim();
  for (std::size_t k = 0; k < a.dims.size(); ++k) {
    out.dims.push_back(a.dims[k] + b.dims[k]);
    for (std::size_t i = 0; i < a.dims[k]; ++i) perm.push_back(off_a + i);
    for (std::size_t i = 0; i < b.dims[k]; ++i) perm.push_back(na + off_b + i);
    off_a += a.dims[k];
    off_b += b.dims[k];
  }
  return out;
}

void Realization::validate() const {
  const std::size_t n = order();
  if (a.rows() != n || a.cols() != n) throw DimensionError("realization: A size mismatch");
  if (b.rows() != n || b.cols() != io.in()) throw DimensionError("realization: B size mismatch");
  if (c.rows() != io.out() || c.cols() != n) throw DimensionError("realization: C size mismatch");
  if (d.rows() != io.out() || d.cols() != io.in())
    throw DimensionError("realization: D size mismatch");
}

CMatrix Realization::system_matrix() const {
  return vcat(hcat(a, b), hcat(c, d));
}

Realization Realization::single_block(StructuredSpace space, CMatrix a, CMatrix b,
                                      CMatrix c, CMatrix d) {
  Realization g;
  g.space = std::move(space);
  g.a = std::move(a);
  g.b = std::move(b);
  g.c = std::move(c);
  g.d = std::move(d);
  g.io = IoSplit{g.b.cols(), 0, g.c.rows(), 0};
  g.validate();
  return g;
}

Realization Realization::constant(std::size_t var_count, const CMatrix& d) {
  StructuredSpace sp;
  sp.dims.assign(var_count, 0);
  return single_block(sp, CMatrix(0, 0), CMatrix(0, d.cols()), CMatrix(d.rows(), 0), d);
}

std::size_t OperatorTuple::common_dim() const {
  if (deltas.empty()) return 0;
  const std::size_t k = deltas.front().rows();
  for (const auto& m : deltas)
    if (m.rows() != k || m.cols() != k)
      throw DimensionError("operator tuple: blocks must share one size");
  return k;
}

bool OperatorTuple::is_contractive(double tol) const {
  for (const auto& m : deltas)
    if (largest_singular_value(m) > 1.0 + tol) return false;
  return true;
}

CMatrix z_pencil(const StructuredSpace& space, const PointPolydisk& z) {
  if (z.size() != space.dims.size())
    throw DimensionError("z_pencil: point/space variable mismatch");
  const std::size_t n = space.total_dim();
  CMatrix out(n, n);
  std::size_t off = 0;
  for (std::size_t k = 0; k < space.dims.size(); ++k) {
    for (std::size_t i = 0; i < space.dims[k]; ++i) out(off + i, off + i) = z[k];
    off += space.dims[k];
  }
  return out;
}

namespace {

// (I - Z A)^{-1} Z with a condition report on failure.
CMatrix resolvent_z(const CMatrix& a, const CMatrix& zp) {
  const std::size_t n = a.rows();
  const CMatrix pencil = CMatrix::identity(n) - zp * a;
  LinearSolve ls;
  try {
    ls = solve_linear_full(pencil, zp);
  } catch (const SingularError&) {
    throw SingularPencilError("pencil I - Z(z)A is singular");
  }
  if (ls.rcond < 1e-13)
    throw SingularPencilError("pencil I - Z(z)A is near singular (rcond " +
                              std::to_string(ls.rcond) + ")");
  return ls.x;
}

}  // namespace

CMatrix eval_transfer(const Realization& g, const PointPolydisk& z) {
  g.validate();
  if (g.order() == 0) return g.d;
  return g.d + g.c * resolvent_z(g.a, z_pencil(g.space, z)) * g.b;
}

CMatrix eval_nc(const Realization& g, const OperatorTuple& delta) {
  g.validate();
  if (delta.deltas.size() != g.space.var_count())
    throw DimensionError("eval_nc: tuple size must match variable count");
  const std::size_t k = delta.common_dim();
  const CMatrix ik = CMatrix::identity(k);
  if (g.order() == 0) return kron(g.d, ik);
  std::vector<CMatrix> zb;
  for (std::size_t j = 0; j < g.space.dims.size(); ++j)
    zb.push_back(kron(CMatrix::identity(g.space.dims[j]), delta.deltas[j]));
  const CMatrix zd = block_diag(zb);
  const CMatrix ak = kron(g.a, ik);
  const std::size_t nk = ak.rows();
  const CMatrix pencil = CMatrix::identity(nk) - zd * ak;
  LinearSolve ls;
  try {
    ls = solve_linear_full(pencil, zd * kron(g.b, ik));
  } catch (const SingularError&) {
    throw SingularPencilError("nc pencil I - Z(delta)(A ⊗ I) is singular");
  }
  return kron(g.d, ik) + kron(g.c, ik) * ls.x;
}

namespace {

CMatrix permute_rows(const CMatrix& m, const std::vector<std::size_t>& perm) {
  CMatrix out(perm.size(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(perm[i], j);
  return out;
}

CMatrix permute_cols(const CMatrix& m, const std::vector<std::size_t>& perm) {
  CMatrix out(m.rows(), perm.size());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < perm.size(); ++j) out(i, j) = m(i, perm[j]);
  return out;
}

// Builds the interleaved realization from stacked-state data.
Realization from_stacked(const StructuredSpace& sp_a, const StructuredSpace& sp_b,
                         const CMatrix& a, const CMatrix& b, const CMatrix& c,
                         const CMatrix& d, IoSplit io) {
  std::vector<std::size_t> perm;
  Realization out;
  out.space = interleave(sp_a, sp_b, perm);
  out.a = permute_rows(permute_cols(a, perm), perm);
  out.b = permute_rows(b, perm);
  out.c = permute_cols(c, perm);
  out.d = d;
  out.io = io;
  out.validate();
  return out;
}

}  // namespace

Realization close_loop(const Realization& g, const Realization& k) {
  g.validate();
  k.validate();
  if (g.space.var_count() != k.space.var_count())
    throw DimensionError("close_loop: variable count mismatch");
  if (k.io.in() != g.io.ny || k.io.out() != g.io.nu)
    throw DimensionError("close_loop: controller I/O does not match plant (ny -> nu)");
  if (g.d22().max_abs() > 1e-12 * (1.0 + g.d.max_abs()))
    throw D22NotZeroError("close_loop: D22 must vanish");

  const CMatrix ak = k.a, bk = k.b, ck = k.c, dk = k.d;
  const CMatrix b1 = g.b1(), b2 = g.b2(), c1 = g.c1(), c2 = g.c2();
  const CMatrix d11 = g.d11(), d12 = g.d12(), d21 = g.d21();

  const CMatrix a_cl = vcat(hcat(g.a + b2 * dk * c2, b2 * ck), hcat(bk * c2, ak));
  const CMatrix b_cl = vcat(b1 + b2 * dk * d21, bk * d21);
  const CMatrix c_cl = hcat(c1 + d12 * dk * c2, d12 * ck);
  const CMatrix d_cl = d11 + d12 * dk * d21;

  return from_stacked(g.space, k.space, a_cl, b_cl, c_cl, d_cl,
                      IoSplit{g.io.nw, 0, g.io.nz, 0});
}

Realization series(const Realization& first, const Realization& second) {
  first.validate();
  second.validate();
  if (first.space.var_count() != second.space.var_count())
    throw DimensionError("series: variable count mismatch");
  if (second.io.in() != first.io.out())
    throw DimensionError("series: inner dimension mismatch");
  // transfer = second * first
  const CMatrix a = vcat(hcat(first.a, CMatrix(first.order(), second.order())),
                         hcat(second.b * first.c, second.a));
  const CMatrix b = vcat(first.b, second.b * first.d);
  const CMatrix c = hcat(second.d * first.c, second.c);
  const CMatrix d = second.d * first.d;
  return from_stacked(first.space, second.space, a, b, c, d,
                      IoSplit{first.io.in(), 0, second.io.out(), 0});
}

Realization parallel(const Realization& x, const Realization& y) {
  x.validate();
  y.validate();
  if (x.space.var_count() != y.space.var_count())
    throw DimensionError("parallel: variable count mismatch");
  if (x.io.in() != y.io.in() || x.io.out() != y.io.out())
    throw DimensionError("parallel: I/O mismatch");
  const CMatrix a = block_diag({x.a, y.a});
  const CMatrix b = vcat(x.b, y.b);
  const CMatrix c = hcat(x.c, y.c);
  const CMatrix d = x.d + y.d;
  return from_stacked(x.space, y.space, a, b, c, d, IoSplit{x.io.in(), 0, x.io.out(), 0});
}

Realization invert(const Realization& g) {
  g.validate();
  if (g.d.rows() != g.d.cols()) throw DimensionError("invert: D must be square");
  CMatrix dinv;
  try {
    dinv = inverse(g.d);
  } catch (const SingularError&) {
    throw SingularError("invert: D is singular");
  }
  Realization out = g;
  out.a = g.a - g.b * dinv * g.c;  // cross realization
  out.b = g.b * dinv;
  out.c = -(dinv * g.c);
  out.d = dinv;
  out.io = IoSplit{g.io.out(), 0, g.io.in(), 0};
  out.validate();
  return out;
}

std::size_t default_grid(std::size_t var_count) {
  if (var_count <= 2) return 64;
  if (var_count == 3) return 16;
  return 8;
}

HautusVerdict hautus_stable_grid(const CMatrix& a, const StructuredSpace& space,
                                 std::size_t grid_per_axis, unsigned threads) {
  if (a.rows() != a.cols() || a.rows() != space.total_dim())
    throw DimensionError("hautus_stable_grid: A/space mismatch");
  const std::size_t d = space.var_count();
  const std::size_t n = a.rows();
  HautusVerdict v;
  if (n == 0) {
    v.pass = true;
    v.min_singular = 1.0;
    v.worst_point.assign(d, cplx(1.0, 0.0));
    return v;
  }

  // Diagonal slice is exact: det(I - zA) vanishes at z = 1/lambda, so any
  // eigenvalue with |lambda| >= 1 puts a pencil zero inside the closed
  // polydisk at z = (1/lambda, ..., 1/lambda).
  cplx lam_max(0.0, 0.0);
  for (const auto& l : eigenvalues(a))
    if (std::abs(l) > std::abs(lam_max)) lam_max = l;
  if (std::abs(lam_max) >= 1.0) {
    v.pass = false;
    const cplx z0 = cplx(1.0, 0.0) / lam_max;
    v.worst_point.assign(d, z0);
    v.min_singular =
        smallest_singular_value(CMatrix::identity(n) - z_pencil(space, v.worst_point) * a);
    return v;
  }

  const std::size_t npts = grid_per_axis ? grid_per_axis : default_grid(d);
  std::size_t total = 1;
  for (std::size_t k = 0; k < d; ++k) total *= npts;

  std::vector<cplx> roots(npts);
  for (std::size_t j = 0; j < npts; ++j) {
    const double th = 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(npts);
    roots[j] = cplx(std::cos(th), std::sin(th));
  }

  const unsigned nthreads = std::max(1u, threads);
  std::vector<double> worst_val(nthreads, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> worst_idx(nthreads, 0);

  auto sweep = [&](unsigned tid) {
    for (std::size_t flat = tid; flat < total; flat += nthreads) {
      std::size_t rem = flat;
      PointPolydisk z(d);
      for (std::size_t k = 0; k < d; ++k) {
        z[k] = roots[rem % npts];
        rem /= npts;
      }
      const double s =
          smallest_singular_value(CMatrix::identity(n) - z_pencil(space, z) * a);
      if (s < worst_val[tid]) {
        worst_val[tid] = s;
        worst_idx[tid] = flat;
      }
    }
  };
  if (nthreads == 1) {
    sweep(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(sweep, t);
    for (auto& t : pool) t.join();
  }

  std::size_t best_tid = 0;
  for (unsigned t = 1; t < nthreads; ++t)
    if (worst_val[t] < worst_val[best_tid]) best_tid = t;

  std::size_t rem = worst_idx[best_tid];
  v.worst_point.assign(d, cplx(1.0, 0.0));
  for (std::size_t k = 0; k < d; ++k) {
    v.worst_point[k] = roots[rem % npts];
    rem /= npts;
  }
  v.min_singular = worst_val[best_tid];
  v.pass = v.min_singular > 1e-9 * (1.0 + a.frobenius());
  return v;
}

std::optional<CMatrix> scaled_stable(const CMatrix& a, const StructuredSpace& space) {
  if (a.rows() != a.cols() || a.rows() != space.total_dim())
    throw DimensionError("scaled_stable: A/space mismatch");
  const std::size_t n = a.rows();
  if (n == 0) return CMatrix(0, 0);
  lmi::LmiProblem prob;
  prob.unknowns.push_back(lmi::UnknownSpec::commutant("X", space.z_structure()));
  prob.constraints.push_back(
      {"normalize", lmi::Sense::positive_semidefinite,
       [n](const std::vector<CMatrix>& v) { return v[0] - CMatrix::identity(n); }});
  prob.constraints.push_back(
      {"stein", lmi::Sense::strict_negative, [&a](const std::vector<CMatrix>& v) {
         return a * v[0] * a.adjoint() - v[0];
       }});
  auto sol = lmi::solve_feasibility(prob);
  if (!sol) return std::nullopt;
  return sol->assignment.at("X");
}

Realization assemble_lft(const LftParts& p, const StructuredSpace& uncertainty_space) {
  const std::size_t nu_state = uncertainty_space.total_dim();
  const std::size_t ns = p.a_ss.rows();
  if (p.a_uu.rows() != nu_state || p.a_uu.cols() != nu_state)
    throw DimensionError("assemble_lft: A_UU/space mismatch");
  if (p.a_ss.cols() != ns) throw DimensionError("assemble_lft: A_SS must be square");

  Realization g;
  g.space = uncertainty_space;
  g.space.dims.push_back(ns);  // shift appended as variable d+1
  g.a = vcat(hcat(p.a_uu, p.a_us), hcat(p.a_su, p.a_ss));
  g.b = vcat(hcat(p.b_u1, p.b_u2), hcat(p.b_s1, p.b_s2));
  g.c = vcat(hcat(p.c_1u, p.c_1s), hcat(p.c_2u, p.c_2s));
  g.d = vcat(hcat(p.d11, p.d12), hcat(p.d21, p.d22));
  g.io = IoSplit{p.b_u1.cols(), p.b_u2.cols(), p.c_1u.rows(), p.c_2u.rows()};
  g.validate();
  return g;
}

}  // namespace ndhinf::grsys
