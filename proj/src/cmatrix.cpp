#include "ndhinf/cmatrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ndhinf {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

}  // namespace

CMatrix::CMatrix(std::initializer_list<std::initializer_list<cplx>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  e_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "ragged initializer");
    e_.insert(e_.end(), r.begin(), r.end());
  }
}

CMatrix CMatrix::identity(std::size_t n) {
  CMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

CMatrix CMatrix::diag(const std::vector<cplx>& d) {
  CMatrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

CMatrix CMatrix::adjoint() const {
  CMatrix r(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) r(j, i) = std::conj((*this)(i, j));
  return r;
}

CMatrix CMatrix::transpose() const {
  CMatrix r(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) r(j, i) = (*this)(i, j);
  return r;
}

CMatrix CMatrix::conjugate() const {
  CMatrix r(rows_, cols_);
  for (std::size_t i = 0; i < rows_ * cols_; ++i) r.e_[i] = std::conj(e_[i]);
  return r;
}

CMatrix CMatrix::block(std::size_t i, std::size_t j, std::size_t p, std::size_t q) const {
  require(i + p <= rows_ && j + q <= cols_, "block out of range");
  CMatrix r(p, q);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < q; ++b) r(a, b) = (*this)(i + a, j + b);
  return r;
}

void CMatrix::set_block(std::size_t i, std::size_t j, const CMatrix& m) {
  require(i + m.rows() <= rows_ && j + m.cols() <= cols_, "set_block out of range");
  for (std::size_t a = 0; a < m.rows(); ++a)
    for (std::size_t b = 0; b < m.cols(); ++b) (*this)(i + a, j + b) = m(a, b);
}

double CMatrix::frobenius() const {
  double s = 0.0;
  for (const auto& v : e_) s += std::norm(v);
  return std::sqrt(s);
}

double CMatrix::max_abs() const {
  double s = 0.0;
  for (const auto& v : e_) s = std::max(s, std::abs(v));
  return s;
}

bool CMatrix::is_hermitian(double tol) const {
  if (rows_ != cols_) return false;
  double defect = 0.0;
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      defect += std::norm((*this)(i, j) - std::conj((*this)(j, i)));
  return std::sqrt(2.0 * defect) <= tol * (1.0 + frobenius());
}

CMatrix CMatrix::hermitian_part(double tol) const {
  if (!is_hermitian(tol))
    throw NonHermitianError("matrix fails the Hermitian symmetry check");
  CMatrix r(rows_, cols_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j)
      r(i, j) = 0.5 * ((*this)(i, j) + std::conj((*this)(j, i)));
  return r;
}

CMatrix& CMatrix::operator+=(const CMatrix& other) {
  require(rows_ == other.rows_ && cols_ == other.cols_, "size mismatch in +");
  for (std::size_t i = 0; i < e_.size(); ++i) e_[i] += other.e_[i];
  return *this;
}

CMatrix& CMatrix::operator-=(const CMatrix& other) {
  require(rows_ == other.rows_ && cols_ == other.cols_, "size mismatch in -");
  for (std::size_t i = 0; i < e_.size(); ++i) e_[i] -= other.e_[i];
  return *this;
}

CMatrix& CMatrix::operator*=(cplx s) {
  for (auto& v : e_) v *= s;
  return *this;
}

CMatrix operator+(const CMatrix& a, const CMatrix& b) {
  CMatrix r = a;
  r += b;
  return r;
}

CMatrix operator-(const CMatrix& a, const CMatrix& b) {
  CMatrix r = a;
  r -= b;
  return r;
}

CMatrix operator-(const CMatrix& a) { return cplx(-1.0, 0.0) * a; }

CMatrix operator*(const CMatrix& a, const CMatrix& b) {
  require(a.cols() == b.rows(), "size mismatch in *");
  CMatrix r(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const cplx aik = a(i, k);
      if (aik == cplx(0.0, 0.0)) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) r(i, j) += aik * b(k, j);
    }
  }
  return r;
}

CMatrix operator*(cplx s, const CMatrix& a) {
  CMatrix r = a;
  r *= s;
  return r;
}

CMatrix operator*(double s, const CMatrix& a) { return cplx(s, 0.0) * a; }

CMatrix hcat(const CMatrix& a, const CMatrix& b) { return hcat(std::vector<CMatrix>{a, b}); }
CMatrix vcat(const CMatrix& a, const CMatrix& b) { return vcat(std::vector<CMatrix>{a, b}); }

CMatrix hcat(const std::vector<CMatrix>& parts) {
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    if (p.rows() > 0) rows = std::max(rows, p.rows());
    cols += p.cols();
  }
  for (const auto& p : parts)
    require(p.rows() == rows || p.cols() == 0, "hcat row mismatch");
  CMatrix r(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    if (!p.empty()) r.set_block(0, off, p);
    off += p.cols();
  }
  return r;
}

CMatrix vcat(const std::vector<CMatrix>& parts) {
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    if (p.cols() > 0) cols = std::max(cols, p.cols());
    rows += p.rows();
  }
  for (const auto& p : parts)
    require(p.cols() == cols || p.rows() == 0, "vcat column mismatch");
  CMatrix r(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    if (!p.empty()) r.set_block(off, 0, p);
    off += p.rows();
  }
  return r;
}

CMatrix block_diag(const std::vector<CMatrix>& parts) {
  std::size_t rows = 0, cols = 0;
  for (const auto& p : parts) {
    rows += p.rows();
    cols += p.cols();
  }
  CMatrix r(rows, cols);
  std::size_t i = 0, j = 0;
  for (const auto& p : parts) {
    if (!p.empty()) r.set_block(i, j, p);
    i += p.rows();
    j += p.cols();
  }
  return r;
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix r(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const cplx aij = a(i, j);
      if (aij == cplx(0.0, 0.0)) continue;
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q)
          r(i * b.rows() + p, j * b.cols() + q) = aij * b(p, q);
    }
  return r;
}

// ---------------------------------------------------------------------------
// Hermitian eigensolver
// ---------------------------------------------------------------------------

namespace {

// Cyclic Jacobi for a real symmetric matrix held in a flat vector.
// Rotations accumulate into v (n x n, row-major).
void jacobi_real_symmetric(std::vector<double>& a, std::vector<double>& v,
                           std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) v[i * n + j] = (i == j) ? 1.0 : 0.0;
  if (n < 2) return;

  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
    return std::sqrt(2.0 * s);
  };
  double scale = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) scale = std::max(scale, std::abs(a[i]));
  if (scale == 0.0) return;
  const double stop = 1e-15 * scale * n;

  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_norm() <= stop) return;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) <= 1e-18 * scale) continue;
        const double app = a[p * n + p], aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0)
                             ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                             : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  throw NoConvergenceError("Jacobi sweep cap exceeded");
}

}  // namespace

HermEig herm_eig(const CMatrix& m, double herm_tol) {
  if (m.rows() != m.cols()) throw DimensionError("herm_eig: square matrix required");
  const std::size_t n = m.rows();
  HermEig out;
  out.vectors = CMatrix(n, n);
  if (n == 0) return out;
  const CMatrix h = m.hermitian_part(herm_tol);

  // Real embedding [Re -Im; Im Re], size 2n.
  const std::size_t n2 = 2 * n;
  std::vector<double> a(n2 * n2, 0.0), v(n2 * n2, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const cplx hij = h(i, j);
      a[i * n2 + j] = hij.real();
      a[i * n2 + (j + n)] = -hij.imag();
      a[(i + n) * n2 + j] = hij.imag();
      a[(i + n) * n2 + (j + n)] = hij.real();
    }
  jacobi_real_symmetric(a, v, n2);

  std::vector<std::size_t> order(n2);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a[x * n2 + x] < a[y * n2 + y]; });

  // Each complex eigenvector shows up twice in the embedded spectrum (the
  // i-multiplied copy).  Walk ascending and keep candidates that are not in
  // the span of what is already accepted.
  auto candidate = [&](std::size_t idx) {
    std::vector<cplx> x(n);
    for (std::size_t i = 0; i < n; ++i)
      x[i] = cplx(v[i * n2 + idx], v[(i + n) * n2 + idx]);
    return x;
  };
  std::vector<double> values;
  std::vector<std::vector<cplx>> accepted;
  auto residual = [&](std::vector<cplx>& x, double lam) {
    for (std::size_t k = 0; k < accepted.size(); ++k) {
      if (std::abs(values[k] - lam) > 1e-6 * (1.0 + std::abs(lam))) continue;
      cplx ip(0.0, 0.0);
      for (std::size_t i = 0; i < n; ++i) ip += std::conj(accepted[k][i]) * x[i];
      for (std::size_t i = 0; i < n; ++i) x[i] -= ip * accepted[k][i];
    }
    double nrm = 0.0;
    for (const auto& c : x) nrm += std::norm(c);
    return std::sqrt(nrm);
  };
  std::vector<bool> used(n2, false);
  for (std::size_t pos = 0; pos < n2 && accepted.size() < n; ++pos) {
    const std::size_t idx = order[pos];
    std::vector<cplx> x = candidate(idx);
    const double lam = a[idx * n2 + idx];
    const double nrm = residual(x, lam);
    if (nrm < 0.35) continue;
    for (auto& c : x) c /= nrm;
    accepted.push_back(std::move(x));
    values.push_back(lam);
    used[pos] = true;
  }
  // Fallback for heavily degenerate spectra: within each unresolved value
  // cluster pick the leftover candidate with the largest residual.
  while (accepted.size() < n) {
    double best = 0.0;
    std::size_t best_pos = n2;
    std::vector<cplx> best_x;
    for (std::size_t pos = 0; pos < n2; ++pos) {
      if (used[pos]) continue;
      const std::size_t idx = order[pos];
      std::vector<cplx> x = candidate(idx);
      const double nrm = residual(x, a[idx * n2 + idx]);
      if (nrm > best) {
        best = nrm;
        best_pos = pos;
        best_x = std::move(x);
      }
    }
    if (best_pos == n2 || best < 1e-6)
      throw NoConvergenceError("herm_eig: spectrum de-duplication failed");
    for (auto& c : best_x) c /= best;
    const std::size_t ins_idx = order[best_pos];
    const double lam = a[ins_idx * n2 + ins_idx];
    // keep values ascending
    std::size_t at = 0;
    while (at < values.size() && values[at] <= lam) ++at;
    values.insert(values.begin() + at, lam);
    accepted.insert(accepted.begin() + at, std::move(best_x));
    used[best_pos] = true;
  }

  out.values = values;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = accepted[j][i];
  return out;
}

double min_eig(const CMatrix& m, double herm_tol) {
  if (m.rows() == 0) return 0.0;
  return herm_eig(m, herm_tol).values.front();
}

double max_eig(const CMatrix& m, double herm_tol) {
  if (m.rows() == 0) return 0.0;
  return herm_eig(m, herm_tol).values.back();
}

double largest_singular_value(const CMatrix& m) {
  if (m.empty()) return 0.0;
  const CMatrix g = (m.adjoint() * m).hermitian_part(1e-9);
  const double lam = max_eig(g);
  return std::sqrt(std::max(0.0, lam));
}

double smallest_singular_value(const CMatrix& m) {
  if (m.empty()) return 0.0;
  const CMatrix g = (m.adjoint() * m).hermitian_part(1e-9);
  const double lam = min_eig(g);
  return std::sqrt(std::max(0.0, lam));
}

// ---------------------------------------------------------------------------
// General eigenvalues: Householder Hessenberg + shifted QR
// ---------------------------------------------------------------------------

namespace {

void hessenberg_reduce(CMatrix& h) {
  const std::size_t n = h.rows();
  if (n < 3) return;
  for (std::size_t k = 0; k + 2 < n; ++k) {
    // Householder vector for column k, rows k+1..n-1.
    double xnorm = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) xnorm += std::norm(h(i, k));
    xnorm = std::sqrt(xnorm);
    if (xnorm <= 1e-300) continue;
    cplx alpha = h(k + 1, k);
    const double aa = std::abs(alpha);
    const cplx phase = (aa > 0.0) ? alpha / aa : cplx(1.0, 0.0);
    const cplx beta = -phase * xnorm;
    std::vector<cplx> u(n, cplx(0.0, 0.0));
    u[k + 1] = alpha - beta;
    for (std::size_t i = k + 2; i < n; ++i) u[i] = h(i, k);
    double unorm2 = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) unorm2 += std::norm(u[i]);
    if (unorm2 <= 1e-300) continue;
    // H <- (I - 2uu*/|u|^2) H (I - 2uu*/|u|^2)
    for (std::size_t j = 0; j < n; ++j) {
      cplx s(0.0, 0.0);
      for (std::size_t i = k + 1; i < n; ++i) s += std::conj(u[i]) * h(i, j);
      s *= 2.0 / unorm2;
      for (std::size_t i = k + 1; i < n; ++i) h(i, j) -= s * u[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      cplx s(0.0, 0.0);
      for (std::size_t j = k + 1; j < n; ++j) s += h(i, j) * u[j];
      s *= 2.0 / unorm2;
      for (std::size_t j = k + 1; j < n; ++j) h(i, j) -= s * std::conj(u[j]);
    }
  }
}

}  // namespace

std::vector<cplx> eigenvalues(const CMatrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("eigenvalues: square matrix required");
  const std::size_t n = m.rows();
  std::vector<cplx> lam;
  if (n == 0) return lam;
  CMatrix h = m;
  hessenberg_reduce(h);

  const double scale = std::max(1e-300, h.max_abs());
  std::size_t hi = n;  // active block is rows/cols [0, hi)
  long iter_budget = 60 * static_cast<long>(n) + 200;
  while (hi > 0) {
    // Deflate tiny subdiagonals.
    bool deflated = true;
    while (deflated && hi > 1) {
      deflated = false;
      const double tol =
          1e-15 * (std::abs(h(hi - 2, hi - 2)) + std::abs(h(hi - 1, hi - 1)) + 1e-30 * scale);
      if (std::abs(h(hi - 1, hi - 2)) <= tol) {
        lam.push_back(h(hi - 1, hi - 1));
        --hi;
        deflated = true;
      }
    }
    if (hi == 1) {
      lam.push_back(h(0, 0));
      break;
    }
    if (hi == 0) break;
    // Find the start of the active unreduced block.
    std::size_t lo = hi - 1;
    while (lo > 0) {
      const double tol =
          1e-15 * (std::abs(h(lo - 1, lo - 1)) + std::abs(h(lo, lo)) + 1e-30 * scale);
      if (std::abs(h(lo, lo - 1)) <= tol) {
        h(lo, lo - 1) = 0.0;
        break;
      }
      --lo;
    }
    if (--iter_budget < 0) throw NoConvergenceError("QR iteration cap exceeded");

    // Wilkinson shift from the trailing 2x2 of the active block.
    const cplx a = h(hi - 2, hi - 2), b = h(hi - 2, hi - 1);
    const cplx c = h(hi - 1, hi - 2), d = h(hi - 1, hi - 1);
    const cplx tr = a + d, det = a * d - b * c;
    const cplx disc = std::sqrt(tr * tr - 4.0 * det);
    const cplx r1 = 0.5 * (tr + disc), r2 = 0.5 * (tr - disc);
    const cplx mu = (std::abs(r1 - d) < std::abs(r2 - d)) ? r1 : r2;

    // One implicit single-shift QR sweep on [lo, hi) via Givens chase.
    cplx x = h(lo, lo) - mu;
    cplx y = h(lo + 1, lo);
    for (std::size_t k = lo; k + 1 < hi; ++k) {
      // Givens zeroing y against x.
      const double nr = std::hypot(std::abs(x), std::abs(y));
      cplx cs(1.0, 0.0), sn(0.0, 0.0);
      if (nr > 0.0) {
        cs = std::abs(x) / nr;
        const cplx phase = (std::abs(x) > 0.0) ? x / std::abs(x) : cplx(1.0, 0.0);
        sn = phase * std::conj(y) / nr;
      }
      // Apply G* from the left to rows k, k+1 and G from the right to cols.
      const std::size_t col0 = (k > lo) ? k - 1 : lo;
      for (std::size_t j = col0; j < hi; ++j) {
        const cplx t1 = h(k, j), t2 = h(k + 1, j);
        h(k, j) = cs * t1 + sn * t2;
        h(k + 1, j) = -std::conj(sn) * t1 + cs * t2;
      }
      const std::size_t rend = std::min(hi, k + 3);
      for (std::size_t i = lo; i < rend; ++i) {
        const cplx t1 = h(i, k), t2 = h(i, k + 1);
        h(i, k) = cs * t1 + std::conj(sn) * t2;
        h(i, k + 1) = -sn * t1 + cs * t2;
      }
      if (k + 2 < hi) {
        x = h(k + 1, k);
        y = h(k + 2, k);
      }
    }
  }
  return lam;
}

double spectral_radius(const CMatrix& m) {
  double r = 0.0;
  for (const auto& l : eigenvalues(m)) r = std::max(r, std::abs(l));
  return r;
}

// ---------------------------------------------------------------------------
// LU solve
// ---------------------------------------------------------------------------

namespace {

struct Lu {
  CMatrix lu;
  std::vector<std::size_t> perm;
  double umin = 0.0, umax = 0.0;
};

Lu lu_factor(const CMatrix& m, double pivot_tol) {
  const std::size_t n = m.rows();
  Lu f{m, std::vector<std::size_t>(n), 0.0, 0.0};
  std::iota(f.perm.begin(), f.perm.end(), 0);
  const double mnorm = std::max(m.max_abs(), 1e-300);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(f.lu(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      const double v = std::abs(f.lu(i, k));
      if (v > best) {
        best = v;
        piv = i;
      }
    }
    if (best < pivot_tol * mnorm)
      throw SingularError("solve_linear: pivot below threshold");
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(f.lu(k, j), f.lu(piv, j));
      std::swap(f.perm[k], f.perm[piv]);
    }
    const cplx pivot = f.lu(k, k);
    const double ap = std::abs(pivot);
    f.umax = std::max(f.umax, ap);
    f.umin = (k == 0) ? ap : std::min(f.umin, ap);
    for (std::size_t i = k + 1; i < n; ++i) {
      const cplx l = f.lu(i, k) / pivot;
      f.lu(i, k) = l;
      if (l == cplx(0.0, 0.0)) continue;
      for (std::size_t j = k + 1; j < n; ++j) f.lu(i, j) -= l * f.lu(k, j);
    }
  }
  return f;
}

CMatrix lu_solve(const Lu& f, const CMatrix& rhs) {
  const std::size_t n = f.lu.rows();
  CMatrix x(n, rhs.cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < rhs.cols(); ++j) x(i, j) = rhs(f.perm[i], j);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = k + 1; i < n; ++i) {
      const cplx l = f.lu(i, k);
      if (l == cplx(0.0, 0.0)) continue;
      for (std::size_t j = 0; j < rhs.cols(); ++j) x(i, j) -= l * x(k, j);
    }
  for (std::size_t k = n; k-- > 0;) {
    for (std::size_t j = 0; j < rhs.cols(); ++j) x(k, j) /= f.lu(k, k);
    for (std::size_t i = 0; i < k; ++i) {
      const cplx u = f.lu(i, k);
      if (u == cplx(0.0, 0.0)) continue;
      for (std::size_t j = 0; j < rhs.cols(); ++j) x(i, j) -= u * x(k, j);
    }
  }
  return x;
}

}  // namespace

LinearSolve solve_linear_full(const CMatrix& m, const CMatrix& rhs, double pivot_tol) {
  if (m.rows() != m.cols()) throw DimensionError("solve_linear: square matrix required");
  if (m.rows() != rhs.rows()) throw DimensionError("solve_linear: rhs row mismatch");
  if (m.rows() == 0) return {CMatrix(0, rhs.cols()), 1.0};
  const Lu f = lu_factor(m, pivot_tol);
  CMatrix x = lu_solve(f, rhs);
  // Iterative refinement; same factorization, cheap at this scale.
  const double bnorm = std::max(rhs.frobenius(), 1e-300);
  for (int it = 0; it < 3; ++it) {
    const CMatrix r = rhs - m * x;
    if (r.frobenius() <= 1e-14 * bnorm) break;
    x += lu_solve(f, r);
  }
  return {std::move(x), f.umin / std::max(f.umax, 1e-300)};
}

CMatrix solve_linear(const CMatrix& m, const CMatrix& rhs, double pivot_tol) {
  return solve_linear_full(m, rhs, pivot_tol).x;
}

CMatrix inverse(const CMatrix& m, double pivot_tol) {
  return solve_linear(m, CMatrix::identity(m.rows()), pivot_tol);
}

CMatrix psd_sqrt(const CMatrix& m, double clamp_tol) {
  const HermEig e = herm_eig(m);
  const std::size_t n = m.rows();
  const double scale = (n > 0) ? std::max(1.0, std::abs(e.values.back())) : 1.0;
  CMatrix r(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    double lam = e.values[k];
    if (lam < 0.0) {
      if (lam < -clamp_tol * scale)
        throw NonHermitianError("psd_sqrt: matrix is not PSD");
      lam = 0.0;
    }
    const double s = std::sqrt(lam);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        r(i, j) += s * e.vectors(i, k) * std::conj(e.vectors(j, k));
  }
  return r.hermitian_part(1e-9);
}

CMatrix kernel_basis(const CMatrix& m, double rel_tol) {
  const std::size_t n = m.cols();
  if (n == 0) return CMatrix(0, 0);
  if (m.rows() == 0) return CMatrix::identity(n);
  const CMatrix g = (m.adjoint() * m).hermitian_part(1e-9);
  const HermEig e = herm_eig(g);
  const double cut = rel_tol * std::max(1.0, e.values.back());
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < n; ++k)
    if (e.values[k] <= cut) keep.push_back(k);
  CMatrix b(n, keep.size());
  for (std::size_t j = 0; j < keep.size(); ++j)
    for (std::size_t i = 0; i < n; ++i) b(i, j) = e.vectors(i, keep[j]);
  return b;
}

CMatrix range_basis(const CMatrix& m, double rel_tol) {
  const std::size_t n = m.rows();
  if (n == 0 || m.cols() == 0) return CMatrix(n, 0);
  const CMatrix g = (m * m.adjoint()).hermitian_part(1e-9);
  const HermEig e = herm_eig(g);
  const double cut = rel_tol * std::max(1.0, e.values.back());
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < n; ++k)
    if (e.values[k] > cut) keep.push_back(k);
  CMatrix b(n, keep.size());
  for (std::size_t j = 0; j < keep.size(); ++j)
    for (std::size_t i = 0; i < n; ++i) b(i, j) = e.vectors(i, keep[j]);
  return b;
}

}  // namespace ndhinf
