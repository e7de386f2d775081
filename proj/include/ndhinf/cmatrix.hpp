#pragma once

// Dense complex matrices and the handful of factorizations the rest of the
// library leans on: Hermitian eigensolver (cyclic Jacobi on the real
// embedding), Hessenberg-QR eigenvalues, LU solves.  Desk-scale only.

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace ndhinf {

using cplx = std::complex<double>;

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};
struct NonHermitianError : Error {
  explicit NonHermitianError(const std::string& msg) : Error(msg) {}
};
struct SingularError : Error {
  explicit SingularError(const std::string& msg) : Error(msg) {}
};
struct NoConvergenceError : Error {
  explicit NoConvergenceError(const std::string& msg) : Error(msg) {}
};

class CMatrix {
 public:
  CMatrix() = default;
  CMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), e_(rows * cols, cplx(0.0, 0.0)) {}
  CMatrix(std::initializer_list<std::initializer_list<cplx>> rows);

  static CMatrix zero(std::size_t rows, std::size_t cols) { return CMatrix(rows, cols); }
  static CMatrix identity(std::size_t n);
  static CMatrix diag(const std::vector<cplx>& d);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  cplx& operator()(std::size_t i, std::size_t j) { return e_[i * cols_ + j]; }
  const cplx& operator()(std::size_t i, std::size_t j) const { return e_[i * cols_ + j]; }

  CMatrix adjoint() const;
  CMatrix transpose() const;
  CMatrix conjugate() const;

  CMatrix block(std::size_t i, std::size_t j, std::size_t p, std::size_t q) const;
  void set_block(std::size_t i, std::size_t j, const CMatrix& m);

  double frobenius() const;
  double max_abs() const;
  bool is_hermitian(double tol = 1e-12) const;
  // Symmetrize in place; throws NonHermitianError if the defect is too large.
  CMatrix hermitian_part(double tol = 1e-12) const;

  CMatrix& operator+=(const CMatrix& other);
  CMatrix& operator-=(const CMatrix& other);
  CMatrix& operator*=(cplx s);

  const std::vector<cplx>& data() const { return e_; }
  std::vector<cplx>& data() { return e_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<cplx> e_;
};

CMatrix operator+(const CMatrix& a, const CMatrix& b);
CMatrix operator-(const CMatrix& a, const CMatrix& b);
CMatrix operator-(const CMatrix& a);
CMatrix operator*(const CMatrix& a, const CMatrix& b);
CMatrix operator*(cplx s, const CMatrix& a);
CMatrix operator*(double s, const CMatrix& a);

CMatrix hcat(const CMatrix& a, const CMatrix& b);
CMatrix vcat(const CMatrix& a, const CMatrix& b);
CMatrix hcat(const std::vector<CMatrix>& parts);
CMatrix vcat(const std::vector<CMatrix>& parts);
CMatrix block_diag(const std::vector<CMatrix>& parts);
CMatrix kron(const CMatrix& a, const CMatrix& b);

struct HermEig {
  std::vector<double> values;  // ascending
  CMatrix vectors;             // unitary, columns are eigenvectors
};

// Hermitian eigensolver: cyclic Jacobi on the 2n x 2n real embedding
// [Re -Im; Im Re], then de-duplication of the doubled spectrum back to
// complex eigenpairs.  Throws NonHermitianError if the symmetry check fails.
HermEig herm_eig(const CMatrix& m, double herm_tol = 1e-12);

double min_eig(const CMatrix& m, double herm_tol = 1e-12);
double max_eig(const CMatrix& m, double herm_tol = 1e-12);

// sigma(M) = sqrt(max eig of M* M).
double largest_singular_value(const CMatrix& m);
double smallest_singular_value(const CMatrix& m);

// General (non-Hermitian) eigenvalues via Hessenberg reduction and shifted QR.
std::vector<cplx> eigenvalues(const CMatrix& m);
double spectral_radius(const CMatrix& m);

struct LinearSolve {
  CMatrix x;
  double rcond;  // crude reciprocal condition estimate from |U_ii| spread
};

// Solves M X = RHS by partially pivoted LU with iterative refinement.
// Throws SingularError when a pivot falls below pivot_tol * max|M|.
LinearSolve solve_linear_full(const CMatrix& m, const CMatrix& rhs,
                              double pivot_tol = 1e-13);
CMatrix solve_linear(const CMatrix& m, const CMatrix& rhs, double pivot_tol = 1e-13);
CMatrix inverse(const CMatrix& m, double pivot_tol = 1e-13);

// Principal square root of a PSD Hermitian matrix (eigendecomposition route);
// small negative eigenvalues within tol are clamped to zero.
CMatrix psd_sqrt(const CMatrix& m, double clamp_tol = 1e-12);

// Orthonormal basis of the kernel of M (columns), via herm_eig of M* M.
CMatrix kernel_basis(const CMatrix& m, double rel_tol = 1e-10);
// Orthonormal basis of the range of M (columns), via herm_eig of M M*.
CMatrix range_basis(const CMatrix& m, double rel_tol = 1e-10);

}  // namespace ndhinf
