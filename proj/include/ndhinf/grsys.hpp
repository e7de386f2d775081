#pragma once

// Givone-Roesser realizations over the polydisk: evaluation (commutative and
// operator-tuple), composition, closed-loop assembly, LFT uncertainty
// aggregation, and the two stability tests (sampled Hautus, certified scaled).

#include <optional>
#include <vector>

#include "ndhinf/cmatrix.hpp"
#include "ndhinf/lmi.hpp"

namespace ndhinf::grsys {

struct StructuredSpace {
  std::vector<std::size_t> dims;  // one block per variable

  std::size_t var_count() const { return dims.size(); }
  std::size_t total_dim() const;
  lmi::ScalingStructure z_structure() const;  // scalar-repeated per variable

  friend bool operator==(const StructuredSpace&, const StructuredSpace&) = default;
};

// Interleaves two spaces variable by variable; perm maps interleaved state
// indices to indices of the stacked vector [x1_all; x2_all].
StructuredSpace interleave(const StructuredSpace& a, const StructuredSpace& b,
                           std::vector<std::size_t>& perm);

using PointPolydisk = std::vector<cplx>;

struct IoSplit {
  std::size_t nw = 0, nu = 0, nz = 0, ny = 0;
  std::size_t in() const { return nw + nu; }
  std::size_t out() const { return nz + ny; }
};

struct SingularPencilError : Error {
  explicit SingularPencilError(const std::string& msg) : Error(msg) {}
};
struct D22NotZeroError : Error {
  explicit D22NotZeroError(const std::string& msg) : Error(msg) {}
};

struct Realization {
  StructuredSpace space;
  CMatrix a, b, c, d;
  IoSplit io;

  std::size_t order() const { return space.total_dim(); }
  void validate() const;  // dimension coherence

  CMatrix b1() const { return b.block(0, 0, order(), io.nw); }
  CMatrix b2() const { return b.block(0, io.nw, order(), io.nu); }
  CMatrix c1() const { return c.block(0, 0, io.nz, order()); }
  CMatrix c2() const { return c.block(io.nz, 0, io.ny, order()); }
  CMatrix d11() const { return d.block(0, 0, io.nz, io.nw); }
  CMatrix d12() const { return d.block(0, io.nw, io.nz, io.nu); }
  CMatrix d21() const { return d.block(io.nz, 0, io.ny, io.nw); }
  CMatrix d22() const { return d.block(io.nz, io.nw, io.ny, io.nu); }

  CMatrix system_matrix() const;  // [[A, B],[C, D]]

  // Single-block realization (all inputs in nw, all outputs in nz).
  static Realization single_block(StructuredSpace space, CMatrix a, CMatrix b, CMatrix c,
                                  CMatrix d);
  // Static (stateless) realization of a constant matrix over d variables.
  static Realization constant(std::size_t var_count, const CMatrix& d);
};

struct OperatorTuple {
  std::vector<CMatrix> deltas;  // one k x k matrix per variable
  std::size_t common_dim() const;
  bool is_contractive(double tol = 1e-12) const;
};

// Z(z) = diag(z_1 I_{n_1}, ..., z_d I_{n_d}).
CMatrix z_pencil(const StructuredSpace& space, const PointPolydisk& z);

// G(z) = D + C (I - Z(z) A)^{-1} Z(z) B.
CMatrix eval_transfer(const Realization& g, const PointPolydisk& z);

// F(delta) = D ⊗ I + (C ⊗ I)(I - Z(delta)(A ⊗ I))^{-1} Z(delta) (B ⊗ I).
CMatrix eval_nc(const Realization& g, const OperatorTuple& delta);

// Feedback closure of G against controller K (K maps y -> u; D22 must be 0).
// The controller is a Realization whose full input is y and full output is u.
// The closed-loop state interleaves plant and controller blocks per variable.
Realization close_loop(const Realization& g, const Realization& k);

// Series connection: transfer of the result is second(z) * first(z).
Realization series(const Realization& first, const Realization& second);
Realization parallel(const Realization& a, const Realization& b);
// Cross-realization inverse; requires square invertible D.
Realization invert(const Realization& g);

struct HautusVerdict {
  bool pass = false;
  PointPolydisk worst_point;
  double min_singular = 0.0;
};

std::size_t default_grid(std::size_t var_count);

// Sampled stability check: the pencil I - Z(z)A is probed on the diagonal
// slice (exactly, through the eigenvalues of A) and on a torus grid.  A pass
// is sampled evidence, not a certificate.
HautusVerdict hautus_stable_grid(const CMatrix& a, const StructuredSpace& space,
                                 std::size_t grid_per_axis = 0, unsigned threads = 1);

// Certified conservative test: X > 0 in the commutant with A X A* - X < 0.
std::optional<CMatrix> scaled_stable(const CMatrix& a, const StructuredSpace& space);

struct LftParts {
  CMatrix a_uu, a_us, a_su, a_ss;
  CMatrix b_u1, b_u2, b_s1, b_s2;
  CMatrix c_1u, c_1s, c_2u, c_2s;
  CMatrix d11, d12, d21, d22;
};

// Aggregate realization over X_U ⊕ X_S with the shift appended as variable
// d+1.  Inputs split (w, u), outputs (z, y).
Realization assemble_lft(const LftParts& parts, const StructuredSpace& uncertainty_space);

}  // namespace ndhinf::grsys
