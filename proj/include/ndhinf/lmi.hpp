#pragma once

// Strict-feasibility engine for affine Hermitian matrix inequalities over
// structured unknowns, plus the two Finsler completions and the scaled-norm
// bisection kernel.
//
// The solver runs a phase-I barrier: minimize the common slack level t
// subject to every constraint <= t*I, by damped Newton on a log-det barrier
// over the real embedding of the complex Hermitian constraint matrices.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ndhinf/cmatrix.hpp"

namespace ndhinf::lmi {

enum class BlockKind { scalar_repeated, full };

// Block structure of the uncertainty algebra.  A scalar_repeated block is
// lambda*I on its block (like one variable of Z(z)); a full block is an
// unrestricted matrix algebra there.  Unknowns declared over a structure
// live in its commutant: full Hermitian blocks opposite scalar_repeated
// blocks, scalar multiples of I opposite full blocks.
struct ScalingStructure {
  struct Block {
    std::size_t dim;
    BlockKind kind;
  };
  std::vector<Block> blocks;

  static ScalingStructure scalar_blocks(const std::vector<std::size_t>& dims);
  static ScalingStructure single_full(std::size_t dim);
  static ScalingStructure single_scalar(std::size_t dim);

  std::size_t total_dim() const;
  std::size_t commutant_param_count() const;
};

// Builds a commutant member from a real parameter vector (Hermitian result).
CMatrix commutant_from_params(const ScalingStructure& s, const double* params);

struct UnknownSpec {
  enum class Kind { commutant, hermitian, rectangular, reals };
  std::string name;
  Kind kind = Kind::hermitian;
  ScalingStructure structure;    // kind == commutant
  std::size_t rows = 0, cols = 0;  // hermitian (rows==cols), rectangular, reals (rows x 1)

  static UnknownSpec commutant(std::string name, ScalingStructure s);
  static UnknownSpec hermitian(std::string name, std::size_t n);
  static UnknownSpec rectangular(std::string name, std::size_t rows, std::size_t cols);
  static UnknownSpec reals(std::string name, std::size_t count);

  std::size_t param_count() const;
};

enum class Sense { strict_negative, strict_positive, positive_semidefinite };

// Affine map from the unknown assignment (one matrix per unknown, in
// declaration order; `reals` unknowns arrive as an n x 1 real column) to a
// Hermitian constraint matrix.
using AffineMap = std::function<CMatrix(const std::vector<CMatrix>&)>;

struct Constraint {
  std::string name;
  Sense sense = Sense::strict_negative;
  AffineMap map;
};

struct LmiProblem {
  std::vector<UnknownSpec> unknowns;
  std::vector<Constraint> constraints;
};

struct LmiOptions {
  double target_margin = 1e-7;   // post-normalization slack for strict constraints
  double psd_tolerance = 1e-9;   // allowed eigenvalue deficit on PSD constraints
  std::size_t unknown_cap = 400;
  double bound_radius = 1e12;    // box bound on the real parameters
  int max_newton_iters = 2000;
};

struct LmiSolution {
  std::map<std::string, CMatrix> assignment;
  double margin = 0.0;            // min normalized slack over strict constraints
  double phase1_objective = 0.0;  // final common slack level t
};

struct SizeCapError : Error {
  explicit SizeCapError(const std::string& msg) : Error(msg) {}
};

// Returns a strictly feasible assignment or nullopt when the phase-I optimum
// cannot reach the target margin.  Deterministic.
std::optional<LmiSolution> solve_feasibility(const LmiProblem& problem,
                                             const LmiOptions& options = {});

// Post-hoc check used by tests: recompute every constraint at the assignment
// and return the worst normalized slack violation (negative means violated).
double verify_solution(const LmiProblem& problem, const LmiSolution& solution,
                       const LmiOptions& options = {});

// Finsler's lemma: mu R*R > H has a solution mu > 0 iff the compression of H
// to ker R is negative definite (vacuous when the kernel is trivial).
std::optional<double> finsler_scalar(const CMatrix& r, const CMatrix& h);

// Finsler's lemma II: find J with H + R*J*S + S*J R < 0.  Returns nullopt
// exactly when one of the kernel compressions fails to be negative definite.
// The construction is explicit: decompose along ker R ∩ ker S, the
// complements inside ker R and ker S, and the residual subspace; couple the
// free blocks through the Schur-complement completion and push the residual
// diagonal down to -delta*I, with delta verified and adjusted by doubling.
std::optional<CMatrix> finsler_complete(const CMatrix& h, const CMatrix& r,
                                        const CMatrix& s);

struct ScaledNormResult {
  double muhat = 0.0;
  CMatrix witness;  // structured X > 0 with A X A* - gamma^2 X < 0 at gamma = muhat + tol
};

// Smallest gamma (within tol) admitting a structured Lyapunov witness, by
// bisection over [0, sigma(A)].  rho(A) - tol <= muhat <= sigma(A) + tol.
ScaledNormResult scaled_norm_bisect(const CMatrix& a, const ScalingStructure& structure,
                                    double tol);

}  // namespace ndhinf::lmi
