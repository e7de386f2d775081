#pragma once

// LMI-based stabilization and scaled H-infinity synthesis: structured Stein
// detectability/stabilizability tests, gain construction through the Finsler
// completion, observer-based stabilizing controllers, performance
// feasibility, and full-order controller reconstruction.

#include <map>
#include <optional>

#include "ndhinf/grsys.hpp"
#include "ndhinf/lmi.hpp"

namespace ndhinf::synth {

using grsys::Realization;
using grsys::StructuredSpace;

struct ConstructionFailedError : Error {
  explicit ConstructionFailedError(const std::string& msg) : Error(msg) {}
};
struct ReconstructionFailedError : Error {
  explicit ReconstructionFailedError(const std::string& msg) : Error(msg) {}
};

struct GainPair {
  CMatrix f;          // state feedback, A + B2 F scaled stable
  CMatrix l;          // output injection, A + L C2 scaled stable
  CMatrix f_witness;  // structured Y with (A+B2F) Y (A+B2F)* - Y < 0
  CMatrix l_witness;  // structured X with (A+LC2)* X (A+LC2) - X < 0
};

// Structured X > 0 with A* X A - X - C2* C2 < 0.  Also evaluates the kernel
// form and insists the two verdicts agree.
std::optional<CMatrix> detectable_lmi(const CMatrix& c2, const CMatrix& a,
                                      const StructuredSpace& space);

// Structured Y > 0 with A Y A* - Y - B2 B2* < 0 (dual, kernel form checked).
std::optional<CMatrix> stabilizable_lmi(const CMatrix& a, const CMatrix& b2,
                                        const StructuredSpace& space);

// State feedback from a stabilizability certificate: F with
// (A + B2 F) Y (A + B2 F)* - Y < 0.
CMatrix gain_from_certificate(const CMatrix& a, const CMatrix& b2, const CMatrix& y);

// Output injection from a detectability certificate: L with
// (A + L C2)* X (A + L C2) - X < 0.
CMatrix injection_from_certificate(const CMatrix& c2, const CMatrix& a, const CMatrix& x);

// Convenience: run both LMIs and build the gains; nullopt when either fails.
std::optional<GainPair> make_gains(const CMatrix& a, const CMatrix& b2, const CMatrix& c2,
                                   const StructuredSpace& space);

// Observer-based controller [[A + B2 F + L C2, -L],[F, 0]] as a realization
// over the plant's space (input y, output u).
Realization observer_controller(const CMatrix& a, const CMatrix& b2, const CMatrix& c2,
                                const StructuredSpace& space, const GainPair& gains);

struct HinfCertificate {
  CMatrix x, y;                          // structured PSD scalings
  std::map<std::string, double> margins;  // per-LMI normalized slacks
  bool coupling_perturbed = false;        // epsilon-inflation applied
};

// Scaled H-infinity solvability test (projected LMIs + coupling).
std::optional<HinfCertificate> hinf_feasibility(const Realization& g);

// Full-order controller from a certificate; the closed loop is verified to
// satisfy the scaled-performance inequality strictly before returning.
Realization hinf_reconstruct(const Realization& g, const HinfCertificate& cert,
                             const StructuredSpace& controller_space = {});

// Structured X > 0 making the whole system matrix a scaled contraction.
std::optional<CMatrix> scaled_performance(const Realization& g);

}  // namespace ndhinf::synth
