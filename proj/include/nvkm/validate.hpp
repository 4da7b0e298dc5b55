#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nvkm/complex.hpp"
#include "nvkm/pathwise.hpp"

// Validation suites behind the CLI `validate` command: elementary-integral
// fuzzing, closed-form/quadrature equivalence, Monte-Carlo KL, and gradient
// checks. The integral implementations are injectable so a deliberately
// broken variant can be shown to fail the suite.

namespace nvkm::validation {

struct IntegralFns {
  std::function<ComplexD(double t, double a, double th1, double th2, double b2)> i1a;
  std::function<ComplexD(double t, double a, double th1, double p2, double z2)> i1b;
  std::function<double(double t, double a, double p1, double z1, double th2, double b2)> i2a;
  std::function<double(double t, double a, double p1, double z1, double p2, double z2)> i2b;
  std::function<ComplexD(double a, ComplexD b)> gauss;

  static IntegralFns library();
};

struct SuiteResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

enum class Level { Quick, Full };

struct TermInstance {
  ExplicitPath<double> u;
  ExplicitPath<double> g;
};

// Randomized, well-conditioned instance of one order-c Volterra term.
TermInstance random_term_instance(std::size_t c, Rng& rng, std::size_t nb_u = 8,
                                  std::size_t nb_g = 8);

SuiteResult validate_elementary(const IntegralFns& fns, int draws_per_integral,
                                std::uint64_t seed);
SuiteResult validate_volterra_equivalence(std::size_t c, int instances, double rel_tol,
                                          std::size_t grid_points, std::uint64_t seed);
SuiteResult validate_quadrature_convergence(std::uint64_t seed);
SuiteResult validate_kl_mc(int instances, std::size_t draws, std::uint64_t seed);
SuiteResult validate_gradients(std::uint64_t seed);

std::vector<SuiteResult> run_validation(Level level, const IntegralFns& fns = IntegralFns::library(),
                                        std::uint64_t seed = 20);

}  // namespace nvkm::validation
