#include <cmath>

#include "doctest.h"
#include "nvkm/term_eval.hpp"
#include "test_util.hpp"

using namespace nvkm;
using testutil::random_term_instance;

TEST_CASE("cached evaluator equals the reference term evaluation") {
  Rng rng(601);
  for (std::size_t c = 1; c <= 3; ++c) {
    for (int it = 0; it < 4; ++it) {
      auto inst = random_term_instance(c, rng, 10, 7);
      TermEvaluator<double> fast(&inst.u, &inst.g);
      for (double t : {-2.1, -0.4, 0.0, 0.8, 1.9}) {
        const double ref = eval_term(inst.u, inst.g, t);
        const double got = fast(t);
        CHECK(got == doctest::Approx(ref).epsilon(1e-11));
      }
    }
  }
}

TEST_CASE("cached evaluator reproduces reference gradients") {
  // Both implementations taped on the same leaves must produce matching
  // adjoints for every parameter the term depends on.
  Rng rng(602);
  const std::size_t c = 2;
  MatD zu = testutil::grid1d(-2.5, 2.5, 4);
  MatD zg = testutil::tensor_grid(1.4, 3, c);
  const double alpha = std::log(100.0) / (1.4 * 1.4);
  auto du = draw_basis_draws(1, 5, rng);
  auto dg = draw_basis_draws(c, 5, rng);
  VecD vu(4), vg(zg.rows());
  for (auto& x : vu) x = rng.normal();
  for (auto& x : vg) x = rng.normal();

  auto run = [&](bool use_fast, VecD* grad) {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    std::vector<ad::Var> leaves;
    for (double v : vu) leaves.push_back(ad::Var::leaf(v));
    for (double v : vg) leaves.push_back(ad::Var::leaf(v));
    const ad::Var su = ad::Var::leaf(std::log(1.1));
    const ad::Var sg = ad::Var::leaf(std::log(0.9));
    const ad::Var lg = ad::Var::leaf(std::log(1.2));
    Vec<ad::Var> vuv(leaves.begin(), leaves.begin() + 4);
    Vec<ad::Var> vgv(leaves.begin() + 4, leaves.end());
    const SeParams<ad::Var> ku{exp(su), ad::Var(0.6)};
    const SeParams<ad::Var> kg{exp(sg), ad::Var(0.5) / (exp(lg) * exp(lg))};
    Mat<ad::Var> gu = gram_se(zu, ku, 1e-10);
    REQUIRE(try_cholesky(gu));
    auto up = make_conditioned_path(ku, 0.0, zu, vuv, du, gu);
    Mat<ad::Var> gg = gram_se(zg, kg, 1e-10);
    REQUIRE(try_cholesky(gg));
    auto gp = make_conditioned_path(kg, alpha, zg, vgv, dg, gg);
    ad::Var out;
    if (use_fast) {
      TermEvaluator<ad::Var> fast(&up, &gp);
      out = fast(0.6);
    } else {
      out = eval_term(up, gp, 0.6);
    }
    tape.seed(out.i, 1.0);
    tape.backward_to(0);
    grad->clear();
    for (const auto& l : leaves) grad->push_back(tape.adjoint(l.i));
    grad->push_back(tape.adjoint(su.i));
    grad->push_back(tape.adjoint(sg.i));
    grad->push_back(tape.adjoint(lg.i));
    return out.v;
  };

  VecD gref, gfast;
  const double vref = run(false, &gref);
  const double vfast = run(true, &gfast);
  CHECK(vfast == doctest::Approx(vref).epsilon(1e-11));
  REQUIRE(gref.size() == gfast.size());
  double scale = 0.0;
  for (double v : gref) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < gref.size(); ++i)
    CHECK(std::abs(gref[i] - gfast[i]) < 1e-10 * (scale + 1.0));
}
