#include "doctest.h"
#include "gradient_suite.hpp"

using namespace mslabel;
using namespace mslabel::testing;

TEST_CASE("finite-difference gradient suite") {
  const auto suite = run_gradient_suite();
  CHECK(suite.size() >= 20);
  for (const auto& e : suite) {
    INFO(e.name, ": ", e.result.worst, " kinks ", e.result.kinks, "/", e.result.checked);
    CHECK(e.result.checked > 0);
    CHECK(e.result.max_rel < 1e-4);
    CHECK(e.result.kinks * 10 <= e.result.checked);
  }
}

TEST_CASE("oracle catches a wrong gradient") {
  // A deliberately broken op: forward x^2, backward claims 3x.
  Parameter<double> x(Tensor<double>({3}, 0.7));
  const auto broken = [&] {
    Tensor<double> v({1});
    v.data()[0] = (x.value().array().square()).sum();
    return record<double>(std::move(v), {x.var()}, [](Node<double>& n) {
      n.parent(0).ensure_grad().array() += 3 * n.parent(0).value.array() * n.grad.data()[0];
    });
  };
  std::mt19937_64 rng(1);
  const auto r = gradcheck({{"x", &x}}, broken, 3, rng);
  CHECK(r.max_rel > 0.1);
}
