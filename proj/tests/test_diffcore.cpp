#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "doctest.h"
#include "lyaplearn/diffcore.hpp"
#include "lyaplearn/random.hpp"

using namespace lyl;

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Central difference of a double function of one variable.
double cd(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("mul records product and both partials") {
  Tape t;
  Var a = t.variable(2.0), b = t.variable(5.0);
  Var c = a * b;
  CHECK(c.value() == 10.0);
  auto p = t.parents(c);
  REQUIRE(p.size() == 2);
  CHECK(p[0].first == a.id);
  CHECK(p[0].second == 5.0);
  CHECK(p[1].first == b.id);
  CHECK(p[1].second == 2.0);
}

TEST_CASE("tanh and ln at their reference points") {
  Tape t;
  Var x = t.variable(0.0);
  Var y = tanh(x);
  CHECK(y.value() == 0.0);
  CHECK(t.parents(y)[0].second == 1.0);

  Var one = t.variable(1.0);
  Var l = log(one);
  CHECK(l.value() == 0.0);
  CHECK(t.parents(l)[0].second == 1.0);
}

TEST_CASE("backward on small closed forms") {
  Tape t;
  Var x = t.variable(3.0);
  Var f = square(x);
  Gradients g = t.backward(f);
  CHECK(g[f] == 1.0);
  CHECK(g[x] == 6.0);

  Tape t2;
  Var a = t2.variable(2.0), b = t2.variable(5.0);
  Gradients g2 = t2.backward(a * b);
  CHECK(g2[a] == 5.0);
  CHECK(g2[b] == 2.0);
}

TEST_CASE("ln(tanh(x)+2) matches a central difference") {
  Tape t;
  Var x = t.variable(0.7);
  Gradients g = t.backward(log(tanh(x) + 2.0));
  const double fd = cd([](double v) { return std::log(std::tanh(v) + 2.0); }, 0.7);
  CHECK(std::abs(g[x] - fd) / std::abs(fd) < 1e-8);
}

TEST_CASE("gradient accumulation over shared paths is exact") {
  Tape t;
  Var x = t.variable(1.25);
  CHECK(t.backward(x + x)[x] == 2.0);
  CHECK(t.backward(x * x)[x] == 2.5);
}

TEST_CASE("every primitive agrees with finite differences at 1000 points") {
  Engine rng = make_stream(7, "test");
  struct Unary {
    const char* name;
    std::function<Var(Var)> op;
    std::function<double(double)> ref;
    double lo, hi;
  };
  const std::vector<Unary> unary{
      {"neg", [](Var a) { return -a; }, [](double a) { return -a; }, -3, 3},
      {"tanh", [](Var a) { return tanh(a); }, [](double a) { return std::tanh(a); }, -3, 3},
      {"exp", [](Var a) { return exp(a); }, [](double a) { return std::exp(a); }, -3, 3},
      {"ln", [](Var a) { return log(a); }, [](double a) { return std::log(a); }, 0.1, 5},
      {"abs", [](Var a) { return abs(a); }, [](double a) { return std::abs(a); }, -3, 3},
      {"sqrt", [](Var a) { return sqrt(a); }, [](double a) { return std::sqrt(a); }, 0.1, 5},
      {"square", [](Var a) { return square(a); }, [](double a) { return a * a; }, -3, 3},
      {"max_c", [](Var a) { return max(a, 0.3); }, [](double a) { return std::max(a, 0.3); }, -3, 3},
      {"add_c", [](Var a) { return a + 1.5; }, [](double a) { return a + 1.5; }, -3, 3},
      {"rsub_c", [](Var a) { return 1.5 - a; }, [](double a) { return 1.5 - a; }, -3, 3},
      {"mul_c", [](Var a) { return 2.5 * a; }, [](double a) { return 2.5 * a; }, -3, 3},
      {"div_c", [](Var a) { return a / 1.5; }, [](double a) { return a / 1.5; }, -3, 3},
      {"rdiv_c", [](Var a) { return 1.5 / a; }, [](double a) { return 1.5 / a; }, 0.2, 4},
  };
  for (const auto& u : unary) {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double x = uniform(rng, u.lo, u.hi);
      // kinks of abs and max are measure zero but keep the stencil off them
      if (std::abs(x) < 1e-4 || std::abs(x - 0.3) < 1e-4) continue;
      Tape t;
      Var v = t.variable(x);
      const double g = t.backward(u.op(v))[v];
      CHECK(u.op(v).value() == doctest::Approx(u.ref(x)).epsilon(1e-15));
      worst = std::max(worst, rel_err(g, cd(u.ref, x)));
    }
    INFO(u.name);
    CHECK(worst < 1e-7);
  }

  struct Binary {
    const char* name;
    std::function<Var(Var, Var)> op;
    std::function<double(double, double)> ref;
  };
  const std::vector<Binary> binary{
      {"add", [](Var a, Var b) { return a + b; }, [](double a, double b) { return a + b; }},
      {"sub", [](Var a, Var b) { return a - b; }, [](double a, double b) { return a - b; }},
      {"mul", [](Var a, Var b) { return a * b; }, [](double a, double b) { return a * b; }},
      {"div", [](Var a, Var b) { return a / b; }, [](double a, double b) { return a / b; }},
      {"max", [](Var a, Var b) { return max(a, b); }, [](double a, double b) { return std::max(a, b); }},
  };
  for (const auto& bo : binary) {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double x = uniform(rng, -3, 3);
      double y = uniform(rng, 0.2, 3);
      if (uniform01(rng) < 0.5) y = -y;
      if (std::abs(x - y) < 1e-4) continue;
      Tape t;
      Var a = t.variable(x), b = t.variable(y);
      Gradients g = t.backward(bo.op(a, b));
      worst = std::max(worst, rel_err(g[a], cd([&](double v) { return bo.ref(v, y); }, x)));
      worst = std::max(worst, rel_err(g[b], cd([&](double v) { return bo.ref(x, v); }, y)));
    }
    INFO(bo.name);
    CHECK(worst < 1e-7);
  }
}

TEST_CASE("fused dot and sum nodes") {
  Tape t;
  std::vector<Var> a{t.variable(1.0), t.variable(-2.0), t.variable(0.5)};
  std::vector<Var> b{t.variable(3.0), t.variable(4.0), t.variable(-1.0)};
  Var d = dot(std::span<const Var>(a), std::span<const Var>(b));
  CHECK(d.value() == 1.0 * 3.0 - 8.0 - 0.5);
  Gradients g = t.backward(d);
  for (int i = 0; i < 3; ++i) {
    CHECK(g[a[i]] == b[i].value());
    CHECK(g[b[i]] == a[i].value());
  }
  const std::vector<double> c{2.0, 0.0, -1.0};
  Var m = dot(std::span<const double>(c), std::span<const Var>(a));
  CHECK(m.value() == 2.0 - 0.5);
  CHECK(t.backward(m)[a[2]] == -1.0);

  Var s = sum(std::span<const Var>(b));
  CHECK(s.value() == 6.0);
  CHECK(t.backward(s)[b[1]] == 1.0);
  CHECK_THROWS_AS(dot(std::span<const Var>(a), std::span<const Var>(b).first(2)), std::invalid_argument);
}

TEST_CASE("abs has zero subgradient at zero") {
  Tape t;
  Var x = t.variable(0.0);
  CHECK(t.backward(abs(x))[x] == 0.0);
  Var y = t.variable(-0.5);
  CHECK(t.backward(abs(y))[y] == -1.0);
}

TEST_CASE("domain violations raise instead of producing NaN") {
  Tape t;
  Var zero = t.variable(0.0), neg = t.variable(-1.0), one = t.variable(1.0);
  CHECK_THROWS_AS(log(zero), DomainError);
  CHECK_THROWS_AS(log(neg), DomainError);
  CHECK_THROWS_AS(sqrt(zero), DomainError);
  CHECK_THROWS_AS(sqrt(neg), DomainError);
  CHECK_THROWS_AS(one / zero, DomainError);
  CHECK_THROWS_AS(one / 0.0, DomainError);
  CHECK_THROWS_AS(2.0 / zero, DomainError);
}

TEST_CASE("NaN gradient names the node") {
  Tape t;
  Var x = t.variable(1.0);
  Var bad = t.variable(std::numeric_limits<double>::quiet_NaN());
  Var root = x * bad;
  try {
    (void)t.backward(root);
    FAIL("expected GradientError");
  } catch (const GradientError& e) {
    CHECK(e.node() == x.id);
  }
}

TEST_CASE("operands from different tapes are rejected") {
  Tape t1, t2;
  Var a = t1.variable(1.0), b = t2.variable(2.0);
  CHECK_THROWS_AS(a + b, std::invalid_argument);
}

TEST_CASE("truncate keeps earlier nodes and replays bit-identically") {
  Tape t;
  Var w = t.variable(0.3), x = t.variable(-1.1);
  const auto cp = t.checkpoint();
  auto record = [&] { return log(square(tanh(w * x) + 1.5)) / (abs(w) + 2.0); };

  Var r1 = record();
  const double v1 = r1.value();
  Gradients g1 = t.backward(r1);
  t.truncate(cp);
  CHECK(t.size() == cp);
  CHECK(w.value() == 0.3);
  CHECK(x.value() == -1.1);
  Var r2 = record();
  Gradients g2 = t.backward(r2);
  CHECK(r2.value() == v1);
  CHECK(g2[w] == g1[w]);
  CHECK(g2[x] == g1[x]);

  CHECK_THROWS_AS(t.truncate(t.size() + 1), std::out_of_range);
  CHECK_THROWS_AS(t.set_value(r2, 1.0), std::invalid_argument);
  t.truncate(cp);
  t.set_value(w, 0.4);
  CHECK(record().value() == doctest::Approx(std::log(square(std::tanh(-0.44) + 1.5)) / 2.4));
}

TEST_CASE("linearity of backward") {
  Engine rng = make_stream(3, "test");
  for (int trial = 0; trial < 50; ++trial) {
    const double p0 = uniform(rng, -1, 1), p1 = uniform(rng, -1, 1);
    const double ca = uniform(rng, -2, 2), cb = uniform(rng, -2, 2);
    auto f = [](Var x, Var y) { return tanh(x * y) + exp(x) * y; };
    auto g = [](Var x, Var y) { return square(x - y) + sqrt(x * x + 1.0); };
    Tape t;
    Var x = t.variable(p0), y = t.variable(p1);
    Gradients gf = t.backward(f(x, y));
    Gradients gg = t.backward(g(x, y));
    Gradients gc = t.backward(ca * f(x, y) + cb * g(x, y));
    CHECK(std::abs(gc[x] - (ca * gf[x] + cb * gg[x])) < 1e-12);
    CHECK(std::abs(gc[y] - (ca * gf[y] + cb * gg[y])) < 1e-12);
  }
}

TEST_CASE("finite_diff_check reference cases") {
  const std::vector<double> p{1.0, 2.0, 3.0};
  TapeFunction sumsq = [](Tape&, std::span<const Var> v) { return dot(v, v); };
  CHECK(finite_diff_check(sumsq, p, 1e-6) < 1e-9);

  TapeFunction constant = [](Tape& t, std::span<const Var>) { return t.constant(4.0); };
  CHECK(finite_diff_check(constant, p, 1e-6) == 0.0);

  TapeFunction edge = [](Tape&, std::span<const Var> v) { return log(v[0] - 1.0 + 1e-7); };
  CHECK_THROWS_AS(finite_diff_check(edge, p, 1e-6), DomainError);
  auto step = [](std::span<const double> v) { return v[0] > 1.0 ? std::numeric_limits<double>::infinity() : 0.0; };
  CHECK_THROWS_AS(central_difference(step, p, 1e-6), std::domain_error);
  CHECK_THROWS_AS(finite_diff_check(sumsq, p, 0.0), std::invalid_argument);

  auto plain = [](std::span<const double> v) { return v[0] * v[1]; };
  const std::vector<double> wrong{0.0, 0.0};
  CHECK(finite_diff_check(plain, wrong, std::vector<double>{2.0, 5.0}, 1e-6) == doctest::Approx(1.0));
}
