#include "muser/losses.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "support/testkit.hpp"

using namespace muser;

namespace {

std::vector<double> random_probs(Rng& rng, size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = 0.02 + 0.96 * rng.uniform();
  return v;
}

std::vector<double> random_simplex(Rng& rng, size_t n) {
  std::vector<double> v(n);
  double sum = 0.0;
  for (double& x : v) {
    x = 0.05 + rng.uniform();
    sum += x;
  }
  for (double& x : v) x /= sum;
  return v;
}

double oracle_bce(const std::vector<double>& x, const std::vector<double>& y,
                  const std::vector<double>& p) {
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double w = 2.0 / (1.0 + p[i]);
    double wb = 2.0 * p[i] / (1.0 + p[i]);
    double xi = std::min(std::max(x[i], 1e-7), 1.0 - 1e-7);
    acc += w * y[i] * std::log(xi) + wb * (1.0 - y[i]) * std::log1p(-xi);
  }
  return -acc / static_cast<double>(x.size());
}

double oracle_kl(const std::vector<double>& s, const std::vector<double>& t) {
  double acc = 0.0;
  for (size_t i = 0; i < s.size(); ++i)
    if (t[i] > 0.0) acc += t[i] * std::log(t[i] / std::max(s[i], 1e-7));
  return acc;
}

}  // namespace

TEST_CASE("class weights follow the frequency formula") {
  ClassWeights cw = class_weights({0.25, 1.0, 0.0});
  CHECK(cw.w[0] == Catch::Approx(1.6).epsilon(1e-12));
  CHECK(cw.w_bar[0] == Catch::Approx(0.4).epsilon(1e-12));
  CHECK(cw.w[1] == 1.0);
  CHECK(cw.w_bar[1] == 1.0);
  CHECK(cw.w[2] == 2.0);
  CHECK(cw.w_bar[2] == 0.0);

  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    double p = rng.uniform();
    ClassWeights c = class_weights({p});
    CHECK(std::abs(c.w[0] + c.w_bar[0] - 2.0) < 1e-12);
  }
  CHECK_THROWS_AS(class_weights({-0.1}), InputError);
  CHECK_THROWS_AS(class_weights({1.1}), InputError);
}

TEST_CASE("weighted BCE reproduces hand-computed values") {
  ClassWeights cw = class_weights({0.25});
  CHECK(weighted_bce({0.8}, {1.0}, cw) == Catch::Approx(1.6 * -std::log(0.8)).epsilon(1e-12));
  CHECK(weighted_bce({0.8}, {1.0}, cw) == Catch::Approx(0.35703).margin(5e-6));

  // near-perfect prediction collapses to the clamp floor
  CHECK(weighted_bce({1.0}, {1.0}, cw) == Catch::Approx(1.6e-7).margin(1e-9));
  CHECK(weighted_bce({1.0}, {1.0}, cw) >= 0.0);

  // two labels average the two single-label terms
  ClassWeights cw2 = class_weights({0.25, 0.5});
  double a = weighted_bce({0.8}, {1.0}, class_weights({0.25}));
  double b = weighted_bce({0.3}, {0.0}, class_weights({0.5}));
  CHECK(weighted_bce({0.8, 0.3}, {1.0, 0.0}, cw2) == Catch::Approx((a + b) / 2.0).epsilon(1e-12));

  // uniform p = 1 reduces to the unweighted form
  ClassWeights plain = class_weights({1.0, 1.0});
  double x0 = 0.7, x1 = 0.2;
  double expect = -(std::log(x0) + std::log(1.0 - x1)) / 2.0;
  CHECK(weighted_bce({x0, x1}, {1.0, 0.0}, plain) == Catch::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(weighted_bce({0.5}, {1.0, 0.0}, cw), InputError);
  CHECK_THROWS_AS(weighted_bce({0.5}, {0.5}, cw), InputError);
  CHECK_THROWS_AS(weighted_bce({}, {}, class_weights({})), InputError);

  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    size_t c = 1 + rng.uniform_below(8);
    std::vector<double> p(c), y(c);
    for (size_t i = 0; i < c; ++i) {
      p[i] = rng.uniform();
      y[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    std::vector<double> x = random_probs(rng, c);
    double got = weighted_bce(x, y, class_weights(p));
    CHECK(got == Catch::Approx(oracle_bce(x, y, p)).epsilon(1e-12));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("VA MSE sums the two squared errors") {
  CHECK(va_mse({5.0, 5.0}, {7.0, 3.0}) == 8.0);
  CHECK(va_mse({7.0, 3.0}, {5.0, 5.0}) == 8.0);  // symmetric
  CHECK(va_mse({2.5, 6.0}, {2.5, 6.0}) == 0.0);
}

TEST_CASE("distillation KL matches the teacher-weighted log ratio") {
  CHECK(kd_kl({0.25, 0.75}, {0.5, 0.5}) ==
        Catch::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-12));
  CHECK(kd_kl({0.25, 0.75}, {0.5, 0.5}) == Catch::Approx(0.14384).margin(5e-6));
  CHECK(kd_kl({0.5, 0.5}, {1.0, 0.0}) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(kd_kl({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  CHECK_THROWS_AS(kd_kl({0.5}, {0.5, 0.5}), InputError);

  Rng rng(91);
  for (int trial = 0; trial < 100; ++trial) {
    size_t c = 2 + rng.uniform_below(7);
    auto t = random_simplex(rng, c);
    auto s = random_simplex(rng, c);
    double got = kd_kl(s, t);
    CHECK(got == Catch::Approx(oracle_kl(s, t)).margin(1e-12));
    CHECK(got >= -1e-12);  // Gibbs: KL between simplex points is non-negative
    CHECK(kd_kl(t, t) == Catch::Approx(0.0).margin(1e-12));
    // zero only when equal on the support
    if (got < 1e-12)
      for (size_t i = 0; i < c; ++i)
        if (t[i] > 0.0) CHECK(s[i] == Catch::Approx(t[i]));
  }
}

TEST_CASE("total loss blends task and distillation terms") {
  CHECK(total_loss(1.0, 0.5, 0.2) == Catch::Approx(0.6).epsilon(1e-12));
  CHECK(total_loss(3.0, 99.0, 1.0) == 3.0);  // weight 1 disables distillation
  CHECK(total_loss(99.0, 3.0, 0.0) == 3.0);
  CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.01), ConfigError);
  CHECK_THROWS_AS(total_loss(1.0, 1.0, 1.01), ConfigError);

  NodePtr task = make_constant(Tensor::full(1, 1, 1.0));
  NodePtr kd = make_constant(Tensor::full(1, 1, 0.5));
  CHECK(total_loss_graph(task, kd, 0.2)->value.at(0, 0) == Catch::Approx(0.6).epsilon(1e-12));
  CHECK_THROWS_AS(total_loss_graph(task, kd, 1.5), ConfigError);
}

TEST_CASE("graph losses agree with the scalar oracles over random batches") {
  Rng rng(2025);
  for (int trial = 0; trial < 100; ++trial) {
    size_t b = 1 + rng.uniform_below(6);
    size_t c = 1 + rng.uniform_below(8);

    std::vector<double> p(c);
    for (double& v : p) v = rng.uniform();
    ClassWeights cw = class_weights(p);

    Tensor probs(b, c), targets(b, c);
    for (size_t r = 0; r < b; ++r)
      for (size_t i = 0; i < c; ++i) {
        probs.at(r, i) = 0.02 + 0.96 * rng.uniform();
        targets.at(r, i) = rng.uniform() < 0.5 ? 0.0 : 1.0;
      }
    double expect = 0.0;
    for (size_t r = 0; r < b; ++r) {
      std::vector<double> xr(c), yr(c);
      for (size_t i = 0; i < c; ++i) {
        xr[i] = probs.at(r, i);
        yr[i] = targets.at(r, i);
      }
      expect += weighted_bce(xr, yr, cw);
    }
    expect /= static_cast<double>(b);
    double got = weighted_bce_loss(make_constant(probs), targets, cw)->value.at(0, 0);
    CHECK(got == Catch::Approx(expect).epsilon(1e-10));

    Tensor pred(b, 2), vat(b, 2);
    for (size_t r = 0; r < b; ++r)
      for (size_t i = 0; i < 2; ++i) {
        pred.at(r, i) = rng.uniform(1.0, 9.0);
        vat.at(r, i) = rng.uniform(1.0, 9.0);
      }
    double mse_expect = 0.0;
    for (size_t r = 0; r < b; ++r)
      mse_expect += va_mse({pred.at(r, 0), pred.at(r, 1)}, {vat.at(r, 0), vat.at(r, 1)});
    mse_expect /= static_cast<double>(b);
    CHECK(va_mse_loss(make_constant(pred), vat)->value.at(0, 0) ==
          Catch::Approx(mse_expect).epsilon(1e-10));

    // literal classification KD: batch mean of per-row teacher-weighted KLs
    Tensor teacher(b, c);
    for (size_t r = 0; r < b; ++r)
      for (size_t i = 0; i < c; ++i) teacher.at(r, i) = 0.02 + 0.96 * rng.uniform();
    double kl_expect = 0.0;
    for (size_t r = 0; r < b; ++r) {
      std::vector<double> sr(c), tr(c);
      for (size_t i = 0; i < c; ++i) {
        sr[i] = probs.at(r, i);
        tr[i] = teacher.at(r, i);
      }
      kl_expect += kd_kl(sr, tr);
    }
    kl_expect /= static_cast<double>(b);
    double kl_got = classification_kd_loss(make_constant(probs), teacher)->value.at(0, 0);
    CHECK(kl_got == Catch::Approx(kl_expect).margin(1e-10));

    // regression KD, softmax reading: per-row softmax pairs through the KL
    Tensor t_va(b, 2);
    for (size_t r = 0; r < b; ++r)
      for (size_t i = 0; i < 2; ++i) t_va.at(r, i) = rng.uniform(1.0, 9.0);
    double rkl_expect = 0.0;
    for (size_t r = 0; r < b; ++r) {
      auto sd = softmax2({pred.at(r, 0), pred.at(r, 1)});
      auto td = softmax2({t_va.at(r, 0), t_va.at(r, 1)});
      rkl_expect += kd_kl({sd[0], sd[1]}, {td[0], td[1]});
    }
    rkl_expect /= static_cast<double>(b);
    double rkl_got = regression_kd_loss(make_constant(pred), t_va)->value.at(0, 0);
    CHECK(rkl_got == Catch::Approx(rkl_expect).margin(1e-10));

    // squared-error reading is exactly the VA MSE against teacher outputs
    CHECK(regression_kd_loss(make_constant(pred), t_va, RegressionKd::squared_error)
              ->value.at(0, 0) ==
          Catch::Approx(va_mse_loss(make_constant(pred), t_va)->value.at(0, 0)));
  }
}

TEST_CASE("bernoulli classification KD adds the complement terms") {
  Tensor probs(1, 2);
  probs.at(0, 0) = 0.6;
  probs.at(0, 1) = 0.3;
  Tensor teacher(1, 2);
  teacher.at(0, 0) = 0.8;
  teacher.at(0, 1) = 0.5;

  double literal = classification_kd_loss(make_constant(probs), teacher)->value.at(0, 0);
  double bern = classification_kd_loss(make_constant(probs), teacher,
                                       ClassificationKd::bernoulli)
                    ->value.at(0, 0);
  double expect_literal = 0.8 * std::log(0.8 / 0.6) + 0.5 * std::log(0.5 / 0.3);
  double expect_bern = expect_literal + 0.2 * std::log(0.2 / 0.4) + 0.5 * std::log(0.5 / 0.7);
  CHECK(literal == Catch::Approx(expect_literal).epsilon(1e-12));
  CHECK(bern == Catch::Approx(expect_bern).epsilon(1e-12));

  // bernoulli KL vanishes when student equals teacher; literal does too
  CHECK(classification_kd_loss(make_constant(teacher), teacher, ClassificationKd::bernoulli)
            ->value.at(0, 0) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("loss gradients match finite differences on random cases") {
  Rng rng(4242);
  for (int trial = 0; trial < 100; ++trial) {
    size_t b = 1 + rng.uniform_below(4);
    size_t c = 1 + rng.uniform_below(6);

    ParameterRegistry reg;
    Tensor logits(b, c);
    for (double& v : logits.data) v = rng.normal(0.0, 1.5);
    NodePtr z = reg.add("logits", logits);
    Tensor vz(b, 2);
    for (double& v : vz.data) v = rng.normal(5.0, 2.0);
    NodePtr vp = reg.add("va", vz);

    std::vector<double> p(c);
    for (double& v : p) v = rng.uniform();
    ClassWeights cw = class_weights(p);
    Tensor targets(b, c);
    for (double& v : targets.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    Tensor teacher(b, c);
    for (double& v : teacher.data) v = 0.05 + 0.9 * rng.uniform();
    Tensor va_targets(b, 2), va_teacher(b, 2);
    for (double& v : va_targets.data) v = rng.uniform(1.0, 9.0);
    for (double& v : va_teacher.data) v = rng.uniform(1.0, 9.0);
    ClassificationKd cmode = trial % 2 ? ClassificationKd::bernoulli : ClassificationKd::literal;
    RegressionKd rmode = trial % 3 ? RegressionKd::softmax_kl : RegressionKd::squared_error;

    auto loss = [&] {
      NodePtr probs = sigmoid(z);
      NodePtr task_c = weighted_bce_loss(probs, targets, cw);
      NodePtr kd_c = classification_kd_loss(probs, teacher, cmode);
      NodePtr task_r = va_mse_loss(vp, va_targets);
      NodePtr kd_r = regression_kd_loss(vp, va_teacher, rmode);
      return add(total_loss_graph(task_c, kd_c, 0.2), total_loss_graph(task_r, kd_r, 0.2));
    };
    double err = testkit::finite_diff_worst_error(reg, loss);
    INFO("trial " << trial);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("clamping keeps losses finite at saturated probabilities") {
  ClassWeights cw = class_weights({0.5, 0.5});
  double v = weighted_bce({1.0, 0.0}, {0.0, 1.0}, cw);  // maximally wrong
  CHECK(std::isfinite(v));
  CHECK(v > 10.0);  // roughly -log(eps) sized

  Tensor probs(1, 2);
  probs.at(0, 0) = 1.0;
  probs.at(0, 1) = 0.0;
  Tensor y(1, 2);
  y.at(0, 0) = 0.0;
  y.at(0, 1) = 1.0;
  double g = weighted_bce_loss(make_constant(probs), y, cw)->value.at(0, 0);
  CHECK(std::isfinite(g));

  Tensor teacher(1, 2);
  teacher.at(0, 0) = 1.0;
  teacher.at(0, 1) = 1.0;
  CHECK(std::isfinite(
      classification_kd_loss(make_constant(probs), teacher)->value.at(0, 0)));
}

TEST_CASE("graph loss shape validation") {
  ClassWeights cw = class_weights({0.5});
  Tensor probs(2, 1, 0.5);
  Tensor bad(1, 1, 1.0);
  CHECK_THROWS_AS(weighted_bce_loss(make_constant(probs), bad, cw), InputError);
  Tensor non_binary(2, 1, 0.5);
  CHECK_THROWS_AS(weighted_bce_loss(make_constant(probs), non_binary, cw), InputError);
  Tensor pred(2, 2, 5.0);
  CHECK_THROWS_AS(va_mse_loss(make_constant(pred), Tensor(3, 2, 5.0)), InputError);
  CHECK_THROWS_AS(regression_kd_loss(make_constant(pred), Tensor(2, 3, 5.0)), InputError);
  CHECK_THROWS_AS(classification_kd_loss(make_constant(probs), Tensor(2, 2, 0.5)), InputError);
}
