#include "fairaudit/nn.hpp"

#include <cmath>

#include "doctest.h"
#include "fairaudit/rng.hpp"

using namespace fairaudit;
using nn::NetworkArchitecture;

namespace {

NetworkArchitecture make_arch(int input, std::vector<int> hidden,
                              nn::Activation act = nn::Activation::relu) {
  NetworkArchitecture a;
  a.input_dim = input;
  a.hidden_layers = std::move(hidden);
  a.activation = act;
  return a;
}

// f(x) = 2x exactly on |x| < 5, built so the relu kink sits away from the
// probed region: relu(2x + 10) - 10.
nn::WeightVector shifted_linear_net(const NetworkArchitecture& arch) {
  nn::WeightVector w = nn::zero_weights(arch);
  w.values(0) = 2.0;   // W0
  w.values(1) = 10.0;  // b0
  w.values(2) = 1.0;   // W1
  w.values(3) = -10.0; // b1
  return w;
}

Eigen::VectorXd random_vec(int n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = rng.uniform(lo, hi);
  return x;
}

// Plain-loop reimplementation of the forward pass, kept free of Eigen and of
// any code shared with the library path.
double forward_by_hand(const NetworkArchitecture& arch,
                       const nn::WeightVector& w,
                       const Eigen::VectorXd& x) {
  std::vector<double> a(x.data(), x.data() + x.size());
  for (int l = 0; l < arch.n_layers(); ++l) {
    const auto& s = w.shapes[l];
    std::vector<double> next(s.rows);
    for (int r = 0; r < s.rows; ++r) {
      double z = w.values(s.bias_offset + r);
      for (int c = 0; c < s.cols; ++c)
        z += w.values(s.weight_offset + r * s.cols + c) * a[c];
      if (l + 1 < arch.n_layers())
        z = arch.activation == nn::Activation::relu ? std::max(z, 0.0)
                                                    : std::tanh(z);
      next[r] = z;
    }
    a = std::move(next);
  }
  return a[0];
}

}  // namespace

TEST_CASE("architecture shape arithmetic and validation") {
  const auto arch = make_arch(2, {4});
  CHECK(arch.param_count() == 17);  // 2*4+4 + 4*1+1
  CHECK(nn::init_weights(arch, 7).values.size() == 17);

  CHECK_THROWS_AS(make_arch(0, {4}).validate(), StructuralError);
  CHECK_THROWS_AS(make_arch(2, {}).validate(), StructuralError);
  CHECK_THROWS_AS(make_arch(2, {4, 0}).validate(), StructuralError);
}

TEST_CASE("init_weights is deterministic and reproducible") {
  const auto arch = make_arch(2, {4});
  const auto w1 = nn::init_weights(arch, 7);
  const auto w2 = nn::init_weights(arch, 7);
  CHECK(w1.values == w2.values);
  const auto w3 = nn::init_weights(arch, 8);
  CHECK(w1.values != w3.values);
}

TEST_CASE("init_weights draws zero-mean gaussians with 1/sqrt(fan_in) scale") {
  // 500 x 200 first layer: 1e5 weights, stddev 1/sqrt(500).
  const auto arch = make_arch(500, {200});
  const auto w = nn::init_weights(arch, 123);
  const auto& s = w.shapes[0];
  const int n = s.rows * s.cols;
  REQUIRE(n == 100000);
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += w.values(s.weight_offset + i);
  mean /= n;
  const double se_mean = (1.0 / std::sqrt(500.0)) / std::sqrt(double(n));
  CHECK(std::abs(mean) <= 3.0 * se_mean);

  double var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = w.values(s.weight_offset + i) - mean;
    var += d * d;
  }
  var /= n - 1;
  CHECK(var == doctest::Approx(1.0 / 500.0).scale(0.0).epsilon(0.05));

  // biases zero
  for (int i = 0; i < s.rows; ++i) CHECK(w.values(s.bias_offset + i) == 0.0);
}

TEST_CASE("forward: zero network, linear case, purity") {
  const auto arch = make_arch(3, {5, 4});
  const auto w0 = nn::zero_weights(arch);
  Rng rng(1);
  CHECK(nn::forward(arch, w0, random_vec(3, rng)) == 0.0);

  // relu passes positive pre-activations untouched: W0=2, x=3 -> 6.
  const auto lin_arch = make_arch(1, {1});
  auto w = nn::zero_weights(lin_arch);
  w.values(0) = 2.0;
  w.values(2) = 1.0;
  Eigen::VectorXd x(1);
  x << 3.0;
  CHECK(nn::forward(lin_arch, w, x) == 6.0);

  const auto wr = nn::init_weights(arch, 5);
  const auto xr = random_vec(3, rng);
  CHECK(nn::forward(arch, wr, xr) == nn::forward(arch, wr, xr));
}

TEST_CASE("forward matches an independent hand-rolled evaluation") {
  Rng rng(42);
  for (auto act : {nn::Activation::relu, nn::Activation::tanh}) {
    const auto arch = make_arch(4, {6, 3}, act);
    for (int rep = 0; rep < 20; ++rep) {
      const auto w = nn::init_weights(arch, 100 + rep);
      const auto x = random_vec(4, rng);
      const double ours = nn::forward(arch, w, x);
      const double theirs = forward_by_hand(arch, w, x);
      CHECK(std::abs(ours - theirs) <=
            1e-12 * std::max(1.0, std::abs(theirs)));
    }
  }
}

TEST_CASE("forward rejects dimension mismatches") {
  const auto arch = make_arch(3, {4});
  const auto w = nn::init_weights(arch, 1);
  Eigen::VectorXd x(2);
  x << 1.0, 2.0;
  CHECK_THROWS_AS(nn::forward(arch, w, x), StructuralError);
}

TEST_CASE("sigmoid: symmetry, saturation, stability") {
  CHECK(nn::sigmoid(0.0) == 0.5);
  CHECK(nn::sigmoid(2.0) == doctest::Approx(0.880797).scale(0.0).epsilon(1e-6));
  CHECK(nn::sigmoid(700.0) > 0.999999);
  CHECK(nn::sigmoid(700.0) <= 1.0);

  // strictly inside (0,1) even at the |logit| <= 1e3 extremes
  for (double z : {-1000.0, -700.0, -50.0, 0.0, 50.0, 700.0, 1000.0}) {
    const double p = nn::sigmoid(z);
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
  // monotone
  double prev = 0.0;
  for (double z = -30.0; z <= 30.0; z += 0.5) {
    const double p = nn::sigmoid(z);
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("bce_loss values and stability") {
  CHECK(nn::bce_loss(0.0, 1) == doctest::Approx(std::log(2.0)).scale(0.0).epsilon(1e-15));
  CHECK(nn::bce_loss(0.0, 0) == doctest::Approx(std::log(2.0)).scale(0.0).epsilon(1e-15));
  CHECK(nn::bce_loss(2.0, 1) == doctest::Approx(0.126928).scale(0.0).epsilon(1e-5));
  for (double z : {-1000.0, -100.0, 0.0, 100.0, 1000.0})
    for (int y : {0, 1}) {
      const double loss = nn::bce_loss(z, y);
      CHECK(std::isfinite(loss));
      CHECK(loss >= 0.0);
    }
  CHECK_THROWS_AS(nn::bce_loss(0.0, 2), StructuralError);
}

TEST_CASE("bce gradient wrt logit equals sigmoid(logit) - y") {
  // Analytic identity, checked against the opposite exp branch to stay
  // independent of the sigmoid implementation, plus a finite-difference
  // probe of the loss itself.
  for (double z : {-8.0, -2.0, -0.5, 0.0, 0.5, 2.0, 8.0}) {
    for (int y : {0, 1}) {
      const double expected =
          z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) - y
                   : std::exp(z) / (1.0 + std::exp(z)) - y;
      CHECK(nn::sigmoid(z) - y == doctest::Approx(expected).scale(0.0).epsilon(1e-12));
      const double h = 1e-6;
      const double fd =
          (nn::bce_loss(z + h, y) - nn::bce_loss(z - h, y)) / (2.0 * h);
      CHECK(fd == doctest::Approx(nn::sigmoid(z) - y).scale(0.0).epsilon(1e-7));
    }
  }
}

TEST_CASE("grad_input closed form on the linear net") {
  const auto arch = make_arch(1, {1});
  const auto w = shifted_linear_net(arch);
  Eigen::VectorXd x(1);
  x << 0.0;
  // dL/dx = (sigmoid(0) - 1) * 2 = -1 for y=1
  const auto g1 = nn::grad_input(arch, w, x, 1);
  CHECK(g1(0) == doctest::Approx(-1.0).scale(0.0).epsilon(1e-12));
  // y flip: (sigmoid(0) - 0) * 2 = +1
  const auto g0 = nn::grad_input(arch, w, x, 0);
  CHECK(g0(0) == doctest::Approx(1.0).scale(0.0).epsilon(1e-12));
}

TEST_CASE("reverse-mode gradients agree with central finite differences") {
  Rng rng(7);
  int checked = 0;
  for (auto act : {nn::Activation::tanh, nn::Activation::relu}) {
    for (const auto& hidden :
         std::vector<std::vector<int>>{{8}, {16, 8}, {8, 8, 8}}) {
      const auto arch = make_arch(3, hidden, act);
      for (int rep = 0; rep < 4; ++rep) {
        auto w = nn::init_weights(arch, 1000 + checked);
        // Jitter every parameter (biases included) so no relu pre-activation
        // sits exactly on the kink, where central differences are not a
        // valid derivative estimate.
        for (Eigen::Index i = 0; i < w.values.size(); ++i)
          w.values(i) += rng.uniform(-0.05, 0.05);
        const auto x = random_vec(3, rng);
        const int y = rng.uniform() < 0.5 ? 0 : 1;
        const double h = 1e-5;

        const auto gi = nn::grad_input(arch, w, x, y);
        const auto gi_fd =
            nn::finite_diff_gradient(arch, w, x, y, h, nn::GradTarget::input);
        const double denom_i = std::max(gi_fd.cwiseAbs().maxCoeff(), 1e-10);
        CHECK((gi - gi_fd).cwiseAbs().maxCoeff() / denom_i <= 1e-4);

        const auto gp = nn::grad_params(arch, w, x, y);
        const auto gp_fd =
            nn::finite_diff_gradient(arch, w, x, y, h, nn::GradTarget::params);
        const double denom_p = std::max(gp_fd.cwiseAbs().maxCoeff(), 1e-10);
        CHECK((gp - gp_fd).cwiseAbs().maxCoeff() / denom_p <= 1e-4);
        ++checked;
      }
    }
  }
  CHECK(checked == 24);
}

TEST_CASE("zero input kills first-layer weight gradients, biases carry") {
  const auto arch = make_arch(3, {4}, nn::Activation::tanh);
  const auto w = nn::init_weights(arch, 3);
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  const auto gp = nn::grad_params(arch, w, x, 1);
  const auto& s0 = w.shapes[0];
  for (int i = 0; i < s0.rows * s0.cols; ++i)
    CHECK(gp(s0.weight_offset + i) == 0.0);
  // output bias gradient is sigma(logit) - y exactly
  const double logit = nn::forward(arch, w, x);
  const auto& s1 = w.shapes[1];
  CHECK(gp(s1.bias_offset) ==
        doctest::Approx(nn::sigmoid(logit) - 1.0).scale(0.0).epsilon(1e-14));
}

TEST_CASE("batch gradient equals the mean of per-example gradients") {
  const auto arch = make_arch(3, {5}, nn::Activation::tanh);
  const auto w = nn::init_weights(arch, 11);
  Rng rng(13);
  const int m = 6;
  Eigen::MatrixXd X(m, 3);
  Eigen::VectorXi y(m);
  for (int i = 0; i < m; ++i) {
    X.row(i) = random_vec(3, rng).transpose();
    y(i) = rng.uniform() < 0.5 ? 0 : 1;
  }
  const auto ev = nn::eval_batch(arch, w, X, y, false, true);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(w.values.size());
  double loss = 0.0;
  for (int i = 0; i < m; ++i) {
    sum += nn::grad_params(arch, w, X.row(i), y(i));
    loss += nn::bce_loss(nn::forward(arch, w, X.row(i)), y(i));
  }
  CHECK((ev.param_grad_sum - sum).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(ev.loss_sum == doctest::Approx(loss).scale(0.0).epsilon(1e-12));
}
