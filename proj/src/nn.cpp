#include "fairaudit/nn.hpp"

#include <cmath>
#include <limits>

#include "fairaudit/rng.hpp"

namespace fairaudit::nn {

namespace {

Eigen::Map<RowMajorMatrix> weight_map(Eigen::VectorXd& v, const LayerShape& s) {
  return {v.data() + s.weight_offset, s.rows, s.cols};
}

Eigen::Map<Eigen::VectorXd> bias_map(Eigen::VectorXd& v, const LayerShape& s) {
  return {v.data() + s.bias_offset, s.rows};
}

double act(double z, Activation a) {
  return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative from the pre-activation; relu'(0) taken as 0.
double act_deriv(double z, Activation a) {
  if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

}  // namespace

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "' (expected relu or tanh)");
}

std::string to_string(Activation a) {
  return a == Activation::relu ? "relu" : "tanh";
}

void NetworkArchitecture::validate() const {
  if (input_dim < 1) throw StructuralError("input_dim must be >= 1");
  if (hidden_layers.empty())
    throw StructuralError("at least one hidden layer required");
  for (int w : hidden_layers)
    if (w < 1) throw StructuralError("hidden widths must be >= 1");
}

int NetworkArchitecture::layer_rows(int l) const {
  if (l < static_cast<int>(hidden_layers.size())) return hidden_layers[l];
  return 1;  // output logit
}

int NetworkArchitecture::layer_cols(int l) const {
  if (l == 0) return input_dim;
  return hidden_layers[l - 1];
}

int NetworkArchitecture::param_count() const {
  int total = 0;
  for (int l = 0; l < n_layers(); ++l)
    total += layer_rows(l) * layer_cols(l) + layer_rows(l);
  return total;
}

std::vector<LayerShape> make_shape_table(const NetworkArchitecture& arch) {
  std::vector<LayerShape> table;
  table.reserve(arch.n_layers());
  int offset = 0;
  for (int l = 0; l < arch.n_layers(); ++l) {
    LayerShape s;
    s.rows = arch.layer_rows(l);
    s.cols = arch.layer_cols(l);
    s.weight_offset = offset;
    offset += s.rows * s.cols;
    s.bias_offset = offset;
    offset += s.rows;
    table.push_back(s);
  }
  return table;
}

void WeightVector::validate_against(const NetworkArchitecture& arch) const {
  if (shapes != make_shape_table(arch))
    throw StructuralError("weight shape table does not match architecture");
  if (values.size() != arch.param_count())
    throw StructuralError("weight vector length does not match architecture");
}

WeightVector zero_weights(const NetworkArchitecture& arch) {
  arch.validate();
  WeightVector w;
  w.shapes = make_shape_table(arch);
  w.values = Eigen::VectorXd::Zero(arch.param_count());
  return w;
}

WeightVector init_weights(const NetworkArchitecture& arch,
                          std::uint64_t seed) {
  WeightVector w = zero_weights(arch);
  Rng rng(seed);
  for (int l = 0; l < arch.n_layers(); ++l) {
    const LayerShape& s = w.shapes[l];
    const double stddev = 1.0 / std::sqrt(static_cast<double>(s.cols));
    for (int i = 0; i < s.rows * s.cols; ++i)
      w.values[s.weight_offset + i] = stddev * rng.normal();
    // biases stay zero
  }
  return w;
}

double sigmoid(double logit) {
  double p;
  if (logit >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-logit));
  } else {
    const double e = std::exp(logit);
    p = e / (1.0 + e);
  }
  // Keep the output strictly inside (0,1) even where exp saturates.
  const double lo = std::numeric_limits<double>::min();
  const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::min(std::max(p, lo), hi);
}

double bce_loss(double logit, int y) {
  if (y != 0 && y != 1) throw StructuralError("label must be 0 or 1");
  // max(z,0) - z*y + log(1 + exp(-|z|))
  const double z = logit;
  return std::max(z, 0.0) - z * static_cast<double>(y) +
         std::log1p(std::exp(-std::abs(z)));
}

Eigen::VectorXd forward_batch(const NetworkArchitecture& arch,
                              const WeightVector& w,
                              const Eigen::MatrixXd& X) {
  w.validate_against(arch);
  if (X.cols() != arch.input_dim)
    throw StructuralError("input dimension mismatch in forward");
  Eigen::MatrixXd a = X;
  const int L = arch.n_layers();
  for (int l = 0; l < L - 1; ++l) {
    Eigen::MatrixXd z =
        (a * w.weight(l).transpose()).rowwise() + w.bias(l).transpose();
    a = z.unaryExpr(
        [&](double v) { return act(v, arch.activation); });
  }
  Eigen::VectorXd logits =
      (a * w.weight(L - 1).transpose()).rowwise() + w.bias(L - 1).transpose();
  return logits;
}

double forward(const NetworkArchitecture& arch, const WeightVector& w,
               const Eigen::VectorXd& x) {
  return forward_batch(arch, w, x.transpose())(0);
}

BatchEval eval_batch(const NetworkArchitecture& arch, const WeightVector& w,
                     const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                     bool want_input_grads, bool want_param_grads) {
  w.validate_against(arch);
  if (X.cols() != arch.input_dim)
    throw StructuralError("input dimension mismatch in eval_batch");
  if (y.size() != X.rows())
    throw StructuralError("label count does not match batch rows");

  const int L = arch.n_layers();
  const Eigen::Index m = X.rows();

  // Forward pass, keeping pre-activations and activations per layer.
  std::vector<Eigen::MatrixXd> pre(L - 1);
  std::vector<Eigen::MatrixXd> post(L);  // post[l] = input to layer l
  post[0] = X;
  for (int l = 0; l < L - 1; ++l) {
    pre[l] = (post[l] * w.weight(l).transpose()).rowwise() +
             w.bias(l).transpose();
    if (l + 1 < L)
      post[l + 1] = pre[l].unaryExpr(
          [&](double v) { return act(v, arch.activation); });
  }
  BatchEval out;
  out.logits = (post[L - 1] * w.weight(L - 1).transpose()).rowwise() +
               w.bias(L - 1).transpose();

  out.loss_sum = 0.0;
  Eigen::VectorXd delta(m);  // dL/dlogit = sigma(logit) - y, per row
  for (Eigen::Index i = 0; i < m; ++i) {
    out.loss_sum += bce_loss(out.logits(i), y(i));
    delta(i) = sigmoid(out.logits(i)) - static_cast<double>(y(i));
  }

  Eigen::VectorXd* pg = nullptr;
  if (want_param_grads) {
    out.param_grad_sum = Eigen::VectorXd::Zero(arch.param_count());
    pg = &out.param_grad_sum;
  }

  // Backward pass. D is dLoss_sum/d(pre-activation of layer l's output).
  Eigen::MatrixXd D = delta;
  for (int l = L - 1; l >= 0; --l) {
    if (pg) {
      weight_map(*pg, w.shapes[l]) = D.transpose() * post[l];
      bias_map(*pg, w.shapes[l]) = D.colwise().sum().transpose();
    }
    const bool need_back = l > 0 || want_input_grads;
    if (!need_back) break;
    Eigen::MatrixXd G = D * w.weight(l);  // m x cols(l)
    if (l == 0) {
      if (want_input_grads) out.input_grads = G;
      break;
    }
    D = G.cwiseProduct(pre[l - 1].unaryExpr(
        [&](double v) { return act_deriv(v, arch.activation); }));
  }
  return out;
}

Eigen::VectorXd grad_input(const NetworkArchitecture& arch,
                           const WeightVector& w, const Eigen::VectorXd& x,
                           int y) {
  Eigen::VectorXi yy(1);
  yy(0) = y;
  BatchEval ev = eval_batch(arch, w, x.transpose(), yy, true, false);
  return ev.input_grads.row(0);
}

Eigen::VectorXd grad_params(const NetworkArchitecture& arch,
                            const WeightVector& w, const Eigen::VectorXd& x,
                            int y) {
  Eigen::VectorXi yy(1);
  yy(0) = y;
  BatchEval ev = eval_batch(arch, w, x.transpose(), yy, false, true);
  return ev.param_grad_sum;
}

Eigen::VectorXd finite_diff_gradient(const NetworkArchitecture& arch,
                                     const WeightVector& w,
                                     const Eigen::VectorXd& x, int y, double h,
                                     GradTarget target) {
  if (h <= 0.0) throw StructuralError("finite difference step must be > 0");
  auto loss_at = [&](const WeightVector& wv, const Eigen::VectorXd& xv) {
    return bce_loss(forward(arch, wv, xv), y);
  };
  if (target == GradTarget::input) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      xp(i) = x(i) + h;
      const double up = loss_at(w, xp);
      xp(i) = x(i) - h;
      const double dn = loss_at(w, xp);
      xp(i) = x(i);
      g(i) = (up - dn) / (2.0 * h);
    }
    return g;
  }
  Eigen::VectorXd g(w.values.size());
  WeightVector wp = w;
  for (Eigen::Index i = 0; i < w.values.size(); ++i) {
    wp.values(i) = w.values(i) + h;
    const double up = loss_at(wp, x);
    wp.values(i) = w.values(i) - h;
    const double dn = loss_at(wp, x);
    wp.values(i) = w.values(i);
    g(i) = (up - dn) / (2.0 * h);
  }
  return g;
}

}  // namespace fairaudit::nn
