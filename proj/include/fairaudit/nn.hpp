#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fairaudit/errors.hpp"

namespace fairaudit::nn {

enum class Activation { relu, tanh };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

// Fully connected net with one pre-sigmoid output logit. depth >= 1 hidden
// layers, all widths >= 1.
struct NetworkArchitecture {
  int input_dim = 0;
  std::vector<int> hidden_layers;
  Activation activation = Activation::relu;

  void validate() const;
  // Number of weight matrices (hidden layers + output layer).
  int n_layers() const { return static_cast<int>(hidden_layers.size()) + 1; }
  int layer_rows(int l) const;
  int layer_cols(int l) const;
  int param_count() const;

  bool operator==(const NetworkArchitecture&) const = default;
};

// Placement of one layer's weight matrix (row-major) and bias inside the
// flat parameter vector.
struct LayerShape {
  int rows = 0;
  int cols = 0;
  int weight_offset = 0;
  int bias_offset = 0;

  bool operator==(const LayerShape&) const = default;
};

std::vector<LayerShape> make_shape_table(const NetworkArchitecture& arch);

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Flat parameter vector with its layer layout. Layout: [W0, b0, W1, b1, ...],
// weights row-major.
struct WeightVector {
  Eigen::VectorXd values;
  std::vector<LayerShape> shapes;

  Eigen::Map<const RowMajorMatrix> weight(int l) const {
    const LayerShape& s = shapes[l];
    return {values.data() + s.weight_offset, s.rows, s.cols};
  }
  Eigen::Map<const Eigen::VectorXd> bias(int l) const {
    const LayerShape& s = shapes[l];
    return {values.data() + s.bias_offset, s.rows};
  }

  // Throws StructuralError if the layout does not match arch.
  void validate_against(const NetworkArchitecture& arch) const;
};

WeightVector zero_weights(const NetworkArchitecture& arch);

// Per-layer Gaussian init, stddev 1/sqrt(fan_in), biases zero.
WeightVector init_weights(const NetworkArchitecture& arch, std::uint64_t seed);

// Numerically stable logistic function; output clamped strictly inside (0,1).
double sigmoid(double logit);

// Binary cross entropy computed in logit space; finite for |logit| <= 1e3.
double bce_loss(double logit, int y);

double forward(const NetworkArchitecture& arch, const WeightVector& w,
               const Eigen::VectorXd& x);

// Batched logits for a row-major sample matrix (rows are examples).
Eigen::VectorXd forward_batch(const NetworkArchitecture& arch,
                              const WeightVector& w, const Eigen::MatrixXd& X);

// One reverse-mode sweep over a batch; loss is the SUM of per-row bce terms
// and gradients are sums over rows. Input gradients are per-row.
struct BatchEval {
  Eigen::VectorXd logits;
  double loss_sum = 0.0;
  Eigen::MatrixXd input_grads;     // rows x input_dim, if requested
  Eigen::VectorXd param_grad_sum;  // flat layout, if requested
};

BatchEval eval_batch(const NetworkArchitecture& arch, const WeightVector& w,
                     const Eigen::MatrixXd& X, const Eigen::VectorXi& y,
                     bool want_input_grads, bool want_param_grads);

// d(bce o forward)/dx at a single point.
Eigen::VectorXd grad_input(const NetworkArchitecture& arch,
                           const WeightVector& w, const Eigen::VectorXd& x,
                           int y);

// d(bce o forward)/dw at a single point, flat layout.
Eigen::VectorXd grad_params(const NetworkArchitecture& arch,
                            const WeightVector& w, const Eigen::VectorXd& x,
                            int y);

enum class GradTarget { input, params };

// Central-difference oracle over the primal path only; used to validate the
// reverse-mode gradients, so it must never call them.
Eigen::VectorXd finite_diff_gradient(const NetworkArchitecture& arch,
                                     const WeightVector& w,
                                     const Eigen::VectorXd& x, int y, double h,
                                     GradTarget target);

}  // namespace fairaudit::nn
