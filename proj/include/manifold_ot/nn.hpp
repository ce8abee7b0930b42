#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "manifold_ot/manifolds.hpp"

namespace manifold_ot::nn {

/// Fully connected residual network: affine adapter -> residual blocks -> linear head.
struct NetSpec {
  int input_dim = 1;
  int block_count = 1;
  int block_width = 32;
  int output_dim = 1;

  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

/// Throws ContractError unless every dimension is positive and block_count is 1 or 2.
void validate(const NetSpec& spec);

struct Segment {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
};

struct ParamLayout {
  std::vector<Segment> segments;
  std::size_t size = 0;
};

[[nodiscard]] ParamLayout layout_of(const NetSpec& spec);

using Params = Eigen::VectorXd;
using Grads = Eigen::VectorXd;

enum class InitMode {
  Random,    ///< Glorot-uniform weights, small uniform biases everywhere.
  ZeroHead,  ///< As Random, but the output layer starts at zero so the network outputs 0.
};

[[nodiscard]] Params init_params(const NetSpec& spec, Rng& rng, InitMode mode = InitMode::ZeroHead);

/// Activations kept by a forward pass for the matching backward pass.
struct Tape {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> hidden;      // block inputs, then the final hidden state
  std::vector<Eigen::MatrixXd> hidden_act;  // elu(hidden[k]) for each block
  std::vector<Eigen::MatrixXd> inner_pre;   // first dense layer pre-activations
  std::vector<Eigen::MatrixXd> inner_act;   // elu of inner_pre
};

/**
 * Residual network evaluated on batches whose rows are samples.
 *
 * Block k maps h -> h + W2 elu(W1 elu(h) + b1) + b2, so zero block weights
 * leave only the adapter/head affine composition.
 */
class Network {
 public:
  Network() = default;
  explicit Network(NetSpec spec);
  Network(NetSpec spec, Params params);
  Network(NetSpec spec, Rng& rng, InitMode mode = InitMode::ZeroHead);

  [[nodiscard]] const NetSpec& spec() const { return spec_; }
  [[nodiscard]] const ParamLayout& layout() const { return layout_; }
  [[nodiscard]] const Params& params() const { return params_; }
  [[nodiscard]] Params& params() { return params_; }
  void set_params(Params params);

  [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, Tape& tape) const;

  /**
   * Reverse pass for the scalar sum(out_cotangent .* output).
   *
   * Parameter gradients are accumulated into `grads` when it is non-null
   * (it must already have the parameter length). Returns the cotangent of
   * the inputs.
   */
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& out_cotangent, Grads* grads) const;

 private:
  NetSpec spec_;
  ParamLayout layout_;
  Params params_;
};

/// Convenience: gradient of sum(cotangent .* forward(batch)) with respect to the parameters.
[[nodiscard]] Grads backward(const Network& net, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& cotangent);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamState() = default;
  explicit AdamState(std::size_t n, AdamConfig cfg = {})
      : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
        v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
        config(cfg) {}

  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  AdamConfig config;
};

/// One bias-corrected Adam descent step.
void adam_step(Params& params, const Grads& grads, AdamState& state);

// Checkpoints: 16-byte magic, spec echo, layout, then little-endian float64 parameters.
void write_checkpoint(std::ostream& out, const Network& net);
[[nodiscard]] Network read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Network& net);
[[nodiscard]] Network load_checkpoint(const std::filesystem::path& path);

}  // namespace manifold_ot::nn
