#include "manifold_ot/nn.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "manifold_ot/errors.hpp"

namespace manifold_ot::nn {

namespace {

using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

constexpr std::array<char, 16> kMagic = {'M', 'O', 'T', '-', 'N', 'E', 'T', '-',
                                         'C', 'K', 'P', 'T', '\0', '\0', '\0', '\x01'};

Eigen::MatrixXd elu(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

// Derivative expressed through the pre-activation.
Eigen::MatrixXd elu_grad(const Eigen::MatrixXd& x) {
  return x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
}

struct Views {
  const Segment* adapter_w;
  const Segment* adapter_b;
  std::vector<std::array<const Segment*, 4>> blocks;  // W1, b1, W2, b2
  const Segment* head_w;
  const Segment* head_b;
};

Views views_of(const ParamLayout& layout, int blocks) {
  Views v{};
  const auto& s = layout.segments;
  v.adapter_w = &s[0];
  v.adapter_b = &s[1];
  for (int k = 0; k < blocks; ++k) {
    const std::size_t base = 2 + 4 * static_cast<std::size_t>(k);
    v.blocks.push_back({&s[base], &s[base + 1], &s[base + 2], &s[base + 3]});
  }
  v.head_w = &s[s.size() - 2];
  v.head_b = &s[s.size() - 1];
  return v;
}

ConstMatMap mat(const Params& p, const Segment* s) { return {p.data() + s->offset, s->rows, s->cols}; }
ConstVecMap vec(const Params& p, const Segment* s) { return {p.data() + s->offset, s->rows}; }
MatMap mat(Grads& g, const Segment* s) { return {g.data() + s->offset, s->rows, s->cols}; }
Eigen::Map<Eigen::VectorXd> vec(Grads& g, const Segment* s) { return {g.data() + s->offset, s->rows}; }

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<unsigned char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<unsigned char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(b.data()), 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_le(std::istream& in, int bytes) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), bytes);
  if (!in) throw ContractError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void validate(const NetSpec& spec) {
  if (spec.input_dim < 1 || spec.output_dim < 1 || spec.block_width < 1)
    throw ContractError("network dimensions must be positive");
  if (spec.block_count < 1 || spec.block_count > 2) throw ContractError("block_count must be 1 or 2");
}

ParamLayout layout_of(const NetSpec& spec) {
  validate(spec);
  ParamLayout layout;
  auto add = [&](std::string name, int rows, int cols) {
    layout.segments.push_back({std::move(name), rows, cols, layout.size});
    layout.size += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  };
  const int w = spec.block_width;
  add("adapter.weight", w, spec.input_dim);
  add("adapter.bias", w, 1);
  for (int k = 0; k < spec.block_count; ++k) {
    const std::string p = "block" + std::to_string(k) + ".";
    add(p + "dense1.weight", w, w);
    add(p + "dense1.bias", w, 1);
    add(p + "dense2.weight", w, w);
    add(p + "dense2.bias", w, 1);
  }
  add("head.weight", spec.output_dim, w);
  add("head.bias", spec.output_dim, 1);
  return layout;
}

Params init_params(const NetSpec& spec, Rng& rng, InitMode mode) {
  const ParamLayout layout = layout_of(spec);
  Params p(static_cast<Eigen::Index>(layout.size));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const std::size_t last_weight = layout.segments.size() - 2;
  for (std::size_t i = 0; i < layout.segments.size(); ++i) {
    const Segment& s = layout.segments[i];
    double* data = p.data() + s.offset;
    const std::size_t n = static_cast<std::size_t>(s.rows) * static_cast<std::size_t>(s.cols);
    const bool is_bias = s.cols == 1 && s.name.ends_with("bias");
    if (mode == InitMode::ZeroHead && i >= last_weight) {
      std::fill(data, data + n, 0.0);
      continue;
    }
    double a = 0.0;
    if (is_bias) {
      // Fan-in of the weight matrix preceding this bias.
      a = 1.0 / std::sqrt(static_cast<double>(layout.segments[i - 1].cols));
    } else {
      a = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
    }
    for (std::size_t j = 0; j < n; ++j) data[j] = a * unit(rng);
  }
  return p;
}

Network::Network(NetSpec spec) : spec_(spec), layout_(layout_of(spec)) {
  params_ = Params::Zero(static_cast<Eigen::Index>(layout_.size));
}

Network::Network(NetSpec spec, Params params) : spec_(spec), layout_(layout_of(spec)) {
  set_params(std::move(params));
}

Network::Network(NetSpec spec, Rng& rng, InitMode mode)
    : spec_(spec), layout_(layout_of(spec)), params_(init_params(spec, rng, mode)) {}

void Network::set_params(Params params) {
  if (static_cast<std::size_t>(params.size()) != layout_.size)
    throw ContractError("parameter vector length does not match the network layout");
  params_ = std::move(params);
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& inputs) const {
  Tape tape;
  return forward(inputs, tape);
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& inputs, Tape& tape) const {
  if (inputs.cols() != spec_.input_dim)
    throw ContractError("input has " + std::to_string(inputs.cols()) + " columns, network expects " +
                        std::to_string(spec_.input_dim));
  const Views v = views_of(layout_, spec_.block_count);
  tape.input = inputs;
  tape.hidden.clear();
  tape.hidden_act.clear();
  tape.inner_pre.clear();
  tape.inner_act.clear();

  Eigen::MatrixXd h = inputs * mat(params_, v.adapter_w).transpose();
  h.rowwise() += vec(params_, v.adapter_b).transpose();
  for (const auto& b : v.blocks) {
    tape.hidden.push_back(h);
    tape.hidden_act.push_back(elu(h));
    Eigen::MatrixXd z = tape.hidden_act.back() * mat(params_, b[0]).transpose();
    z.rowwise() += vec(params_, b[1]).transpose();
    tape.inner_pre.push_back(z);
    tape.inner_act.push_back(elu(z));
    h.noalias() += tape.inner_act.back() * mat(params_, b[2]).transpose();
    h.rowwise() += vec(params_, b[3]).transpose();
  }
  tape.hidden.push_back(h);
  Eigen::MatrixXd out = h * mat(params_, v.head_w).transpose();
  out.rowwise() += vec(params_, v.head_b).transpose();
  return out;
}

Eigen::MatrixXd Network::backward(const Tape& tape, const Eigen::MatrixXd& g_out, Grads* grads) const {
  if (g_out.cols() != spec_.output_dim || g_out.rows() != tape.input.rows())
    throw ContractError("output cotangent shape does not match the forward batch");
  if (grads && static_cast<std::size_t>(grads->size()) != layout_.size)
    throw ContractError("gradient buffer length does not match the network layout");
  const Views v = views_of(layout_, spec_.block_count);

  if (grads) {
    mat(*grads, v.head_w).noalias() += g_out.transpose() * tape.hidden.back();
    vec(*grads, v.head_b) += g_out.colwise().sum().transpose();
  }
  Eigen::MatrixXd g_h = g_out * mat(params_, v.head_w);

  for (int k = spec_.block_count - 1; k >= 0; --k) {
    const auto& b = v.blocks[static_cast<std::size_t>(k)];
    const auto ks = static_cast<std::size_t>(k);
    if (grads) {
      mat(*grads, b[2]).noalias() += g_h.transpose() * tape.inner_act[ks];
      vec(*grads, b[3]) += g_h.colwise().sum().transpose();
    }
    const Eigen::MatrixXd g_z = (g_h * mat(params_, b[2])).cwiseProduct(elu_grad(tape.inner_pre[ks]));
    if (grads) {
      mat(*grads, b[0]).noalias() += g_z.transpose() * tape.hidden_act[ks];
      vec(*grads, b[1]) += g_z.colwise().sum().transpose();
    }
    g_h += (g_z * mat(params_, b[0])).cwiseProduct(elu_grad(tape.hidden[ks]));
  }

  if (grads) {
    mat(*grads, v.adapter_w).noalias() += g_h.transpose() * tape.input;
    vec(*grads, v.adapter_b) += g_h.colwise().sum().transpose();
  }
  return g_h * mat(params_, v.adapter_w);
}

Grads backward(const Network& net, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& cotangent) {
  Tape tape;
  net.forward(batch, tape);
  Grads g = Grads::Zero(net.params().size());
  net.backward(tape, cotangent, &g);
  return g;
}

void adam_step(Params& params, const Grads& grads, AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ContractError("Adam: parameter, gradient and moment lengths differ");
  const AdamConfig& c = state.config;
  state.step += 1;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  const double t = static_cast<double>(state.step);
  const double m_corr = 1.0 / (1.0 - std::pow(c.beta1, t));
  const double v_corr = 1.0 / (1.0 - std::pow(c.beta2, t));
  params.array() -=
      c.lr * (state.m.array() * m_corr) / ((state.v.array() * v_corr).sqrt() + c.eps);
}

void write_checkpoint(std::ostream& out, const Network& net) {
  out.write(kMagic.data(), kMagic.size());
  const NetSpec& s = net.spec();
  put_u32(out, static_cast<std::uint32_t>(s.input_dim));
  put_u32(out, static_cast<std::uint32_t>(s.block_count));
  put_u32(out, static_cast<std::uint32_t>(s.block_width));
  put_u32(out, static_cast<std::uint32_t>(s.output_dim));
  const ParamLayout& layout = net.layout();
  put_u32(out, static_cast<std::uint32_t>(layout.segments.size()));
  for (const Segment& seg : layout.segments) {
    put_u32(out, static_cast<std::uint32_t>(seg.rows));
    put_u32(out, static_cast<std::uint32_t>(seg.cols));
    put_u64(out, seg.offset);
  }
  put_u64(out, layout.size);
  for (Eigen::Index i = 0; i < net.params().size(); ++i) put_f64(out, net.params()(i));
}

Network read_checkpoint(std::istream& in) {
  std::array<char, 16> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ContractError("not a network checkpoint (bad magic)");
  NetSpec spec;
  spec.input_dim = static_cast<int>(get_le(in, 4));
  spec.block_count = static_cast<int>(get_le(in, 4));
  spec.block_width = static_cast<int>(get_le(in, 4));
  spec.output_dim = static_cast<int>(get_le(in, 4));
  const ParamLayout expected = layout_of(spec);
  const auto segments = get_le(in, 4);
  if (segments != expected.segments.size()) throw ContractError("checkpoint layout does not match its spec");
  for (const Segment& seg : expected.segments) {
    const auto rows = get_le(in, 4);
    const auto cols = get_le(in, 4);
    const auto offset = get_le(in, 8);
    if (rows != static_cast<std::uint64_t>(seg.rows) || cols != static_cast<std::uint64_t>(seg.cols) ||
        offset != seg.offset)
      throw ContractError("checkpoint segment '" + seg.name + "' does not match its spec");
  }
  const auto count = get_le(in, 8);
  if (count != expected.size) throw ContractError("checkpoint parameter count does not match its spec");
  Params p(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = std::bit_cast<double>(get_le(in, 8));
  return Network(spec, std::move(p));
}

void save_checkpoint(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, net);
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace manifold_ot::nn
