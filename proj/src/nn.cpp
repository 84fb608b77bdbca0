#include "tilenet/nn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tilenet {

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "identity" || name == "linear") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  return "?";
}

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Sigmoid:
      if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
      return std::exp(x) / (1.0 + std::exp(x));
    case Activation::Identity: return x;
  }
  return x;
}

Var activate(Activation a, Var x) {
  switch (a) {
    case Activation::Relu: return relu(x);
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Identity: return x;
  }
  return x;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_tensor({fan_in, fan_out}, -limit, limit, rng);
}

Tensor uniform_tensor(Shape shape, double lo, double hi, SeededRng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Var linear(Var x, Var weight, Var bias) {
  if (x.value().cols() != weight.value().rows()) {
    throw ShapeError("linear: input width " + std::to_string(x.value().cols()) +
                     " does not match weight " + shape_string(weight.value().shape()));
  }
  if (bias.value().size() != weight.value().cols()) {
    throw ShapeError("linear: bias " + shape_string(bias.value().shape()) + " does not match weight " +
                     shape_string(weight.value().shape()));
  }
  return add(matmul(x, weight), bias);
}

Tensor softmax_masked(const Tensor& logits, const std::vector<bool>& masked) {
  if (masked.size() != logits.size()) throw ShapeError("softmax_masked: mask length mismatch");
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!masked[i]) m = std::max(m, logits[i]);
  if (m == -std::numeric_limits<double>::infinity()) {
    throw std::invalid_argument("softmax_masked: every entry is masked");
  }
  Tensor p(logits.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (!masked[i]) z += (p[i] = std::exp(logits[i] - m));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] /= z;
  return p;
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, SeededRng& rng)
    : weight(name + ".weight", glorot_uniform(in, out, rng)),
      bias(name + ".bias", Tensor::matrix(1, out)) {}

Tensor Linear::evaluate(const Tensor& x) const {
  Tensor y = matmul(x, weight.value);
  const std::size_t cols = y.cols();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias.value[i % cols];
  return y;
}

SelfAttention::SelfAttention(const std::string& name, const AttentionConfig& config, SeededRng& rng)
    : config_(config) {
  if (config.input_dim == 0 || config.key_dim == 0 || config.value_dim == 0 || config.heads == 0 ||
      config.layers == 0) {
    throw std::invalid_argument(name + ": attention dimensions must be positive");
  }
  if (config.key_dim % config.heads != 0 || config.value_dim % config.heads != 0) {
    throw std::invalid_argument(name + ": key/value widths must divide evenly across heads");
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::size_t in = l == 0 ? config.input_dim : config.key_dim;
    const std::string p = name + ".layer" + std::to_string(l);
    AttentionParams a;
    a.w_query = Parameter(p + ".w_query", glorot_uniform(in, config.key_dim, rng));
    a.w_key = Parameter(p + ".w_key", glorot_uniform(in, config.key_dim, rng));
    a.w_value = Parameter(p + ".w_value", glorot_uniform(in, config.value_dim, rng));
    a.w_out = Parameter(p + ".w_out", glorot_uniform(config.value_dim, config.key_dim, rng));
    a.ln_gain = Parameter(p + ".ln_gain", Tensor::matrix(1, config.key_dim, 1.0));
    a.ln_bias = Parameter(p + ".ln_bias", Tensor::matrix(1, config.key_dim, 0.0));
    layers_.push_back(std::move(a));
  }
}

Var SelfAttention::forward(Tape& tape, Var x, std::vector<Tensor>* weights) {
  if (x.value().cols() != config_.input_dim) {
    throw ShapeError("self-attention: input width " + std::to_string(x.value().cols()) +
                     ", expected " + std::to_string(config_.input_dim));
  }
  const std::size_t heads = config_.heads;
  const std::size_t dk = config_.key_dim / heads;
  const std::size_t dv = config_.value_dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  Var h = x;
  for (AttentionParams& a : layers_) {
    Var q = matmul(h, tape.param(a.w_query));
    Var k = matmul(h, tape.param(a.w_key));
    Var v = matmul(h, tape.param(a.w_value));
    std::vector<Var> head_out;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      Var qh = heads == 1 ? q : slice_cols(q, hd * dk, dk);
      Var kh = heads == 1 ? k : slice_cols(k, hd * dk, dk);
      Var vh = heads == 1 ? v : slice_cols(v, hd * dv, dv);
      Var attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
      if (weights) weights->push_back(attn.value());
      head_out.push_back(matmul(attn, vh));
    }
    Var mixed = heads == 1 ? head_out[0] : concat_cols(head_out);
    Var projected = matmul(mixed, tape.param(a.w_out));
    h = layer_norm(add(projected, q), tape.param(a.ln_gain), tape.param(a.ln_bias));
  }
  return h;
}

void SelfAttention::collect(ParameterList& out) {
  for (AttentionParams& a : layers_) {
    out.push_back(&a.w_query);
    out.push_back(&a.w_key);
    out.push_back(&a.w_value);
    out.push_back(&a.w_out);
    out.push_back(&a.ln_gain);
    out.push_back(&a.ln_bias);
  }
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "lstm") return CellKind::Lstm;
  if (name == "rnn") return CellKind::Rnn;
  throw std::invalid_argument("unknown cell kind '" + std::string(name) + "'");
}

std::string_view to_string(CellKind k) { return k == CellKind::Lstm ? "lstm" : "rnn"; }

RecurrentCell::RecurrentCell(const std::string& name, CellKind kind, std::size_t input_dim,
                             std::size_t hidden, SeededRng& rng)
    : kind_(kind), input_dim_(input_dim), hidden_(hidden) {
  const std::size_t gates = kind == CellKind::Lstm ? 4 : 1;
  weight_ = Parameter(name + ".weight", glorot_uniform(hidden + input_dim, gates * hidden, rng));
  bias_ = Parameter(name + ".bias", Tensor::matrix(1, gates * hidden));
}

std::pair<Var, Var> RecurrentCell::forward(Tape& tape, Var h_prev, Var c_prev, Var input) {
  if (h_prev.value().cols() != hidden_ || c_prev.value().cols() != hidden_ ||
      input.value().cols() != input_dim_) {
    throw ShapeError("recurrent cell: expected state width " + std::to_string(hidden_) +
                     " and input width " + std::to_string(input_dim_));
  }
  Var z = linear(concat_cols(h_prev, input), tape.param(weight_), tape.param(bias_));
  if (kind_ == CellKind::Rnn) return {tanh(z), c_prev};
  const std::size_t n = hidden_;
  Var in_gate = sigmoid(slice_cols(z, 0, n));
  Var forget_gate = sigmoid(slice_cols(z, n, n));
  Var out_gate = sigmoid(slice_cols(z, 2 * n, n));
  Var candidate = tanh(slice_cols(z, 3 * n, n));
  Var c = add(mul(forget_gate, c_prev), mul(in_gate, candidate));
  Var h = mul(out_gate, tanh(c));
  return {h, c};
}

void MlpSpec::validate() const {
  if (widths.empty()) throw std::invalid_argument("mlp: at least one layer required");
  if (widths.size() != activations.size()) {
    throw std::invalid_argument("mlp: " + std::to_string(widths.size()) + " widths but " +
                                std::to_string(activations.size()) + " activations");
  }
  for (auto w : widths)
    if (w == 0) throw std::invalid_argument("mlp: layer widths must be positive");
}

Mlp::Mlp(const std::string& name, std::size_t input_dim, MlpSpec spec, SeededRng& rng,
         double init_range)
    : input_dim_(input_dim), spec_(std::move(spec)) {
  spec_.validate();
  if (input_dim == 0) throw std::invalid_argument("mlp: input width must be positive");
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < spec_.widths.size(); ++l) {
    const std::string layer_name = name + ".fc" + std::to_string(l);
    Linear layer(layer_name, in, spec_.widths[l], rng);
    if (init_range > 0.0) {
      layer.weight.value = uniform_tensor(layer.weight.value.shape(), -init_range, init_range, rng);
      layer.bias.value = uniform_tensor(layer.bias.value.shape(), -init_range, init_range, rng);
    }
    layers_.push_back(std::move(layer));
    in = spec_.widths[l];
  }
}

Var Mlp::forward_logits(Tape& tape, Var x) {
  if (x.value().cols() != input_dim_) {
    throw ShapeError("mlp: input width " + std::to_string(x.value().cols()) + ", expected " +
                     std::to_string(input_dim_));
  }
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    x = activate(spec_.activations[l], layers_[l].forward(tape, x));
  }
  return layers_.back().forward(tape, x);
}

Var Mlp::forward(Tape& tape, Var x) {
  return activate(spec_.activations.back(), forward_logits(tape, x));
}

Tensor Mlp::evaluate(const Tensor& x) const {
  if (x.cols() != input_dim_) {
    throw ShapeError("mlp: input width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(input_dim_));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = layers_[l].evaluate(h);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = activate(spec_.activations[l], h[i]);
  }
  return h;
}

void Mlp::collect(ParameterList& out) {
  for (Linear& l : layers_) l.collect(out);
}

}  // namespace tilenet
