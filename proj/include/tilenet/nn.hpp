#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tilenet/autodiff.hpp"
#include "tilenet/rng.hpp"

namespace tilenet {

enum class Activation { Relu, Tanh, Sigmoid, Identity };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);
double activate(Activation a, double x);
Var activate(Activation a, Var x);

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, SeededRng& rng);
Tensor uniform_tensor(Shape shape, double lo, double hi, SeededRng& rng);

// y = x W + b, with b broadcast over the rows of x.
Var linear(Var x, Var weight, Var bias);

// Non-differentiable masked softmax used for sampling and inspection.
Tensor softmax_masked(const Tensor& logits, const std::vector<bool>& masked);

inline constexpr double kLayerNormEps = 1e-5;
inline Var layer_norm(Var x, Var gain, Var bias) { return layer_norm_rows(x, gain, bias, kLayerNormEps); }

struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, SeededRng& rng);

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  Var forward(Tape& tape, Var x) { return linear(x, tape.param(weight), tape.param(bias)); }
  Tensor evaluate(const Tensor& x) const;
  void collect(ParameterList& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct AttentionConfig {
  std::size_t input_dim = 0;
  std::size_t key_dim = 128;
  std::size_t value_dim = 128;
  std::size_t heads = 1;
  std::size_t layers = 1;
};

// Per-layer weights: W_Q, W_K (in x key), W_V (in x value), W_O (value x key)
// and the layer-norm gain/bias over the key width.
struct AttentionParams {
  Parameter w_query;
  Parameter w_key;
  Parameter w_value;
  Parameter w_out;
  Parameter ln_gain;
  Parameter ln_bias;
};

// Scaled dot-product self-attention with a residual on the projected queries:
//   H = softmax(Q K^T / sqrt(d_k)) V,  out = LayerNorm(H W_O + Q).
// Output rows have width key_dim; row order follows the input.
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(const std::string& name, const AttentionConfig& config, SeededRng& rng);

  const AttentionConfig& config() const { return config_; }
  std::size_t output_dim() const { return config_.key_dim; }
  std::vector<AttentionParams>& layers() { return layers_; }

  // When weights is non-null it receives each layer/head's attention matrix.
  Var forward(Tape& tape, Var x, std::vector<Tensor>* weights = nullptr);
  void collect(ParameterList& out);

 private:
  AttentionConfig config_;
  std::vector<AttentionParams> layers_;
};

enum class CellKind { Lstm, Rnn };

CellKind parse_cell_kind(std::string_view name);
std::string_view to_string(CellKind k);

// Recurrent decoder cell over [h_prev ; input]. LSTM gates are packed as
// [input, forget, output, candidate] along the columns of a single weight.
// The vanilla form computes h = tanh([h_prev ; input] W + b) and carries c through.
class RecurrentCell {
 public:
  RecurrentCell() = default;
  RecurrentCell(const std::string& name, CellKind kind, std::size_t input_dim, std::size_t hidden,
                SeededRng& rng);

  CellKind kind() const { return kind_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t input_dim() const { return input_dim_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

  std::pair<Var, Var> forward(Tape& tape, Var h_prev, Var c_prev, Var input);
  void collect(ParameterList& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  CellKind kind_ = CellKind::Lstm;
  std::size_t input_dim_ = 0;
  std::size_t hidden_ = 0;
  Parameter weight_;
  Parameter bias_;
};

struct MlpSpec {
  std::vector<std::size_t> widths;
  std::vector<Activation> activations;

  void validate() const;
};

class Mlp {
 public:
  Mlp() = default;
  // init_range > 0 draws every weight and bias from U(-init_range, init_range);
  // otherwise weights are Glorot-uniform and biases zero.
  Mlp(const std::string& name, std::size_t input_dim, MlpSpec spec, SeededRng& rng,
      double init_range = 0.0);

  const MlpSpec& spec() const { return spec_; }
  std::size_t input_dim() const { return input_dim_; }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

  Var forward(Tape& tape, Var x);
  // Pre-activation output of the last layer (used for logit-space losses).
  Var forward_logits(Tape& tape, Var x);
  Tensor evaluate(const Tensor& x) const;
  void collect(ParameterList& out);

 private:
  std::size_t input_dim_ = 0;
  MlpSpec spec_;
  std::vector<Linear> layers_;
};

}  // namespace tilenet
