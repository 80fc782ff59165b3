#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "medqc/textprep.hpp"

namespace medqc {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

enum class TaskMode { kSingleLabel, kMultiLabel };
enum class Variant { kFull, kGlobalOnly, kLocalOnly };

std::string_view to_string(TaskMode mode);
std::string_view to_string(Variant variant);
TaskMode parse_task_mode(std::string_view text);  // "single" | "multi"
Variant parse_variant(std::string_view text);     // "full" | "global" | "local"

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t hidden_dim = 64;
  std::size_t ffn_dim = 256;
  std::size_t max_positions = kDefaultMaxLen;
  double dropout_rate = 0.1;
  std::size_t vocab_size = 0;
  std::size_t num_labels = 2;
  TaskMode task_mode = TaskMode::kSingleLabel;
  Variant variant = Variant::kFull;

  void validate() const;  // throws InputError
  std::size_t head_input_dim() const {
    return variant == Variant::kFull ? 2 * hidden_dim : hidden_dim;
  }
};

struct TensorSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return rows * cols; }
};

// Named row-major tensors laid out in one contiguous buffer. Vectors are
// stored as 1 x N.
class TensorStore {
 public:
  TensorStore() = default;
  explicit TensorStore(std::vector<TensorSpec> specs);

  std::size_t tensor_count() const { return specs_.size(); }
  const std::vector<TensorSpec>& specs() const { return specs_; }
  const TensorSpec& spec(std::size_t i) const { return specs_[i]; }
  std::size_t index_of(std::string_view name) const;  // throws InputError

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t total_size() const { return values_.size(); }

  MatrixMap tensor(std::size_t i) {
    return MatrixMap(values_.data() + specs_[i].offset, static_cast<Eigen::Index>(specs_[i].rows),
                     static_cast<Eigen::Index>(specs_[i].cols));
  }
  ConstMatrixMap tensor(std::size_t i) const {
    return ConstMatrixMap(values_.data() + specs_[i].offset,
                          static_cast<Eigen::Index>(specs_[i].rows),
                          static_cast<Eigen::Index>(specs_[i].cols));
  }

  TensorStore zeros_like() const;
  void set_zero();

 private:
  std::vector<TensorSpec> specs_;
  std::vector<double> values_;
};

struct LayerSlots {
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  std::size_t ln1_gain, ln1_bias;
  std::size_t ffn_in, ffn_in_bias, ffn_out, ffn_out_bias;
  std::size_t ln2_gain, ln2_bias;
};

struct ParameterSlots {
  std::size_t token_emb, position_emb, segment_emb, emb_ln_gain, emb_ln_bias;
  std::vector<LayerSlots> layers;
  std::size_t head_weight, head_bias;
};

// The single parameter store read by both the local and the global encoder
// pass.
class ModelParameters {
 public:
  ModelParameters() = default;
  // Normal(0, 0.02) weights, zero biases, unit norm gains.
  ModelParameters(const EncoderConfig& config, std::uint64_t seed);
  // Adopts an existing store; tensor names and shapes must match the config.
  ModelParameters(const EncoderConfig& config, TensorStore store);

  const EncoderConfig& config() const { return config_; }
  const ParameterSlots& slots() const { return slots_; }
  TensorStore& store() { return store_; }
  const TensorStore& store() const { return store_; }
  std::size_t parameter_count() const { return store_.total_size(); }

  // Tensor layout implied by a config, in canonical order.
  static std::vector<TensorSpec> layout(const EncoderConfig& config);
  static ParameterSlots resolve_slots(const TensorStore& store, std::size_t num_layers);

 private:
  EncoderConfig config_;
  TensorStore store_;
  ParameterSlots slots_{};
};

// Gradient buffer with the same layout as the parameters.
using Gradients = TensorStore;

struct LayerNormCache {
  Matrix normalized;
  Vector inv_std;
};

struct LayerCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head
  Matrix context;
  Matrix attn_dropout;  // multipliers, empty when dropout is off
  LayerNormCache ln1;
  Matrix mid;  // output of the first norm
  Matrix ffn_pre, ffn_act;
  Matrix ffn_dropout;
  LayerNormCache ln2;
};

struct EncoderCache {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> segments;
  std::size_t valid_len = 0;
  LayerNormCache emb_ln;
  Matrix emb_dropout;
  std::vector<LayerCache> layers;
  Matrix output;
};

// Per-call dropout source. A disabled source never drops.
class DropoutSource {
 public:
  DropoutSource() = default;
  DropoutSource(double rate, std::uint64_t seed) : rate_(rate), state_(seed), enabled_(rate > 0.0) {}

  bool enabled() const { return enabled_; }
  // Inverted-dropout multipliers (0 or 1/(1-rate)).
  Matrix mask(Eigen::Index rows, Eigen::Index cols);

 private:
  std::uint64_t next();
  double rate_ = 0.0;
  std::uint64_t state_ = 0;
  bool enabled_ = false;
};

// Transformer stack over ids[0, valid_len); positions at or past valid_len
// are padding and excluded from attention. Returns len x H hidden states.
Matrix encoder_forward(const ModelParameters& params, const std::vector<TokenId>& ids,
                       const std::vector<std::uint8_t>& segments, std::size_t valid_len,
                       DropoutSource& dropout, EncoderCache* cache = nullptr);

// Accumulates parameter gradients given dLoss/dOutput for one pass.
void encoder_backward(const ModelParameters& params, const EncoderCache& cache,
                      const Matrix& grad_output, Gradients& grads);

// Zeroes every row whose mask value is 0.
Matrix apply_context_mask(const Matrix& hidden, const std::vector<std::uint8_t>& mask);

// Mean over mask-1 rows, or cls_row when the mask is all zeros.
Vector pool_local(const Matrix& masked_hidden, const std::vector<std::uint8_t>& mask,
                  const Vector& cls_row);

Vector pool_global(const Matrix& hidden);

struct Classification {
  Vector logits;
  Vector probabilities;
};

// Dense projection of the head input; softmax for single-label, sigmoid for
// multi-label. Throws NumericError on non-finite logits.
Classification classify(const Vector& head_input, const ModelParameters& params);

// Builds the head input for the configured variant.
Vector head_input(const Vector& local_vec, const Vector& global_vec, Variant variant);

struct ForwardResult {
  Vector local_vec;   // empty for global-only
  Vector global_vec;  // empty for local-only
  Classification output;
};

struct ForwardCache {
  EncoderCache local;
  EncoderCache global;
  Matrix local_hidden;
  std::size_t masked_rows = 0;
  Vector head_in;
  Matrix head_dropout;
};

// Full dual-encoder pass. When train is set, dropout draws from dropout_seed.
ForwardResult forward(const ModelParameters& params, const EncodedPair& pair, bool train,
                      std::uint64_t dropout_seed = 0, ForwardCache* cache = nullptr);

// Backpropagates dLoss/dlogits (scaled by `scale`) into grads.
void backward(const ModelParameters& params, const EncodedPair& pair, const ForwardCache& cache,
              const Vector& grad_logits, double scale, Gradients& grads);

}  // namespace medqc
