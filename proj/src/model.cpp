#include "medqc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "medqc/error.hpp"

namespace medqc {

namespace {

constexpr double kNormEps = 1e-12;
constexpr double kInitStd = 0.02;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (stream * 0xD1B54A32D192ED03ULL);
  return splitmix64(s);
}

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

void layer_norm(const Matrix& x, ConstMatrixMap gain, ConstMatrixMap bias, Matrix& out,
                LayerNormCache* cache) {
  const Eigen::Index n = x.rows();
  const Eigen::Index h = x.cols();
  Matrix normalized(n, h);
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + kNormEps);
    normalized.row(i) = (x.row(i).array() - mean) * inv_std(i);
  }
  out = (normalized.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
}

Matrix layer_norm_backward(const Matrix& grad_out, const LayerNormCache& cache, ConstMatrixMap gain,
                           MatrixMap grad_gain, MatrixMap grad_bias) {
  grad_gain.row(0) += (grad_out.array() * cache.normalized.array()).colwise().sum().matrix();
  grad_bias.row(0) += grad_out.colwise().sum();
  const Matrix dnorm = grad_out.array().rowwise() * gain.row(0).array();
  const double width = static_cast<double>(grad_out.cols());
  Matrix dx(grad_out.rows(), grad_out.cols());
  for (Eigen::Index i = 0; i < grad_out.rows(); ++i) {
    const double mean_d = dnorm.row(i).sum() / width;
    const double mean_dx = dnorm.row(i).dot(cache.normalized.row(i)) / width;
    dx.row(i) = cache.inv_std(i) *
                (dnorm.row(i).array() - mean_d - cache.normalized.row(i).array() * mean_dx);
  }
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

std::string_view to_string(TaskMode mode) {
  return mode == TaskMode::kMultiLabel ? "multi" : "single";
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kGlobalOnly: return "global";
    case Variant::kLocalOnly: return "local";
    default: return "full";
  }
}

TaskMode parse_task_mode(std::string_view text) {
  if (text == "single") return TaskMode::kSingleLabel;
  if (text == "multi") return TaskMode::kMultiLabel;
  throw InputError("unknown task mode '" + std::string(text) + "' (expected single|multi)");
}

Variant parse_variant(std::string_view text) {
  if (text == "full") return Variant::kFull;
  if (text == "global") return Variant::kGlobalOnly;
  if (text == "local") return Variant::kLocalOnly;
  throw InputError("unknown variant '" + std::string(text) + "' (expected full|global|local)");
}

void EncoderConfig::validate() const {
  if (hidden_dim == 0 || num_heads == 0 || hidden_dim % num_heads != 0) {
    throw InputError("hidden_dim must be a positive multiple of num_heads");
  }
  if (ffn_dim == 0) throw InputError("ffn_dim must be positive");
  if (max_positions < 1) throw InputError("max_positions must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InputError("dropout_rate must be in [0,1)");
  if (vocab_size <= kReservedTokens) throw InputError("vocab_size must exceed the reserved tokens");
  if (task_mode == TaskMode::kSingleLabel && num_labels < 2) {
    throw InputError("single-label tasks need at least 2 labels");
  }
  if (num_labels < 1) throw InputError("num_labels must be >= 1");
}

// ---------------------------------------------------------------------------
// TensorStore

TensorStore::TensorStore(std::vector<TensorSpec> specs) : specs_(std::move(specs)) {
  std::size_t offset = 0;
  for (auto& s : specs_) {
    s.offset = offset;
    offset += s.size();
  }
  values_.assign(offset, 0.0);
}

std::size_t TensorStore::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].name == name) return i;
  }
  throw InputError("no tensor named '" + std::string(name) + "'");
}

TensorStore TensorStore::zeros_like() const { return TensorStore(specs_); }

void TensorStore::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

// ---------------------------------------------------------------------------
// ModelParameters

std::vector<TensorSpec> ModelParameters::layout(const EncoderConfig& c) {
  std::vector<TensorSpec> specs;
  auto add = [&specs](std::string name, std::size_t rows, std::size_t cols) {
    specs.push_back({std::move(name), rows, cols, 0});
  };
  const std::size_t h = c.hidden_dim;
  add("embeddings.token", c.vocab_size, h);
  add("embeddings.position", c.max_positions, h);
  add("embeddings.segment", 2, h);
  add("embeddings.norm.gain", 1, h);
  add("embeddings.norm.bias", 1, h);
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "attn.query.weight", h, h);
    add(p + "attn.query.bias", 1, h);
    add(p + "attn.key.weight", h, h);
    add(p + "attn.key.bias", 1, h);
    add(p + "attn.value.weight", h, h);
    add(p + "attn.value.bias", 1, h);
    add(p + "attn.output.weight", h, h);
    add(p + "attn.output.bias", 1, h);
    add(p + "attn.norm.gain", 1, h);
    add(p + "attn.norm.bias", 1, h);
    add(p + "ffn.in.weight", h, c.ffn_dim);
    add(p + "ffn.in.bias", 1, c.ffn_dim);
    add(p + "ffn.out.weight", c.ffn_dim, h);
    add(p + "ffn.out.bias", 1, h);
    add(p + "ffn.norm.gain", 1, h);
    add(p + "ffn.norm.bias", 1, h);
  }
  add("head.weight", c.head_input_dim(), c.num_labels);
  add("head.bias", 1, c.num_labels);
  return specs;
}

ParameterSlots ModelParameters::resolve_slots(const TensorStore& store, std::size_t num_layers) {
  ParameterSlots s{};
  s.token_emb = store.index_of("embeddings.token");
  s.position_emb = store.index_of("embeddings.position");
  s.segment_emb = store.index_of("embeddings.segment");
  s.emb_ln_gain = store.index_of("embeddings.norm.gain");
  s.emb_ln_bias = store.index_of("embeddings.norm.bias");
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerSlots ls{};
    ls.wq = store.index_of(p + "attn.query.weight");
    ls.bq = store.index_of(p + "attn.query.bias");
    ls.wk = store.index_of(p + "attn.key.weight");
    ls.bk = store.index_of(p + "attn.key.bias");
    ls.wv = store.index_of(p + "attn.value.weight");
    ls.bv = store.index_of(p + "attn.value.bias");
    ls.wo = store.index_of(p + "attn.output.weight");
    ls.bo = store.index_of(p + "attn.output.bias");
    ls.ln1_gain = store.index_of(p + "attn.norm.gain");
    ls.ln1_bias = store.index_of(p + "attn.norm.bias");
    ls.ffn_in = store.index_of(p + "ffn.in.weight");
    ls.ffn_in_bias = store.index_of(p + "ffn.in.bias");
    ls.ffn_out = store.index_of(p + "ffn.out.weight");
    ls.ffn_out_bias = store.index_of(p + "ffn.out.bias");
    ls.ln2_gain = store.index_of(p + "ffn.norm.gain");
    ls.ln2_bias = store.index_of(p + "ffn.norm.bias");
    s.layers.push_back(ls);
  }
  s.head_weight = store.index_of("head.weight");
  s.head_bias = store.index_of("head.bias");
  return s;
}

ModelParameters::ModelParameters(const EncoderConfig& config, std::uint64_t seed)
    : config_(config), store_(layout(config)) {
  config_.validate();
  slots_ = resolve_slots(store_, config_.num_layers);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStd);
  for (std::size_t i = 0; i < store_.tensor_count(); ++i) {
    const std::string& name = store_.spec(i).name;
    auto t = store_.tensor(i);
    if (name.ends_with(".gain")) {
      t.setOnes();
    } else if (name.ends_with(".bias")) {
      t.setZero();
    } else {
      for (Eigen::Index r = 0; r < t.rows(); ++r) {
        for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = normal(rng);
      }
    }
  }
}

ModelParameters::ModelParameters(const EncoderConfig& config, TensorStore store)
    : config_(config), store_(std::move(store)) {
  config_.validate();
  const auto expected = layout(config_);
  if (expected.size() != store_.tensor_count()) throw InputError("parameter store does not match config");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& a = expected[i];
    const auto& b = store_.spec(i);
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) {
      throw InputError("parameter tensor '" + b.name + "' does not match config (expected '" + a.name + "')");
    }
  }
  slots_ = resolve_slots(store_, config_.num_layers);
}

// ---------------------------------------------------------------------------
// Dropout

std::uint64_t DropoutSource::next() { return splitmix64(state_); }

Matrix DropoutSource::mask(Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate_);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
      m(r, c) = u < rate_ ? 0.0 : keep_scale;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Encoder

Matrix encoder_forward(const ModelParameters& params, const std::vector<TokenId>& ids,
                       const std::vector<std::uint8_t>& segments, std::size_t valid_len,
                       DropoutSource& dropout, EncoderCache* cache) {
  const auto& cfg = params.config();
  const auto& slots = params.slots();
  const auto& store = params.store();
  const std::size_t n = ids.size();
  if (n == 0) throw InputError("empty encoder input");
  if (n > cfg.max_positions) {
    throw InputError("sequence length " + std::to_string(n) + " exceeds max_positions " +
                     std::to_string(cfg.max_positions));
  }
  if (segments.size() != n) throw InputError("segment ids must align with token ids");
  if (valid_len == 0 || valid_len > n) throw InputError("valid length out of range");

  const std::size_t h = cfg.hidden_dim;
  const auto tok = store.tensor(slots.token_emb);
  const auto pos = store.tensor(slots.position_emb);
  const auto seg = store.tensor(slots.segment_emb);
  Matrix emb(idx(n), idx(h));
  for (std::size_t i = 0; i < n; ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= cfg.vocab_size) {
      throw InputError("token id " + std::to_string(ids[i]) + " out of vocabulary range");
    }
    if (segments[i] > 1) throw InputError("segment id must be 0 or 1");
    emb.row(idx(i)) = tok.row(ids[i]) + pos.row(idx(i)) + seg.row(segments[i]);
  }

  Matrix x;
  LayerNormCache emb_ln;
  layer_norm(emb, store.tensor(slots.emb_ln_gain), store.tensor(slots.emb_ln_bias), x,
             cache ? &emb_ln : nullptr);
  Matrix emb_drop;
  if (dropout.enabled()) {
    emb_drop = dropout.mask(x.rows(), x.cols());
    x.array() *= emb_drop.array();
  }
  if (cache) {
    cache->ids = ids;
    cache->segments = segments;
    cache->valid_len = valid_len;
    cache->emb_ln = std::move(emb_ln);
    cache->emb_dropout = std::move(emb_drop);
    cache->layers.clear();
    cache->layers.reserve(cfg.num_layers);
  }

  const std::size_t heads = cfg.num_heads;
  const std::size_t d = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const Eigen::Index valid = idx(valid_len);

  for (const auto& ls : slots.layers) {
    LayerCache lc;
    Matrix q = (x * store.tensor(ls.wq)).rowwise() + store.tensor(ls.bq).row(0);
    Matrix k = (x * store.tensor(ls.wk)).rowwise() + store.tensor(ls.bk).row(0);
    Matrix v = (x * store.tensor(ls.wv)).rowwise() + store.tensor(ls.bv).row(0);
    Matrix context(idx(n), idx(h));
    if (cache) lc.probs.reserve(heads);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const Eigen::Index c0 = idx(hd * d);
      const Eigen::Index dw = idx(d);
      // Keys and values past valid_len are padding and never attended to.
      Matrix scores = (q.middleCols(c0, dw) * k.block(0, c0, valid, dw).transpose()) * scale;
      for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const double mx = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - mx).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      context.middleCols(c0, dw) = scores * v.block(0, c0, valid, dw);
      if (cache) lc.probs.push_back(std::move(scores));
    }
    Matrix attn = (context * store.tensor(ls.wo)).rowwise() + store.tensor(ls.bo).row(0);
    Matrix attn_drop;
    if (dropout.enabled()) {
      attn_drop = dropout.mask(attn.rows(), attn.cols());
      attn.array() *= attn_drop.array();
    }
    Matrix mid;
    LayerNormCache ln1;
    layer_norm(x + attn, store.tensor(ls.ln1_gain), store.tensor(ls.ln1_bias), mid,
               cache ? &ln1 : nullptr);

    Matrix ffn_pre = (mid * store.tensor(ls.ffn_in)).rowwise() + store.tensor(ls.ffn_in_bias).row(0);
    Matrix ffn_act = ffn_pre.unaryExpr([](double z) { return gelu(z); });
    Matrix ffn = (ffn_act * store.tensor(ls.ffn_out)).rowwise() + store.tensor(ls.ffn_out_bias).row(0);
    Matrix ffn_drop;
    if (dropout.enabled()) {
      ffn_drop = dropout.mask(ffn.rows(), ffn.cols());
      ffn.array() *= ffn_drop.array();
    }
    Matrix out;
    LayerNormCache ln2;
    layer_norm(mid + ffn, store.tensor(ls.ln2_gain), store.tensor(ls.ln2_bias), out,
               cache ? &ln2 : nullptr);

    if (cache) {
      lc.input = std::move(x);
      lc.q = std::move(q);
      lc.k = std::move(k);
      lc.v = std::move(v);
      lc.context = std::move(context);
      lc.attn_dropout = std::move(attn_drop);
      lc.ln1 = std::move(ln1);
      lc.mid = std::move(mid);
      lc.ffn_pre = std::move(ffn_pre);
      lc.ffn_act = std::move(ffn_act);
      lc.ffn_dropout = std::move(ffn_drop);
      lc.ln2 = std::move(ln2);
      cache->layers.push_back(std::move(lc));
    }
    x = std::move(out);
  }
  if (cache) cache->output = x;
  return x;
}

void encoder_backward(const ModelParameters& params, const EncoderCache& cache,
                      const Matrix& grad_output, Gradients& grads) {
  const auto& cfg = params.config();
  const auto& slots = params.slots();
  const auto& store = params.store();
  const std::size_t h = cfg.hidden_dim;
  const std::size_t heads = cfg.num_heads;
  const std::size_t d = h / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const Eigen::Index valid = idx(cache.valid_len);

  Matrix dx = grad_output;
  for (std::size_t l = cfg.num_layers; l-- > 0;) {
    const auto& ls = slots.layers[l];
    const auto& lc = cache.layers[l];

    Matrix dmid = layer_norm_backward(dx, lc.ln2, store.tensor(ls.ln2_gain),
                                      grads.tensor(ls.ln2_gain), grads.tensor(ls.ln2_bias));
    Matrix dffn = dmid;
    if (lc.ffn_dropout.size() > 0) dffn.array() *= lc.ffn_dropout.array();
    grads.tensor(ls.ffn_out).noalias() += lc.ffn_act.transpose() * dffn;
    grads.tensor(ls.ffn_out_bias).row(0) += dffn.colwise().sum();
    Matrix dact = dffn * store.tensor(ls.ffn_out).transpose();
    Matrix dpre = dact.array() * lc.ffn_pre.unaryExpr([](double z) { return gelu_grad(z); }).array();
    grads.tensor(ls.ffn_in).noalias() += lc.mid.transpose() * dpre;
    grads.tensor(ls.ffn_in_bias).row(0) += dpre.colwise().sum();
    dmid.noalias() += dpre * store.tensor(ls.ffn_in).transpose();

    Matrix dres = layer_norm_backward(dmid, lc.ln1, store.tensor(ls.ln1_gain),
                                      grads.tensor(ls.ln1_gain), grads.tensor(ls.ln1_bias));
    Matrix dattn = dres;
    if (lc.attn_dropout.size() > 0) dattn.array() *= lc.attn_dropout.array();
    grads.tensor(ls.wo).noalias() += lc.context.transpose() * dattn;
    grads.tensor(ls.bo).row(0) += dattn.colwise().sum();
    const Matrix dcontext = dattn * store.tensor(ls.wo).transpose();

    Matrix dq = Matrix::Zero(lc.q.rows(), lc.q.cols());
    Matrix dk = Matrix::Zero(lc.k.rows(), lc.k.cols());
    Matrix dv = Matrix::Zero(lc.v.rows(), lc.v.cols());
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const Eigen::Index c0 = idx(hd * d);
      const Eigen::Index dw = idx(d);
      const Matrix& p = lc.probs[hd];
      const auto dctx = dcontext.middleCols(c0, dw);
      dv.block(0, c0, valid, dw).noalias() += p.transpose() * dctx;
      Matrix dp = dctx * lc.v.block(0, c0, valid, dw).transpose();
      const Vector row_dot = (dp.array() * p.array()).rowwise().sum();
      Matrix ds = p.array() * (dp.colwise() - row_dot).array();
      ds *= scale;
      dq.middleCols(c0, dw).noalias() += ds * lc.k.block(0, c0, valid, dw);
      dk.block(0, c0, valid, dw).noalias() += ds.transpose() * lc.q.middleCols(c0, dw);
    }
    grads.tensor(ls.wq).noalias() += lc.input.transpose() * dq;
    grads.tensor(ls.bq).row(0) += dq.colwise().sum();
    grads.tensor(ls.wk).noalias() += lc.input.transpose() * dk;
    grads.tensor(ls.bk).row(0) += dk.colwise().sum();
    grads.tensor(ls.wv).noalias() += lc.input.transpose() * dv;
    grads.tensor(ls.bv).row(0) += dv.colwise().sum();

    dx = dres;
    dx.noalias() += dq * store.tensor(ls.wq).transpose();
    dx.noalias() += dk * store.tensor(ls.wk).transpose();
    dx.noalias() += dv * store.tensor(ls.wv).transpose();
  }

  if (cache.emb_dropout.size() > 0) dx.array() *= cache.emb_dropout.array();
  const Matrix demb = layer_norm_backward(dx, cache.emb_ln, store.tensor(slots.emb_ln_gain),
                                          grads.tensor(slots.emb_ln_gain),
                                          grads.tensor(slots.emb_ln_bias));
  auto gtok = grads.tensor(slots.token_emb);
  auto gpos = grads.tensor(slots.position_emb);
  auto gseg = grads.tensor(slots.segment_emb);
  for (std::size_t i = 0; i < cache.ids.size(); ++i) {
    gtok.row(cache.ids[i]) += demb.row(idx(i));
    gpos.row(idx(i)) += demb.row(idx(i));
    gseg.row(cache.segments[i]) += demb.row(idx(i));
  }
}

// ---------------------------------------------------------------------------
// Masking, pooling, head

Matrix apply_context_mask(const Matrix& hidden, const std::vector<std::uint8_t>& mask) {
  if (mask.size() != static_cast<std::size_t>(hidden.rows())) {
    throw InputError("context mask length " + std::to_string(mask.size()) +
                     " does not match " + std::to_string(hidden.rows()) + " rows");
  }
  Matrix out = hidden;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 0) out.row(idx(i)).setZero();
  }
  return out;
}

Vector pool_local(const Matrix& masked_hidden, const std::vector<std::uint8_t>& mask,
                  const Vector& cls_row) {
  Vector sum = Vector::Zero(masked_hidden.cols());
  std::size_t count = 0;
  const std::size_t rows = std::min(mask.size(), static_cast<std::size_t>(masked_hidden.rows()));
  for (std::size_t i = 0; i < rows; ++i) {
    if (mask[i] != 0) {
      sum += masked_hidden.row(idx(i)).transpose();
      ++count;
    }
  }
  if (count == 0) return cls_row;
  return sum / static_cast<double>(count);
}

Vector pool_global(const Matrix& hidden) {
  if (hidden.rows() == 0) throw InputError("cannot pool an empty sequence");
  return hidden.row(0).transpose();
}

Vector head_input(const Vector& local_vec, const Vector& global_vec, Variant variant) {
  switch (variant) {
    case Variant::kGlobalOnly: return global_vec;
    case Variant::kLocalOnly: return local_vec;
    default: {
      Vector v(local_vec.size() + global_vec.size());
      v << local_vec, global_vec;
      return v;
    }
  }
}

Classification classify(const Vector& input, const ModelParameters& params) {
  const auto& cfg = params.config();
  const auto w = params.store().tensor(params.slots().head_weight);
  const auto b = params.store().tensor(params.slots().head_bias);
  if (input.size() != w.rows()) throw InputError("head input width does not match the head weight");
  Classification out;
  out.logits = w.transpose() * input + b.row(0).transpose();
  check_finite(out.logits, "logits");
  if (cfg.task_mode == TaskMode::kSingleLabel) {
    const double mx = out.logits.maxCoeff();
    out.probabilities = (out.logits.array() - mx).exp();
    out.probabilities /= out.probabilities.sum();
  } else {
    out.probabilities = out.logits.unaryExpr([](double z) {
      return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    });
  }
  return out;
}

ForwardResult forward(const ModelParameters& params, const EncodedPair& pair, bool train,
                      std::uint64_t dropout_seed, ForwardCache* cache) {
  const auto& cfg = params.config();
  const double rate = train ? cfg.dropout_rate : 0.0;
  ForwardResult result;

  if (cfg.variant != Variant::kGlobalOnly) {
    if (pair.aspect_mask.size() != pair.local_ids.size()) {
      throw InputError("aspect mask must align with local ids");
    }
    DropoutSource drop(rate, derive_seed(dropout_seed, 1));
    const std::vector<std::uint8_t> segs(pair.local_ids.size(), 0);
    Matrix hidden = encoder_forward(params, pair.local_ids, segs, pair.local_len, drop,
                                    cache ? &cache->local : nullptr);
    std::vector<std::uint8_t> mask = pair.aspect_mask;
    for (std::size_t i = pair.local_len; i < mask.size(); ++i) mask[i] = 0;
    const Matrix masked = apply_context_mask(hidden, mask);
    result.local_vec = pool_local(masked, mask, pool_global(hidden));
    if (cache) {
      cache->masked_rows = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
      cache->local_hidden = std::move(hidden);
    }
  }
  if (cfg.variant != Variant::kLocalOnly) {
    DropoutSource drop(rate, derive_seed(dropout_seed, 2));
    Matrix hidden = encoder_forward(params, pair.global_ids, pair.segment_ids, pair.global_len, drop,
                                    cache ? &cache->global : nullptr);
    result.global_vec = pool_global(hidden);
  }

  Vector in = head_input(result.local_vec, result.global_vec, cfg.variant);
  Matrix head_drop;
  if (rate > 0.0) {
    DropoutSource drop(rate, derive_seed(dropout_seed, 3));
    head_drop = drop.mask(in.size(), 1);
    in.array() *= head_drop.col(0).array();
  }
  result.output = classify(in, params);
  if (cache) {
    cache->head_in = std::move(in);
    cache->head_dropout = std::move(head_drop);
  }
  return result;
}

void backward(const ModelParameters& params, const EncodedPair& pair, const ForwardCache& cache,
              const Vector& grad_logits, double scale, Gradients& grads) {
  const auto& cfg = params.config();
  const auto& slots = params.slots();
  const Vector g = grad_logits * scale;

  grads.tensor(slots.head_weight).noalias() += cache.head_in * g.transpose();
  grads.tensor(slots.head_bias).row(0) += g.transpose();
  Vector dinput = params.store().tensor(slots.head_weight) * g;
  if (cache.head_dropout.size() > 0) dinput.array() *= cache.head_dropout.col(0).array();

  const Eigen::Index h = idx(cfg.hidden_dim);
  Vector dlocal, dglobal;
  switch (cfg.variant) {
    case Variant::kFull:
      dlocal = dinput.head(h);
      dglobal = dinput.tail(h);
      break;
    case Variant::kGlobalOnly: dglobal = dinput; break;
    case Variant::kLocalOnly: dlocal = dinput; break;
  }

  if (dlocal.size() > 0) {
    Matrix dhidden = Matrix::Zero(cache.local_hidden.rows(), cache.local_hidden.cols());
    if (cache.masked_rows > 0) {
      const Vector share = dlocal / static_cast<double>(cache.masked_rows);
      for (std::size_t i = 0; i < pair.local_len; ++i) {
        if (pair.aspect_mask[i] != 0) dhidden.row(idx(i)) = share.transpose();
      }
    } else {
      dhidden.row(0) = dlocal.transpose();
    }
    encoder_backward(params, cache.local, dhidden, grads);
  }
  if (dglobal.size() > 0) {
    Matrix dhidden = Matrix::Zero(cache.global.output.rows(), cache.global.output.cols());
    dhidden.row(0) = dglobal.transpose();
    encoder_backward(params, cache.global, dhidden, grads);
  }
}

}  // namespace medqc
