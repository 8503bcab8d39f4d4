#include "invdec/model.hpp"

#include <cmath>
#include <random>

#include "invdec/error.hpp"

namespace invdec::model {
namespace {

constexpr double kInitStd = 0.02;

Tensor normal_tensor(Shape shape, RngStreams::Engine& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, kInitStd);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

AttentionLayerParams add_layer(ParameterStore& store, const std::string& prefix, std::size_t d,
                               std::size_t ffn, RngStreams::Engine& rng) {
  AttentionLayerParams l;
  l.w_q = store.add(prefix + ".W_Q", normal_tensor({d, d}, rng));
  l.w_k = store.add(prefix + ".W_K", normal_tensor({d, d}, rng));
  l.w_v = store.add(prefix + ".W_V", normal_tensor({d, d}, rng));
  l.w_o = store.add(prefix + ".W_O", normal_tensor({d, d}, rng));
  l.ffn_w1 = store.add(prefix + ".ffn.W1", normal_tensor({d, ffn}, rng));
  l.ffn_b1 = store.add(prefix + ".ffn.b1", Tensor({ffn}));
  l.ffn_w2 = store.add(prefix + ".ffn.W2", normal_tensor({ffn, d}, rng));
  l.ffn_b2 = store.add(prefix + ".ffn.b2", Tensor({d}));
  l.ln1_gain = store.add(prefix + ".ln1.gain", Tensor({d}, 1.0));
  l.ln1_bias = store.add(prefix + ".ln1.bias", Tensor({d}));
  l.ln2_gain = store.add(prefix + ".ln2.gain", Tensor({d}, 1.0));
  l.ln2_bias = store.add(prefix + ".ln2.bias", Tensor({d}));
  return l;
}

Var bind(Tape& tape, ModelParams& params, ParamId id) { return tape.param(params[id]); }

}  // namespace

std::size_t ModelConfig::patches() const {
  if (patch_len == 0 || stride == 0 || patch_len > lookback) return 0;
  return (lookback - patch_len) / stride + 1;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (lookback == 0) fail("lookback L must be positive");
  if (horizon == 0) fail("horizon H must be positive");
  if (variates == 0) fail("variate count C must be positive");
  if (patch_len == 0) fail("patch length S must be positive");
  if (stride == 0) fail("stride s must be positive");
  if (patch_len > lookback) {
    fail("patch length S=" + std::to_string(patch_len) + " exceeds lookback L=" +
         std::to_string(lookback));
  }
  if (d_model == 0) fail("d_model D must be positive");
  if (heads == 0 || d_model % heads != 0) {
    fail("d_model D=" + std::to_string(d_model) + " must be divisible by heads=" +
         std::to_string(heads));
  }
  if (dec_heads == 0 || d_model % dec_heads != 0) {
    fail("d_model D=" + std::to_string(d_model) + " must be divisible by dec_heads=" +
         std::to_string(dec_heads));
  }
  if (lambda_mode == LambdaMode::kFixed && !(lambda >= 0.0 && lambda <= 1.0)) {
    fail("lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (lambda_mode == LambdaMode::kLearnable && !(lambda_init > 0.0 && lambda_init < 1.0)) {
    fail("lambda_init must lie in (0, 1) for a learnable lambda");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

ModelParams init_params(const ModelConfig& cfg, RngStreams& rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model, s = cfg.patch_len, p = cfg.patches();
  ModelParams m;
  auto& store = m.store;

  auto& patch_rng = rng.stream("init.patch");
  m.patch.weight = store.add("patch.W_p", normal_tensor({d, s}, patch_rng));
  m.patch.bias = store.add("patch.b_p", Tensor({d}));
  m.patch.positional = store.add("patch.pos", normal_tensor({p, d}, patch_rng));

  auto& enc_rng = rng.stream("init.encoder");
  for (std::size_t l = 0; l < cfg.enc_layers; ++l) {
    m.encoder.push_back(add_layer(store, "encoder." + std::to_string(l), d, cfg.ffn(), enc_rng));
  }

  auto& var_rng = rng.stream("init.var_embed");
  m.variate.table = store.add("var_embed.E_var", normal_tensor({cfg.variates, d}, var_rng));

  auto& dec_rng = rng.stream("init.decoder");
  for (std::size_t l = 0; l < cfg.dec_layers; ++l) {
    m.decoder.push_back(add_layer(store, "decoder." + std::to_string(l), d, cfg.ffn(), dec_rng));
  }

  auto& fusion_rng = rng.stream("init.fusion");
  m.head.w_proj = store.add("fusion.W_proj", normal_tensor({d, d}, fusion_rng));
  if (cfg.lambda_mode == LambdaMode::kLearnable) {
    const double raw = std::log(cfg.lambda_init / (1.0 - cfg.lambda_init));
    m.head.lambda_raw = store.add("fusion.lambda_raw", Tensor::scalar(raw));
  }

  auto& head_rng = rng.stream("init.head");
  m.head.w_head = store.add("head.W_head", normal_tensor({d * p, cfg.horizon}, head_rng));
  m.head.b_head = store.add("head.b_head", Tensor({cfg.horizon}));
  return m;
}

std::string param_group(const std::string& name) {
  const auto starts = [&](const char* prefix) { return name.rfind(prefix, 0) == 0; };
  if (starts("patch.")) return "patch";
  if (starts("encoder.")) return "encoder";
  if (starts("var_embed.")) return "variate";
  if (starts("decoder.")) return "decoder";
  if (starts("fusion.W_proj")) return "projection";
  if (starts("fusion.lambda")) return "lambda";
  if (starts("head.")) return "head";
  return "other";
}

Tensor patchify(const Tensor& x, std::size_t patch_len, std::size_t stride) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw DimensionError("patchify expects [L×C] or [B×L×C], got " + shape_str(x.shape()));
  }
  const bool batched = x.rank() == 3;
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t lookback = x.dim(x.rank() - 2), vars = x.dim(x.rank() - 1);
  if (patch_len == 0 || stride == 0) throw ConfigError("patchify: S and s must be positive");
  if (patch_len > lookback) {
    throw ConfigError("patchify: patch length S=" + std::to_string(patch_len) +
                      " exceeds lookback L=" + std::to_string(lookback));
  }
  const std::size_t p = (lookback - patch_len) / stride + 1;
  Shape shape = batched ? Shape{batch, vars, p, patch_len} : Shape{vars, p, patch_len};
  Tensor out(shape);
  double* dst = out.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = x.data().data() + b * lookback * vars;
    for (std::size_t c = 0; c < vars; ++c)
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < patch_len; ++j) *dst++ = src[(i * stride + j) * vars + c];
  }
  return out;
}

Tensor patchify(const Tensor& x, const ModelConfig& cfg) {
  return patchify(x, cfg.patch_len, cfg.stride);
}

Var embed_patches(const Var& patches, ModelParams& params) {
  Tape& tape = patches.tape();
  Var e = ad::linear_t(patches, bind(tape, params, params.patch.weight));
  e = ad::add_trailing(e, bind(tape, params, params.patch.bias));
  return ad::add_trailing(e, bind(tape, params, params.patch.positional));
}

StackResult attention_block(const Var& x, const AttentionLayerParams& layer, ModelParams& params,
                            std::size_t heads, double dropout, const ForwardOptions& opts,
                            const char* dropout_stream) {
  Tape& tape = x.tape();
  Var q = ad::linear(x, bind(tape, params, layer.w_q));
  Var k = ad::linear(x, bind(tape, params, layer.w_k));
  Var v = ad::linear(x, bind(tape, params, layer.w_v));
  ad::AttentionResult attn = ad::attention(q, k, v, heads);
  Var a = ad::linear(attn.output, bind(tape, params, layer.w_o));
  if (opts.training && dropout > 0.0) {
    if (opts.rng == nullptr) throw UsageError("training-mode forward requires rng streams");
    a = ad::dropout(a, dropout, true, opts.rng->stream(dropout_stream));
  }
  Var h = ad::layer_norm(ad::add(x, a), bind(tape, params, layer.ln1_gain),
                         bind(tape, params, layer.ln1_bias));
  Var f = ad::linear(h, bind(tape, params, layer.ffn_w1));
  f = ad::gelu(ad::add_trailing(f, bind(tape, params, layer.ffn_b1)));
  f = ad::linear(f, bind(tape, params, layer.ffn_w2));
  f = ad::add_trailing(f, bind(tape, params, layer.ffn_b2));
  Var out = ad::layer_norm(ad::add(h, f), bind(tape, params, layer.ln2_gain),
                           bind(tape, params, layer.ln2_bias));
  StackResult r{out, {}};
  r.attention.push_back(std::move(attn.weights));
  return r;
}

StackResult encode_temporal(const Var& embeddings, ModelParams& params, const ModelConfig& cfg,
                            const ForwardOptions& opts) {
  const Shape shape = embeddings.shape();
  if (shape.size() < 3) {
    throw DimensionError("encode_temporal expects [..., C, P, D], got " + shape_str(shape));
  }
  const std::size_t d = shape.back(), p = shape[shape.size() - 2], c = shape[shape.size() - 3];
  const std::size_t lead = embeddings.value().numel() / (c * p * d);
  Var z = cfg.channel_independent_encoder ? ad::reshape(embeddings, {lead * c, p, d})
                                          : ad::reshape(embeddings, {lead, c * p, d});
  StackResult result{z, {}};
  for (const auto& layer : params.encoder) {
    StackResult block =
        attention_block(result.output, layer, params, cfg.heads, cfg.dropout, opts, "dropout.encoder");
    result.output = block.output;
    if (opts.record_trace) result.attention.push_back(std::move(block.attention.front()));
  }
  result.output = ad::reshape(result.output, shape);
  return result;
}

Var pool_variates(const Var& z_enc) { return ad::mean_over_tokens(z_enc); }

DecodeResult decode_variates(const Var& pooled, ModelParams& params, const ModelConfig& cfg,
                             const ForwardOptions& opts) {
  Tape& tape = pooled.tape();
  const Shape shape = pooled.shape();
  if (shape.size() < 2) {
    throw DimensionError("decode_variates expects [..., C, D], got " + shape_str(shape));
  }
  const std::size_t c = shape[shape.size() - 2], d = shape.back();
  const Tensor& table = params[params.variate.table].value;
  if (table.dim(0) != c || table.dim(1) != d) {
    throw ConfigError("decode_variates: pooled input has C=" + std::to_string(c) +
                      " but the variate embedding table is " + shape_str(table.shape()));
  }
  const std::size_t lead = pooled.value().numel() / (c * d);
  DecodeResult r;
  r.pooled_emb = ad::add_trailing(pooled, bind(tape, params, params.variate.table));
  Var h = ad::reshape(r.pooled_emb, {lead, c, d});
  for (const auto& layer : params.decoder) {
    StackResult block =
        attention_block(h, layer, params, cfg.dec_heads, cfg.dropout, opts, "dropout.decoder");
    h = block.output;
    if (opts.record_trace) r.attention.push_back(std::move(block.attention.front()));
  }
  h = ad::reshape(h, shape);
  r.h_out = ad::linear(h, bind(tape, params, params.head.w_proj));
  return r;
}

namespace {

void check_fuse_shapes(const Var& z_enc, const Var& h_out) {
  const Shape& zs = z_enc.shape();
  const Shape& hs = h_out.shape();
  bool ok = zs.size() >= 3 && hs.size() == zs.size() - 1 && hs.back() == zs.back();
  for (std::size_t i = 0; ok && i + 2 < zs.size(); ++i) ok = zs[i] == hs[i];
  if (!ok) {
    throw DimensionError("broadcast_fuse: Z_enc " + shape_str(zs) + " incompatible with H_out " +
                         shape_str(hs));
  }
}

}  // namespace

Var broadcast_fuse(const Var& z_enc, const Var& h_out, double lambda) {
  check_fuse_shapes(z_enc, h_out);
  const std::size_t p = z_enc.shape()[z_enc.shape().size() - 2];
  return ad::add(z_enc, ad::scale(ad::repeat_tokens(h_out, p), lambda));
}

Var broadcast_fuse(const Var& z_enc, const Var& h_out, const Var& lambda) {
  check_fuse_shapes(z_enc, h_out);
  const std::size_t p = z_enc.shape()[z_enc.shape().size() - 2];
  return ad::add(z_enc, ad::mul_scalar(ad::repeat_tokens(h_out, p), lambda));
}

Var predict(const Var& z_fused, ModelParams& params) {
  Tape& tape = z_fused.tape();
  const Shape& s = z_fused.shape();
  if (s.size() < 3) throw DimensionError("predict expects [..., C, P, D], got " + shape_str(s));
  Shape flat(s.begin(), s.end() - 2);
  flat.push_back(s[s.size() - 2] * s.back());
  const Tensor& w = params[params.head.w_head].value;
  if (w.dim(0) != flat.back()) {
    throw DimensionError("predict: flattened width D·P=" + std::to_string(flat.back()) +
                         " does not match W_head " + shape_str(w.shape()));
  }
  Var z = ad::reshape(z_fused, flat);
  Var y = ad::linear(z, bind(tape, params, params.head.w_head));
  return ad::add_trailing(y, bind(tape, params, params.head.b_head));
}

double current_lambda(const ModelParams& params, const ModelConfig& cfg) {
  if (cfg.lambda_mode == LambdaMode::kFixed) return cfg.lambda;
  const double raw = params[*params.head.lambda_raw].value[0];
  return 1.0 / (1.0 + std::exp(-raw));
}

namespace {

void check_input(const Tensor& x, const ModelConfig& cfg) {
  const bool ok = (x.rank() == 2 || x.rank() == 3) && x.dim(x.rank() - 2) == cfg.lookback &&
                  x.dim(x.rank() - 1) == cfg.variates;
  if (!ok) {
    throw DimensionError("model input " + shape_str(x.shape()) + " does not match L=" +
                         std::to_string(cfg.lookback) + ", C=" + std::to_string(cfg.variates));
  }
}

Tensor zeros_like_shape(Shape shape) { return Tensor(std::move(shape)); }

}  // namespace

ForwardOutput forward(Tape& tape, const Tensor& x, ModelParams& params, const ModelConfig& cfg,
                      const ForwardOptions& opts) {
  check_input(x, cfg);
  ForwardOutput out;
  ForwardTrace& tr = out.trace;

  Var patches = tape.constant(patchify(x, cfg));
  Var e = embed_patches(patches, params);
  StackResult enc = encode_temporal(e, params, cfg, opts);
  Var z_enc = enc.output;

  Var z_fused = z_enc;
  if (!cfg.decoder_disabled()) {
    Var g = pool_variates(z_enc);
    DecodeResult dec = decode_variates(g, params, cfg, opts);
    if (cfg.lambda_mode == LambdaMode::kLearnable) {
      Var lam = ad::sigmoid(tape.param(params[*params.head.lambda_raw]));
      z_fused = broadcast_fuse(z_enc, dec.h_out, lam);
      tr.lambda = lam.value()[0];
    } else {
      z_fused = broadcast_fuse(z_enc, dec.h_out, cfg.lambda);
      tr.lambda = cfg.lambda;
    }
    tr.decoder_ran = true;
    if (opts.record_trace) {
      tr.pooled = g.value();
      tr.pooled_emb = dec.pooled_emb.value();
      tr.h_out = dec.h_out.value();
      tr.z_tilde = ad::repeat_tokens(dec.h_out, z_enc.shape()[z_enc.shape().size() - 2]).value();
      tr.decoder_attention = std::move(dec.attention);
    }
  }

  Var y = predict(z_fused, params);
  out.prediction = ad::transpose_last2(y);

  if (opts.record_trace) {
    tr.embeddings = e.value();
    tr.z_enc = z_enc.value();
    tr.z_fused = z_fused.value();
    Shape flat(z_fused.shape().begin(), z_fused.shape().end() - 2);
    flat.push_back(z_fused.shape()[z_fused.shape().size() - 2] * z_fused.shape().back());
    tr.z_flat = z_fused.value().reshaped(flat);
    tr.encoder_attention = std::move(enc.attention);
    if (!tr.decoder_ran) {
      Shape cd(z_enc.shape().begin(), z_enc.shape().end() - 2);
      cd.push_back(z_enc.shape().back());
      // Pooling is recomputed off-tape so the backbone path stays untouched.
      Tape scratch;
      tr.pooled = pool_variates(scratch.constant(z_enc.value())).value();
      tr.pooled_emb = zeros_like_shape(cd);
      tr.h_out = zeros_like_shape(cd);
      tr.z_tilde = zeros_like_shape(z_enc.shape());
    }
  }
  return out;
}

Var forward_backbone(Tape& tape, const Tensor& x, ModelParams& params, const ModelConfig& cfg,
                     const ForwardOptions& opts) {
  check_input(x, cfg);
  Var patches = tape.constant(patchify(x, cfg));
  Var z_enc = encode_temporal(embed_patches(patches, params), params, cfg, opts).output;
  return ad::transpose_last2(predict(z_enc, params));
}

Tensor predict_tensor(const Tensor& x, ModelParams& params, const ModelConfig& cfg) {
  Tape tape;
  ForwardOptions opts;
  opts.record_trace = false;
  return forward(tape, x, params, cfg, opts).prediction.value();
}

}  // namespace invdec::model
