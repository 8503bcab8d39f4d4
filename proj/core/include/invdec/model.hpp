#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "invdec/ad_ops.hpp"
#include "invdec/autodiff.hpp"
#include "invdec/rng.hpp"
#include "invdec/tensor.hpp"

namespace invdec::model {

enum class LambdaMode { kFixed, kLearnable };

/// Architecture hyperparameters. Field names follow their roles; see
/// docs/architecture.md for the mapping to the usual symbols.
struct ModelConfig {
  std::size_t lookback = 96;    ///< L
  std::size_t horizon = 96;     ///< H
  std::size_t variates = 7;     ///< C
  std::size_t patch_len = 16;   ///< S
  std::size_t stride = 16;      ///< s
  std::size_t d_model = 64;     ///< D
  std::size_t heads = 4;        ///< encoder heads
  std::size_t dec_heads = 4;    ///< decoder (variate attention) heads
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  LambdaMode lambda_mode = LambdaMode::kFixed;
  double lambda = 0.3;          ///< fusion weight when fixed
  double lambda_init = 0.5;     ///< starting value when learnable
  double dropout = 0.1;
  std::size_t ffn_dim = 0;      ///< 0 selects 4·D
  /// Encoder attends over the P patches of each variable separately. When
  /// false, all C·P patch tokens of a sample attend to each other.
  bool channel_independent_encoder = true;

  /// P = ⌊(L − S)/s⌋ + 1.
  std::size_t patches() const;
  std::size_t ffn() const { return ffn_dim == 0 ? 4 * d_model : ffn_dim; }
  /// True when the decoder branch is compiled out of the forward pass.
  bool decoder_disabled() const { return lambda_mode == LambdaMode::kFixed && lambda == 0.0; }
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

struct PatchEmbedder {
  ParamId weight;      ///< [D×S]
  ParamId bias;        ///< [D]
  ParamId positional;  ///< [P×D], shared across variables
};

/// One post-norm transformer block; used by both stacks.
struct AttentionLayerParams {
  ParamId w_q, w_k, w_v;  ///< [D×D], applied as x·W
  ParamId w_o;            ///< [D×D] output projection after head concat
  ParamId ffn_w1;         ///< [D×ffn]
  ParamId ffn_b1;         ///< [ffn]
  ParamId ffn_w2;         ///< [ffn×D]
  ParamId ffn_b2;         ///< [D]
  ParamId ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};
using EncoderLayerParams = AttentionLayerParams;
using DecoderLayerParams = AttentionLayerParams;

struct VariateEmbedding {
  ParamId table;  ///< [C×D]
};

struct FusionHead {
  ParamId w_proj;                     ///< [D×D]
  std::optional<ParamId> lambda_raw;  ///< [1], λ = sigmoid(raw) when learnable
  ParamId w_head;                     ///< [(D·P)×H]
  ParamId b_head;                     ///< [H]
};

/// The complete parameter set plus handles into it. Copyable by value.
struct ModelParams {
  ParameterStore store;
  PatchEmbedder patch;
  std::vector<EncoderLayerParams> encoder;
  VariateEmbedding variate;
  std::vector<DecoderLayerParams> decoder;
  FusionHead head;

  Parameter& operator[](ParamId id) { return store[id]; }
  const Parameter& operator[](ParamId id) const { return store[id]; }
};

/// Initialization: projections, positional table and variate embeddings from
/// N(0, 0.02²); biases 0; layer-norm gain 1, bias 0. Each group draws from
/// its own named stream ("init.patch", "init.encoder", ...).
ModelParams init_params(const ModelConfig& cfg, RngStreams& rng);

/// Parameter group of a parameter name: "patch", "encoder", "variate",
/// "decoder", "projection", "lambda", "head".
std::string param_group(const std::string& name);

struct ForwardOptions {
  bool training = false;
  /// Dropout streams ("dropout.encoder", "dropout.decoder"); required when
  /// training with a nonzero rate.
  RngStreams* rng = nullptr;
  bool record_trace = true;
};

/// Recorded intermediates. Shapes below are for a single sample; batched
/// forwards prepend B. When the decoder is disabled (λ = 0 fixed),
/// `decoder_ran` is false, the decoder-side tensors hold zeros and
/// z_fused equals z_enc.
struct ForwardTrace {
  Tensor embeddings;  ///< E       [C×P×D]
  Tensor z_enc;       ///< Z_enc   [C×P×D]
  Tensor pooled;      ///< G       [C×D]
  Tensor pooled_emb;  ///< G + E_var [C×D]
  Tensor h_out;       ///< H_out   [C×D]
  Tensor z_tilde;     ///< broadcast H_out [C×P×D]
  Tensor z_fused;     ///< Z_fused [C×P×D]
  Tensor z_flat;      ///< [C×(P·D)], patch-major
  std::vector<Tensor> encoder_attention;  ///< per layer [groups×heads×T×T]
  std::vector<Tensor> decoder_attention;  ///< per layer [B×heads×C×C]
  double lambda = 0.0;
  bool decoder_ran = false;
};

/// x[L×C] → [C×P×S]; x[B×L×C] → [B×C×P×S]. Trailing steps that do not
/// fill a patch are dropped. Throws ConfigError when S > L.
Tensor patchify(const Tensor& x, std::size_t patch_len, std::size_t stride);
Tensor patchify(const Tensor& x, const ModelConfig& cfg);

/// patches[..., P, S] → [..., P, D]: W_p·p + b_p + positional[i].
Var embed_patches(const Var& patches, ModelParams& params);

struct StackResult {
  Var output;
  std::vector<Tensor> attention;
};

/// One post-norm block over x[G×T×D]:
///   x = LN(x + Dropout(MHA(x)·W_O));  x = LN(x + FFN(x)).
StackResult attention_block(const Var& x, const AttentionLayerParams& layer, ModelParams& params,
                            std::size_t heads, double dropout, const ForwardOptions& opts,
                            const char* dropout_stream);

/// E[..., C, P, D] → Z_enc of the same shape.
StackResult encode_temporal(const Var& embeddings, ModelParams& params, const ModelConfig& cfg,
                            const ForwardOptions& opts);

/// Z_enc[..., P, D] → G[..., D] (mean over patches).
Var pool_variates(const Var& z_enc);

struct DecodeResult {
  Var pooled_emb;  ///< G + E_var
  Var h_out;       ///< H^(L_dec)·W_proj
  std::vector<Tensor> attention;
};

/// G[..., C, D] → H_out[..., C, D]. Throws ConfigError when C differs from
/// the variate-embedding rows.
DecodeResult decode_variates(const Var& pooled, ModelParams& params, const ModelConfig& cfg,
                             const ForwardOptions& opts);

/// Z_enc + λ·broadcast(H_out) along the patch axis.
Var broadcast_fuse(const Var& z_enc, const Var& h_out, double lambda);
Var broadcast_fuse(const Var& z_enc, const Var& h_out, const Var& lambda);

/// Z_fused[..., C, P, D] → [..., C, H]; flattening is patch-major
/// (feature index d of patch i lands at i·D + d).
Var predict(const Var& z_fused, ModelParams& params);

struct ForwardOutput {
  Var prediction;  ///< [H×C] or [B×H×C]
  ForwardTrace trace;
};

/// Full pipeline on x[L×C] or x[B×L×C].
ForwardOutput forward(Tape& tape, const Tensor& x, ModelParams& params, const ModelConfig& cfg,
                      const ForwardOptions& opts = {});

/// The decoder-free patch-transformer backbone:
/// patchify → embed → encode → predict.
Var forward_backbone(Tape& tape, const Tensor& x, ModelParams& params, const ModelConfig& cfg,
                     const ForwardOptions& opts = {});

/// Convenience: eval-mode prediction as a plain tensor.
Tensor predict_tensor(const Tensor& x, ModelParams& params, const ModelConfig& cfg);

/// Current fusion weight (sigmoid of the raw parameter when learnable).
double current_lambda(const ModelParams& params, const ModelConfig& cfg);

}  // namespace invdec::model
