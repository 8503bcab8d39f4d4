#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

using invdec::Tensor;
using invdec::model::ModelParams;

Mat to_mat(const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("to_mat needs rank 2");
  Mat m(t.dim(0), Vec(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.values()[i * t.dim(1) + j];
  return m;
}

Vec to_vec(const Tensor& t) { return t.values(); }

Tensor from_mat(const Mat& m) {
  std::vector<double> flat;
  for (const auto& row : m) flat.insert(flat.end(), row.begin(), row.end());
  return Tensor({m.size(), m.front().size()}, flat);
}

Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), Vec(b.front().size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.front().size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
      out[i][j] = s;
    }
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

Vec layer_norm(const Vec& row, const Vec& gain, const Vec& bias, double eps) {
  double mean = 0.0;
  for (double v : row) mean += v;
  mean /= static_cast<double>(row.size());
  double var = 0.0;
  for (double v : row) var += (v - mean) * (v - mean);
  var /= static_cast<double>(row.size());
  Vec out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = (row[i] - mean) / std::sqrt(var + eps) * gain[i] + bias[i];
  }
  return out;
}

LayerWeights layer_weights(const ModelParams& p, const invdec::model::AttentionLayerParams& l) {
  LayerWeights w;
  w.wq = to_mat(p[l.w_q].value);
  w.wk = to_mat(p[l.w_k].value);
  w.wv = to_mat(p[l.w_v].value);
  w.wo = to_mat(p[l.w_o].value);
  w.w1 = to_mat(p[l.ffn_w1].value);
  w.w2 = to_mat(p[l.ffn_w2].value);
  w.b1 = to_vec(p[l.ffn_b1].value);
  w.b2 = to_vec(p[l.ffn_b2].value);
  w.g1 = to_vec(p[l.ln1_gain].value);
  w.be1 = to_vec(p[l.ln1_bias].value);
  w.g2 = to_vec(p[l.ln2_gain].value);
  w.be2 = to_vec(p[l.ln2_bias].value);
  return w;
}

Mat attention_probs(const Mat& x, const LayerWeights& w, std::size_t heads, std::size_t head) {
  const Mat q = matmul(x, w.wq), k = matmul(x, w.wk);
  const std::size_t t = x.size(), dk = x.front().size() / heads, off = head * dk;
  Mat probs(t, Vec(t));
  for (std::size_t i = 0; i < t; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < t; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < dk; ++d) s += q[i][off + d] * k[j][off + d];
      probs[i][j] = s / std::sqrt(static_cast<double>(dk));
      mx = std::max(mx, probs[i][j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < t; ++j) z += std::exp(probs[i][j] - mx);
    for (std::size_t j = 0; j < t; ++j) probs[i][j] = std::exp(probs[i][j] - mx) / z;
  }
  return probs;
}

Mat block(const Mat& x, const LayerWeights& w, std::size_t heads) {
  const std::size_t t = x.size(), d = x.front().size(), dk = d / heads;
  const Mat v = matmul(x, w.wv);
  Mat concat(t, Vec(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    const Mat a = attention_probs(x, w, heads, h);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < t; ++j)
        for (std::size_t e = 0; e < dk; ++e) concat[i][h * dk + e] += a[i][j] * v[j][h * dk + e];
  }
  const Mat attn = matmul(concat, w.wo);
  Mat out(t);
  for (std::size_t i = 0; i < t; ++i) {
    Vec r(d);
    for (std::size_t e = 0; e < d; ++e) r[e] = x[i][e] + attn[i][e];
    const Vec h1 = layer_norm(r, w.g1, w.be1);
    Vec hidden(w.b1.size());
    for (std::size_t f = 0; f < hidden.size(); ++f) {
      double s = w.b1[f];
      for (std::size_t e = 0; e < d; ++e) s += h1[e] * w.w1[e][f];
      hidden[f] = gelu(s);
    }
    Vec r2(d);
    for (std::size_t e = 0; e < d; ++e) {
      double s = w.b2[e];
      for (std::size_t f = 0; f < hidden.size(); ++f) s += hidden[f] * w.w2[f][e];
      r2[e] = h1[e] + s;
    }
    out[i] = layer_norm(r2, w.g2, w.be2);
  }
  return out;
}

Mat embed(const Mat& patches, const ModelParams& p) {
  const Mat wp = to_mat(p[p.patch.weight].value);  // [D×S]
  const Vec bp = to_vec(p[p.patch.bias].value);
  const Mat pos = to_mat(p[p.patch.positional].value);
  Mat out(patches.size(), Vec(wp.size()));
  for (std::size_t i = 0; i < patches.size(); ++i)
    for (std::size_t d = 0; d < wp.size(); ++d) {
      double s = bp[d] + pos[i][d];
      for (std::size_t k = 0; k < patches[i].size(); ++k) s += wp[d][k] * patches[i][k];
      out[i][d] = s;
    }
  return out;
}

std::vector<Mat> encode(const std::vector<Mat>& e, const ModelParams& p, std::size_t heads) {
  std::vector<Mat> out = e;
  for (auto& z : out)
    for (const auto& layer : p.encoder) z = block(z, layer_weights(p, layer), heads);
  return out;
}

Mat pool(const std::vector<Mat>& z) {
  Mat g(z.size(), Vec(z.front().front().size(), 0.0));
  for (std::size_t c = 0; c < z.size(); ++c) {
    for (const auto& row : z[c])
      for (std::size_t d = 0; d < row.size(); ++d) g[c][d] += row[d];
    for (double& v : g[c]) v /= static_cast<double>(z[c].size());
  }
  return g;
}

Mat decode(const Mat& g, const ModelParams& p, std::size_t heads) {
  const Mat table = to_mat(p[p.variate.table].value);
  Mat h = g;
  for (std::size_t c = 0; c < h.size(); ++c)
    for (std::size_t d = 0; d < h[c].size(); ++d) h[c][d] += table[c][d];
  for (const auto& layer : p.decoder) h = block(h, layer_weights(p, layer), heads);
  return matmul(h, to_mat(p[p.head.w_proj].value));
}

Mat predict(const std::vector<Mat>& z, const Mat& h_out, double lambda, const ModelParams& p) {
  const Mat wh = to_mat(p[p.head.w_head].value);  // [(P·D)×H]
  const Vec bh = to_vec(p[p.head.b_head].value);
  Mat y(z.size(), Vec(bh.size()));
  for (std::size_t c = 0; c < z.size(); ++c) {
    Vec flat;
    for (const auto& row : z[c])
      for (std::size_t d = 0; d < row.size(); ++d) flat.push_back(row[d] + lambda * h_out[c][d]);
    for (std::size_t h = 0; h < bh.size(); ++h) {
      double s = bh[h];
      for (std::size_t k = 0; k < flat.size(); ++k) s += wh[k][h] * flat[k];
      y[c][h] = s;
    }
  }
  return y;
}

Mat forward(const Mat& x, const ModelParams& p, const invdec::model::ModelConfig& cfg) {
  const std::size_t c_count = x.front().size();
  const std::size_t np = (x.size() - cfg.patch_len) / cfg.stride + 1;
  std::vector<Mat> e(c_count);
  for (std::size_t c = 0; c < c_count; ++c) {
    Mat patches(np, Vec(cfg.patch_len));
    for (std::size_t i = 0; i < np; ++i)
      for (std::size_t k = 0; k < cfg.patch_len; ++k) patches[i][k] = x[i * cfg.stride + k][c];
    e[c] = embed(patches, p);
  }
  const std::vector<Mat> z = encode(e, p, cfg.heads);
  const double lambda = invdec::model::current_lambda(p, cfg);
  Mat h_out(c_count, Vec(cfg.d_model, 0.0));
  if (lambda != 0.0 || cfg.lambda_mode == invdec::model::LambdaMode::kLearnable) {
    h_out = decode(pool(z), p, cfg.dec_heads);
  }
  const Mat y = predict(z, h_out, lambda, p);
  Mat out(cfg.horizon, Vec(c_count));
  for (std::size_t c = 0; c < c_count; ++c)
    for (std::size_t h = 0; h < cfg.horizon; ++h) out[h][c] = y[c][h];
  return out;
}

}  // namespace oracle
