#include "invdec/ad_ops.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "invdec/error.hpp"

namespace invdec::ad {
namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw UsageError("operands recorded on different tapes");
  return a.tape();
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void accumulate(Tensor& dst, const Tensor& src, double factor = 1.0) {
  double* d = dst.data().data();
  const double* s = src.data().data();
  for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += factor * s[i];
}

std::size_t last_dim(const Var& a) { return a.shape().back(); }

// out[m×n] += x[m×k]·w[k×n]
void gemm_nn(const double* x, const double* w, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = x[i * k + p];
      if (s == 0.0) continue;
      const double* wrow = w + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * wrow[j];
    }
  }
}

// out[m×n] += x[m×k]·w[n×k]ᵀ
void gemm_nt(const double* x, const double* w, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* xrow = x + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* wrow = w + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += xrow[p] * wrow[p];
      out[i * n + j] += acc;
    }
  }
}

// out[k×n] += x[m×k]ᵀ·g[m×n]
void gemm_tn(const double* x, const double* g, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = x[i * k + p];
      if (s == 0.0) continue;
      double* orow = out + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * grow[j];
    }
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape("add", a, b);
  Tensor out = a.value();
  out += b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("add", std::move(out), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ia)) accumulate(tp.grad(ia), g);
                    if (tp.requires_grad(ib)) accumulate(tp.grad(ib), g);
                  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  accumulate(out, b.value(), -1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("sub", std::move(out), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ia)) accumulate(tp.grad(ia), g);
                    if (tp.requires_grad(ib)) accumulate(tp.grad(ib), g, -1.0);
                  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("mul", std::move(out), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& tp, const Tensor& g) {
                    const Tensor& av = tp.value(ia);
                    const Tensor& bv = tp.value(ib);
                    if (tp.requires_grad(ia)) {
                      Tensor& ga = tp.grad(ia);
                      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
                    }
                    if (tp.requires_grad(ib)) {
                      Tensor& gb = tp.grad(ib);
                      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
                    }
                  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  const std::size_t ia = a.id();
  return a.tape().record("scale", std::move(out), a.requires_grad(),
                         [ia, factor](Tape& tp, const Tensor& g) {
                           accumulate(tp.grad(ia), g, factor);
                         });
}

Var mul_scalar(const Var& a, const Var& s) {
  Tape& t = same_tape(a, s);
  if (s.value().numel() != 1) {
    throw DimensionError("mul_scalar: scalar operand has shape " + shape_str(s.shape()));
  }
  const double sv = s.value()[0];
  Tensor out = a.value();
  for (double& v : out.data()) v *= sv;
  const std::size_t ia = a.id(), is = s.id();
  return t.record("mul_scalar", std::move(out), a.requires_grad() || s.requires_grad(),
                  [ia, is](Tape& tp, const Tensor& g) {
                    const double sv = tp.value(is)[0];
                    if (tp.requires_grad(ia)) accumulate(tp.grad(ia), g, sv);
                    if (tp.requires_grad(is)) {
                      const Tensor& av = tp.value(ia);
                      double acc = 0.0;
                      for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * av[i];
                      tp.grad(is)[0] += acc;
                    }
                  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const std::size_t ia = a.id();
  return a.tape().record("sum", Tensor::scalar(total), a.requires_grad(),
                         [ia](Tape& tp, const Tensor& g) {
                           Tensor& ga = tp.grad(ia);
                           for (double& v : ga.data()) v += g[0];
                         });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().numel());
  return scale(sum(a), 1.0 / n);
}

Var mse(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape("mse", a, b);
  const std::size_t n = a.value().numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.value()[i] - b.value()[i];
    total += d * d;
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("mse", Tensor::scalar(total / static_cast<double>(n)),
                  a.requires_grad() || b.requires_grad(), [ia, ib, n](Tape& tp, const Tensor& g) {
                    const Tensor& av = tp.value(ia);
                    const Tensor& bv = tp.value(ib);
                    const double c = 2.0 * g[0] / static_cast<double>(n);
                    if (tp.requires_grad(ia)) {
                      Tensor& ga = tp.grad(ia);
                      for (std::size_t i = 0; i < n; ++i) ga[i] += c * (av[i] - bv[i]);
                    }
                    if (tp.requires_grad(ib)) {
                      Tensor& gb = tp.grad(ib);
                      for (std::size_t i = 0; i < n; ++i) gb[i] -= c * (av[i] - bv[i]);
                    }
                  });
}

Var add_trailing(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  bool ok = bs.size() <= as.size();
  for (std::size_t i = 0; ok && i < bs.size(); ++i) ok = bs[i] == as[as.size() - bs.size() + i];
  if (!ok) {
    throw DimensionError("add_trailing: " + shape_str(bs) + " is not a trailing shape of " +
                         shape_str(as));
  }
  const std::size_t inner = b.value().numel();
  const std::size_t outer = a.value().numel() / inner;
  Tensor out = a.value();
  for (std::size_t o = 0; o < outer; ++o) {
    double* row = out.data().data() + o * inner;
    for (std::size_t j = 0; j < inner; ++j) row[j] += b.value()[j];
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("add_trailing", std::move(out), a.requires_grad() || b.requires_grad(),
                  [ia, ib, inner, outer](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ia)) accumulate(tp.grad(ia), g);
                    if (tp.requires_grad(ib)) {
                      Tensor& gb = tp.grad(ib);
                      for (std::size_t o = 0; o < outer; ++o) {
                        const double* row = g.data().data() + o * inner;
                        for (std::size_t j = 0; j < inner; ++j) gb[j] += row[j];
                      }
                    }
                  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  Tensor out = ops::matmul(a.value(), b.value());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record("matmul", std::move(out), a.requires_grad() || b.requires_grad(),
                  [ia, ib, m, k, n](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ia)) {
                      gemm_nt(g.data().data(), tp.value(ib).data().data(),
                              tp.grad(ia).data().data(), m, n, k);
                    }
                    if (tp.requires_grad(ib)) {
                      gemm_tn(tp.value(ia).data().data(), g.data().data(),
                              tp.grad(ib).data().data(), m, k, n);
                    }
                  });
}

Var linear(const Var& x, const Var& w) {
  Tape& t = same_tape(x, w);
  if (w.shape().size() != 2 || last_dim(x) != w.shape()[0]) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  const std::size_t k = w.shape()[0], n = w.shape()[1];
  const std::size_t m = x.value().numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  gemm_nn(x.value().data().data(), w.value().data().data(), out.data().data(), m, k, n);
  const std::size_t ix = x.id(), iw = w.id();
  return t.record("linear", std::move(out), x.requires_grad() || w.requires_grad(),
                  [ix, iw, m, k, n](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ix)) {
                      gemm_nt(g.data().data(), tp.value(iw).data().data(),
                              tp.grad(ix).data().data(), m, n, k);
                    }
                    if (tp.requires_grad(iw)) {
                      gemm_tn(tp.value(ix).data().data(), g.data().data(),
                              tp.grad(iw).data().data(), m, k, n);
                    }
                  });
}

Var linear_t(const Var& x, const Var& w) {
  Tape& t = same_tape(x, w);
  if (w.shape().size() != 2 || last_dim(x) != w.shape()[1]) {
    throw DimensionError("linear_t: input " + shape_str(x.shape()) +
                         " incompatible with weight " + shape_str(w.shape()));
  }
  const std::size_t n = w.shape()[0], k = w.shape()[1];
  const std::size_t m = x.value().numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  gemm_nt(x.value().data().data(), w.value().data().data(), out.data().data(), m, k, n);
  const std::size_t ix = x.id(), iw = w.id();
  return t.record("linear_t", std::move(out), x.requires_grad() || w.requires_grad(),
                  [ix, iw, m, k, n](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ix)) {
                      gemm_nn(g.data().data(), tp.value(iw).data().data(),
                              tp.grad(ix).data().data(), m, n, k);
                    }
                    if (tp.requires_grad(iw)) {
                      // dW[n×k] += gᵀ[n×m]·x[m×k]
                      gemm_tn(g.data().data(), tp.value(ix).data().data(),
                              tp.grad(iw).data().data(), m, n, k);
                    }
                  });
}

Var softmax_rows(const Var& a) {
  Tensor out = ops::softmax_rows(a.value());
  const std::size_t ia = a.id();
  const std::size_t n = last_dim(a);
  Tape& t = a.tape();
  const std::size_t self = t.size();
  return t.record("softmax_rows", std::move(out), a.requires_grad(),
                  [ia, n, self](Tape& tp, const Tensor& g) {
                    const Tensor& y = tp.value(self);
                    Tensor& ga = tp.grad(ia);
                    const std::size_t rows = y.numel() / n;
                    for (std::size_t r = 0; r < rows; ++r) {
                      const double* yr = y.data().data() + r * n;
                      const double* gr = g.data().data() + r * n;
                      double dot = 0.0;
                      for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
                      double* dr = ga.data().data() + r * n;
                      for (std::size_t j = 0; j < n; ++j) dr[j] += yr[j] * (gr[j] - dot);
                    }
                  });
}

Var layer_norm(const Var& a, const Var& gain, const Var& bias, double eps) {
  Tape& t = same_tape(a, gain);
  same_tape(a, bias);
  const std::size_t d = last_dim(a);
  if (gain.value().numel() != d || bias.value().numel() != d) {
    throw DimensionError("layer_norm: last axis of " + shape_str(a.shape()) +
                         " does not match gain " + shape_str(gain.shape()));
  }
  const std::size_t rows = a.value().numel() / d;
  Tensor xhat(a.shape());
  std::vector<double> inv_std(rows);
  Tensor out(a.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.value().data().data() + r * d;
    double* xh = xhat.data().data() + r * d;
    double* y = out.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xh[j] = (x[j] - mu) * inv_std[r];
      y[j] = gain.value()[j] * xh[j] + bias.value()[j];
    }
  }
  const std::size_t ia = a.id(), ig = gain.id(), ib = bias.id();
  return t.record(
      "layer_norm", std::move(out),
      a.requires_grad() || gain.requires_grad() || bias.requires_grad(),
      [ia, ig, ib, d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& tp, const Tensor& g) {
        const Tensor& gv = tp.value(ig);
        const bool need_a = tp.requires_grad(ia);
        Tensor* ga = need_a ? &tp.grad(ia) : nullptr;
        Tensor* gg = tp.requires_grad(ig) ? &tp.grad(ig) : nullptr;
        Tensor* gb = tp.requires_grad(ib) ? &tp.grad(ib) : nullptr;
        std::vector<double> dxh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data().data() + r * d;
          const double* xh = xhat.data().data() + r * d;
          for (std::size_t j = 0; j < d; ++j) {
            if (gg) (*gg)[j] += gr[j] * xh[j];
            if (gb) (*gb)[j] += gr[j];
          }
          if (!need_a) continue;
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dxh[j] = gr[j] * gv[j];
            mean_dxh += dxh[j];
            mean_dxh_xh += dxh[j] * xh[j];
          }
          mean_dxh /= static_cast<double>(d);
          mean_dxh_xh /= static_cast<double>(d);
          double* dr = ga->data().data() + r * d;
          for (std::size_t j = 0; j < d; ++j) {
            dr[j] += inv_std[r] * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
          }
        }
      });
}

Var gelu(const Var& a) {
  Tensor out = ops::gelu(a.value());
  const std::size_t ia = a.id();
  return a.tape().record("gelu", std::move(out), a.requires_grad(),
                         [ia](Tape& tp, const Tensor& g) {
                           const Tensor& x = tp.value(ia);
                           Tensor& ga = tp.grad(ia);
                           const double inv_sqrt_2pi = 0.5 * M_2_SQRTPI * M_SQRT1_2;
                           for (std::size_t i = 0; i < x.numel(); ++i) {
                             const double v = x[i];
                             const double cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
                             const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                             ga[i] += g[i] * (cdf + v * pdf);
                           }
                         });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  const std::size_t ia = a.id();
  Tape& t = a.tape();
  const std::size_t self = t.size();
  return t.record("sigmoid", std::move(out), a.requires_grad(),
                  [ia, self](Tape& tp, const Tensor& g) {
                    const Tensor& y = tp.value(self);
                    Tensor& ga = tp.grad(ia);
                    for (std::size_t i = 0; i < y.numel(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
                  });
}

Var dropout(const Var& a, double rate, bool training, RngStreams::Engine& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return a;
  // Same draw sequence as ops::dropout.
  Tensor mask(a.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = keep(rng) ? s : 0.0;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  const std::size_t ia = a.id();
  return a.tape().record("dropout", std::move(out), a.requires_grad(),
                         [ia, mask = std::move(mask)](Tape& tp, const Tensor& g) {
                           Tensor& ga = tp.grad(ia);
                           for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * mask[i];
                         });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record("reshape", std::move(out), a.requires_grad(),
                         [ia](Tape& tp, const Tensor& g) {
                           Tensor& ga = tp.grad(ia);
                           for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
                         });
}

Var transpose_last2(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw DimensionError("transpose_last2 needs rank >= 2, got " + shape_str(s));
  const std::size_t m = s[s.size() - 2], n = s.back();
  const std::size_t batch = a.value().numel() / (m * n);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape.back());
  Tensor out(out_shape);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = a.value().data().data() + b * m * n;
    double* dst = out.data().data() + b * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }
  const std::size_t ia = a.id();
  return a.tape().record("transpose_last2", std::move(out), a.requires_grad(),
                         [ia, batch, m, n](Tape& tp, const Tensor& g) {
                           Tensor& ga = tp.grad(ia);
                           for (std::size_t b = 0; b < batch; ++b) {
                             const double* src = g.data().data() + b * m * n;
                             double* dst = ga.data().data() + b * m * n;
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += src[j * m + i];
                           }
                         });
}

Var mean_over_tokens(const Var& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw DimensionError("mean_over_tokens needs rank >= 2, got " + shape_str(s));
  const std::size_t p = s[s.size() - 2], d = s.back();
  const std::size_t outer = a.value().numel() / (p * d);
  Shape out_shape(s.begin(), s.end() - 2);
  out_shape.push_back(d);
  Tensor out(out_shape);
  const double inv = 1.0 / static_cast<double>(p);
  for (std::size_t o = 0; o < outer; ++o) {
    double* dst = out.data().data() + o * d;
    for (std::size_t i = 0; i < p; ++i) {
      const double* src = a.value().data().data() + (o * p + i) * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    for (std::size_t j = 0; j < d; ++j) dst[j] *= inv;
  }
  const std::size_t ia = a.id();
  return a.tape().record("mean_over_tokens", std::move(out), a.requires_grad(),
                         [ia, outer, p, d, inv](Tape& tp, const Tensor& g) {
                           Tensor& ga = tp.grad(ia);
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = g.data().data() + o * d;
                             for (std::size_t i = 0; i < p; ++i) {
                               double* dst = ga.data().data() + (o * p + i) * d;
                               for (std::size_t j = 0; j < d; ++j) dst[j] += inv * src[j];
                             }
                           }
                         });
}

Var repeat_tokens(const Var& a, std::size_t count) {
  const Shape& s = a.shape();
  const std::size_t d = s.back();
  const std::size_t outer = a.value().numel() / d;
  Shape out_shape(s.begin(), s.end() - 1);
  out_shape.push_back(count);
  out_shape.push_back(d);
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = a.value().data().data() + o * d;
    for (std::size_t i = 0; i < count; ++i) {
      double* dst = out.data().data() + (o * count + i) * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record("repeat_tokens", std::move(out), a.requires_grad(),
                         [ia, outer, count, d](Tape& tp, const Tensor& g) {
                           Tensor& ga = tp.grad(ia);
                           for (std::size_t o = 0; o < outer; ++o) {
                             double* dst = ga.data().data() + o * d;
                             for (std::size_t i = 0; i < count; ++i) {
                               const double* src = g.data().data() + (o * count + i) * d;
                               for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                             }
                           }
                         });
}

AttentionResult attention(const Var& q, const Var& k, const Var& v, std::size_t heads) {
  Tape& t = same_tape(q, k);
  same_tape(q, v);
  const Shape& s = q.shape();
  if (s.size() != 3 || k.shape() != s || v.shape() != s) {
    throw DimensionError("attention expects equal [G,T,D] operands, got " + shape_str(s) + ", " +
                         shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const std::size_t groups = s[0], tokens = s[1], dim = s[2];
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(dim) +
                      " not divisible by heads " + std::to_string(heads));
  }
  const std::size_t dk = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor weights({groups, heads, tokens, tokens});
  Tensor out(s);
  const double* qd = q.value().data().data();
  const double* kd = k.value().data().data();
  const double* vd = v.value().data().data();
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * tokens * dim;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dk;
      double* w = weights.data().data() + (g * heads + h) * tokens * tokens;
      for (std::size_t i = 0; i < tokens; ++i) {
        const double* qi = qd + base + i * dim + off;
        double* wi = w + i * tokens;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < tokens; ++j) {
          const double* kj = kd + base + j * dim + off;
          double acc = 0.0;
          for (std::size_t c = 0; c < dk; ++c) acc += qi[c] * kj[c];
          wi[j] = acc * scale;
          if (wi[j] > mx) mx = wi[j];
        }
        double total = 0.0;
        for (std::size_t j = 0; j < tokens; ++j) {
          wi[j] = std::exp(wi[j] - mx);
          total += wi[j];
        }
        const double inv = 1.0 / total;
        double* oi = out.data().data() + base + i * dim + off;
        for (std::size_t j = 0; j < tokens; ++j) {
          wi[j] *= inv;
          const double* vj = vd + base + j * dim + off;
          for (std::size_t c = 0; c < dk; ++c) oi[c] += wi[j] * vj[c];
        }
      }
    }
  }

  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  Tensor saved = weights;
  Var output = t.record(
      "attention", std::move(out),
      q.requires_grad() || k.requires_grad() || v.requires_grad(),
      [iq, ik, iv, groups, tokens, dim, heads, dk, scale, w_all = std::move(saved)](
          Tape& tp, const Tensor& gout) {
        const double* qd = tp.value(iq).data().data();
        const double* kd = tp.value(ik).data().data();
        const double* vd = tp.value(iv).data().data();
        double* gq = tp.requires_grad(iq) ? tp.grad(iq).data().data() : nullptr;
        double* gk = tp.requires_grad(ik) ? tp.grad(ik).data().data() : nullptr;
        double* gv = tp.requires_grad(iv) ? tp.grad(iv).data().data() : nullptr;
        std::vector<double> dw(tokens);
        for (std::size_t g = 0; g < groups; ++g) {
          const std::size_t base = g * tokens * dim;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t off = h * dk;
            const double* w = w_all.data().data() + (g * heads + h) * tokens * tokens;
            for (std::size_t i = 0; i < tokens; ++i) {
              const double* go = gout.data().data() + base + i * dim + off;
              const double* wi = w + i * tokens;
              double dot = 0.0;
              for (std::size_t j = 0; j < tokens; ++j) {
                const double* vj = vd + base + j * dim + off;
                double acc = 0.0;
                for (std::size_t c = 0; c < dk; ++c) acc += go[c] * vj[c];
                dw[j] = acc;
                dot += acc * wi[j];
                if (gv) {
                  double* gvj = gv + base + j * dim + off;
                  for (std::size_t c = 0; c < dk; ++c) gvj[c] += wi[j] * go[c];
                }
              }
              const double* qi = qd + base + i * dim + off;
              double* gqi = gq ? gq + base + i * dim + off : nullptr;
              for (std::size_t j = 0; j < tokens; ++j) {
                const double ds = wi[j] * (dw[j] - dot) * scale;
                if (ds == 0.0) continue;
                const double* kj = kd + base + j * dim + off;
                if (gqi) {
                  for (std::size_t c = 0; c < dk; ++c) gqi[c] += ds * kj[c];
                }
                if (gk) {
                  double* gkj = gk + base + j * dim + off;
                  for (std::size_t c = 0; c < dk; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
  return AttentionResult{output, std::move(weights)};
}

}  // namespace invdec::ad
