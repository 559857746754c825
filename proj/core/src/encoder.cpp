#include "dkph/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dkph/errors.hpp"
#include "dkph/params.hpp"

namespace dkph {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // √(2/π)
constexpr double kGeluCubic = 0.044715;

Matrix layer_norm_forward(const Matrix& x, const LayerNormParams& p, LayerNormCache& cache) {
  const std::size_t d = x.cols();
  cache.normalized = Matrix(x.rows(), d);
  cache.inv_std.assign(x.rows(), 0.0);
  Matrix out(x.rows(), d);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    cache.inv_std[i] = inv;
    auto xhat = cache.normalized.row(i);
    auto o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[j] = (in[j] - mean) * inv;
      o[j] = xhat[j] * p.gain(0, j) + p.bias(0, j);
    }
  }
  return out;
}

// Returns dL/dx; accumulates into the gain/bias gradients.
Matrix layer_norm_backward(const Matrix& grad_out, const LayerNormCache& cache,
                           const LayerNormParams& p, LayerNormParams& grads) {
  const std::size_t d = grad_out.cols();
  const double inv_d = 1.0 / static_cast<double>(d);
  Matrix dx(grad_out.rows(), d);
  std::vector<double> dxhat(d);
  for (std::size_t i = 0; i < grad_out.rows(); ++i) {
    auto dy = grad_out.row(i);
    auto xhat = cache.normalized.row(i);
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      grads.gain(0, j) += dy[j] * xhat[j];
      grads.bias(0, j) += dy[j];
      dxhat[j] = dy[j] * p.gain(0, j);
      sum_dxhat += dxhat[j];
      sum_dxhat_xhat += dxhat[j] * xhat[j];
    }
    auto out = dx.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      out[j] = cache.inv_std[i] * (dxhat[j] - inv_d * sum_dxhat - xhat[j] * inv_d * sum_dxhat_xhat);
    }
  }
  return dx;
}

void linear_backward(const Matrix& input, const Matrix& grad_out, Linear& grads) {
  axpy(grads.weight, matmul_at_b(input, grad_out));
  axpy(grads.bias, column_sums(grad_out));
}

}  // namespace

void EncoderConfig::validate() const {
  if (frame_count < 1 || input_dim < 1 || model_dim < 1 || ffn_dim < 1) {
    throw DomainError("EncoderConfig: every dimension must be at least 1");
  }
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  return Linear{fan_in_uniform(in, out, in, rng), Matrix(1, out)};
}

Matrix Linear::apply(const Matrix& x) const { return add_row_broadcast(matmul(x, weight), bias); }

LayerNormParams LayerNormParams::identity(std::size_t dim) {
  return LayerNormParams{Matrix(1, dim, 1.0), Matrix(1, dim)};
}

EncoderParams EncoderParams::init(const EncoderConfig& c, Rng& rng) {
  c.validate();
  const std::size_t d = c.model_dim;
  EncoderParams p;
  p.input_proj = Linear::init(c.input_dim, d, rng);
  p.pos_embed = fan_in_uniform(c.frame_count, d, d, rng);
  p.wq = fan_in_uniform(d, d, d, rng);
  p.wk = fan_in_uniform(d, d, d, rng);
  p.wv = fan_in_uniform(d, d, d, rng);
  p.out_proj = Linear::init(d, d, rng);
  p.norm_attn = LayerNormParams::identity(d);
  p.norm_ffn = LayerNormParams::identity(d);
  p.ffn_in = Linear::init(d, c.ffn_dim, rng);
  p.ffn_out = Linear::init(c.ffn_dim, d, rng);
  return p;
}

EncoderConfig EncoderParams::config() const {
  return EncoderConfig{pos_embed.rows(), input_proj.in_dim(), input_proj.out_dim(),
                       ffn_in.out_dim()};
}

double gelu(double u) {
  return 0.5 * u * (1.0 + std::tanh(kGeluC * (u + kGeluCubic * u * u * u)));
}

double gelu_derivative(double u) {
  const double th = std::tanh(kGeluC * (u + kGeluCubic * u * u * u));
  return 0.5 * (1.0 + th) +
         0.5 * u * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluCubic * u * u);
}

EncoderForward encode_forward(const Matrix& x, const EncoderParams& p, const FrameMask* mask) {
  const EncoderConfig c = p.config();
  if (x.rows() != c.frame_count || x.cols() != c.input_dim) {
    throw ShapeError("encode_forward: input " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()) + ", expected " +
                     std::to_string(c.frame_count) + "x" + std::to_string(c.input_dim));
  }
  const std::size_t d = c.model_dim;

  EncoderForward fwd;
  EncoderCache& cache = fwd.cache;
  cache.input = x;

  Matrix projected = p.input_proj.apply(x);
  if (mask != nullptr && !mask->frames.empty()) {
    if (mask->embedding == nullptr || mask->embedding->rows() != 1 ||
        mask->embedding->cols() != d) {
      throw ShapeError("encode_forward: mask embedding must be 1x" + std::to_string(d));
    }
    for (std::size_t m : mask->frames) {
      if (m >= c.frame_count) throw ShapeError("encode_forward: mask index out of range");
      auto dst = projected.row(m);
      auto src = mask->embedding->row(0);
      std::copy(src.begin(), src.end(), dst.begin());
    }
    cache.masked = mask->frames;
    std::sort(cache.masked.begin(), cache.masked.end());
    cache.masked.erase(std::unique(cache.masked.begin(), cache.masked.end()), cache.masked.end());
  }

  cache.h0 = add(projected, p.pos_embed);
  cache.n1 = layer_norm_forward(cache.h0, p.norm_attn, cache.ln_attn);
  cache.q = matmul(cache.n1, p.wq);
  cache.k = matmul(cache.n1, p.wk);
  cache.v = matmul(cache.n1, p.wv);
  cache.attention = row_softmax(matmul_a_bt(cache.q, cache.k), 1.0 / std::sqrt(static_cast<double>(d)));
  cache.context = matmul(cache.attention, cache.v);
  cache.h1 = add(cache.h0, p.out_proj.apply(cache.context));
  cache.n2 = layer_norm_forward(cache.h1, p.norm_ffn, cache.ln_ffn);
  cache.ffn_pre = p.ffn_in.apply(cache.n2);
  cache.ffn_act = cache.ffn_pre;
  for (double& u : cache.ffn_act.values()) u = gelu(u);

  Matrix out = add(cache.h1, p.ffn_out.apply(cache.ffn_act));
  fwd.embeddings.mean = row_mean(out);
  fwd.embeddings.frames = std::move(out);
  cache.params = &p;
  return fwd;
}

EncoderGrads encode_backward(const Matrix& grad_out, const EncoderCache& cache,
                             const EncoderParams& p) {
  if (!cache.filled()) throw CacheError("encode_backward: empty cache");
  if (cache.params != &p) {
    throw CacheError("encode_backward: cache was produced with different parameters");
  }
  if (!grad_out.same_shape(cache.h1)) throw ShapeError("encode_backward: grad_out shape");

  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(p.config().model_dim));
  EncoderGrads g{zeros_like(p), Matrix::zeros_like(cache.input),
                 Matrix(1, p.config().model_dim)};

  // Feed-forward sublayer.
  Matrix d_h1 = grad_out;
  linear_backward(cache.ffn_act, grad_out, g.params.ffn_out);
  Matrix d_act = matmul_a_bt(grad_out, p.ffn_out.weight);
  Matrix d_pre = d_act;
  {
    auto dv = d_pre.values();
    auto pre = cache.ffn_pre.values();
    for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= gelu_derivative(pre[i]);
  }
  linear_backward(cache.n2, d_pre, g.params.ffn_in);
  Matrix d_n2 = matmul_a_bt(d_pre, p.ffn_in.weight);
  axpy(d_h1, layer_norm_backward(d_n2, cache.ln_ffn, p.norm_ffn, g.params.norm_ffn));

  // Attention sublayer.
  Matrix d_h0 = d_h1;
  linear_backward(cache.context, d_h1, g.params.out_proj);
  Matrix d_context = matmul_a_bt(d_h1, p.out_proj.weight);
  Matrix d_attention = matmul_a_bt(d_context, cache.v);
  Matrix d_v = matmul_at_b(cache.attention, d_context);
  Matrix d_logits(d_attention.rows(), d_attention.cols());
  for (std::size_t i = 0; i < d_logits.rows(); ++i) {
    auto s = cache.attention.row(i);
    auto ds = d_attention.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) dot += s[j] * ds[j];
    auto out = d_logits.row(i);
    for (std::size_t j = 0; j < s.size(); ++j) out[j] = attn_scale * s[j] * (ds[j] - dot);
  }
  Matrix d_q = matmul(d_logits, cache.k);
  Matrix d_k = matmul_at_b(d_logits, cache.q);
  axpy(g.params.wq, matmul_at_b(cache.n1, d_q));
  axpy(g.params.wk, matmul_at_b(cache.n1, d_k));
  axpy(g.params.wv, matmul_at_b(cache.n1, d_v));
  Matrix d_n1 = matmul_a_bt(d_q, p.wq);
  axpy(d_n1, matmul_a_bt(d_k, p.wk));
  axpy(d_n1, matmul_a_bt(d_v, p.wv));
  axpy(d_h0, layer_norm_backward(d_n1, cache.ln_attn, p.norm_attn, g.params.norm_attn));

  // Positional embedding, mask embedding and input projection.
  axpy(g.params.pos_embed, d_h0);
  Matrix d_projected = std::move(d_h0);
  for (std::size_t m : cache.masked) {
    auto row = d_projected.row(m);
    for (std::size_t j = 0; j < row.size(); ++j) {
      g.mask_embed(0, j) += row[j];
      row[j] = 0.0;
    }
  }
  linear_backward(cache.input, d_projected, g.params.input_proj);
  g.input = matmul_a_bt(d_projected, p.input_proj.weight);
  return g;
}

}  // namespace dkph
