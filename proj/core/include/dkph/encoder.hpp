#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dkph/numerics.hpp"

namespace dkph {

struct EncoderConfig {
  std::size_t frame_count = 25;
  std::size_t input_dim = 64;
  std::size_t model_dim = 256;
  std::size_t ffn_dim = 512;

  void validate() const;
};

/// Fully connected layer y = x·W + b with W stored in×out.
struct Linear {
  Matrix weight;
  Matrix bias;

  static Linear init(std::size_t in, std::size_t out, Rng& rng);
  Matrix apply(const Matrix& x) const;

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }

  template <class F>
  void for_each(std::string_view prefix, F&& f) {
    f(std::string(prefix) + ".weight", weight);
    f(std::string(prefix) + ".bias", bias);
  }
  template <class F>
  void for_each(std::string_view prefix, F&& f) const {
    f(std::string(prefix) + ".weight", weight);
    f(std::string(prefix) + ".bias", bias);
  }
};

struct LayerNormParams {
  Matrix gain;
  Matrix bias;

  static LayerNormParams identity(std::size_t dim);
};

/// Single-block, single-head pre-norm transformer encoder:
///   P = x·W_in + b_in          (masked rows replaced by the mask embedding)
///   H0 = P + E_pos
///   H1 = H0 + Attn(LN(H0))·W_o + b_o
///   T  = H1 + FFN(LN(H1))
struct EncoderParams {
  Linear input_proj;
  Matrix pos_embed;
  Matrix wq;
  Matrix wk;
  Matrix wv;
  Linear out_proj;
  LayerNormParams norm_attn;
  LayerNormParams norm_ffn;
  Linear ffn_in;
  Linear ffn_out;

  static EncoderParams init(const EncoderConfig& config, Rng& rng);
  EncoderConfig config() const;

  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    self.input_proj.for_each("input_proj", f);
    f("pos_embed", self.pos_embed);
    f("wq", self.wq);
    f("wk", self.wk);
    f("wv", self.wv);
    self.out_proj.for_each("out_proj", f);
    f("norm_attn.gain", self.norm_attn.gain);
    f("norm_attn.bias", self.norm_attn.bias);
    f("norm_ffn.gain", self.norm_ffn.gain);
    f("norm_ffn.bias", self.norm_ffn.bias);
    self.ffn_in.for_each("ffn_in", f);
    self.ffn_out.for_each("ffn_out", f);
  }
};

struct VisualEmbeddings {
  Matrix frames;  // M×d_model
  Matrix mean;    // 1×d_model
};

/// Frames whose projected input is replaced by `embedding` (1×d_model).
struct FrameMask {
  std::vector<std::size_t> frames;
  const Matrix* embedding = nullptr;
};

struct LayerNormCache {
  Matrix normalized;
  std::vector<double> inv_std;
};

struct EncoderCache {
  const EncoderParams* params = nullptr;
  Matrix input;
  std::vector<std::size_t> masked;
  Matrix h0;
  LayerNormCache ln_attn;
  Matrix n1;
  Matrix q;
  Matrix k;
  Matrix v;
  Matrix attention;
  Matrix context;
  Matrix h1;
  LayerNormCache ln_ffn;
  Matrix n2;
  Matrix ffn_pre;
  Matrix ffn_act;

  bool filled() const noexcept { return params != nullptr; }
};

struct EncoderForward {
  VisualEmbeddings embeddings;
  EncoderCache cache;
};

struct EncoderGrads {
  EncoderParams params;
  Matrix input;       // M×D
  Matrix mask_embed;  // 1×d_model; zero when nothing was masked
};

EncoderForward encode_forward(const Matrix& x, const EncoderParams& p,
                              const FrameMask* mask = nullptr);

/// Gradients of a scalar loss given dL/dT (M×d_model). Throws CacheError
/// when the cache is empty or was produced with different parameters.
EncoderGrads encode_backward(const Matrix& grad_out, const EncoderCache& cache,
                             const EncoderParams& p);

/// Smooth FFN nonlinearity (tanh form of GELU) and its derivative.
double gelu(double u);
double gelu_derivative(double u);

constexpr double kLayerNormEpsilon = 1e-5;

}  // namespace dkph
