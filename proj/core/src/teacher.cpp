#include "dkph/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "dkph/errors.hpp"
#include "dkph/optimizer.hpp"
#include "dkph/params.hpp"

namespace dkph {

TeacherParams TeacherParams::init(const EncoderConfig& config, Rng& rng, std::size_t bits) {
  TeacherParams p;
  p.encoder = EncoderParams::init(config, rng);
  p.frame_hash = Linear::init(config.model_dim, bits, rng);
  p.decoder = Linear::init(bits, config.input_dim, rng);
  p.mask_embed = fan_in_uniform(1, config.model_dim, config.model_dim, rng);
  return p;
}

TeacherForward teacher_forward(const Matrix& x, const TeacherParams& p,
                               std::span<const std::size_t> mask) {
  TeacherForward fwd;
  fwd.mask.frames.assign(mask.begin(), mask.end());
  fwd.mask.embedding = &p.mask_embed;
  EncoderForward enc = encode_forward(x, p.encoder, &fwd.mask);
  fwd.relaxed = tanh(p.frame_hash.apply(enc.embeddings.frames));
  fwd.codes.codes = fwd.relaxed;
  for (double& v : fwd.codes.codes.values()) v = hard_sign(v);
  fwd.recon = p.decoder.apply(fwd.codes.codes);
  fwd.embeddings = std::move(enc.embeddings);
  fwd.cache = std::move(enc.cache);
  return fwd;
}

double teacher_recon_loss(const Matrix& x, const Matrix& recon, std::span<const std::size_t> mask) {
  if (!x.same_shape(recon)) throw ShapeError("teacher_recon_loss: shape mismatch");
  if (mask.empty()) throw DomainError("teacher_recon_loss: empty mask");
  double total = 0.0;
  for (std::size_t m : mask) {
    if (m >= x.rows()) throw ShapeError("teacher_recon_loss: mask index out of range");
    total += squared_distance(x.row(m), recon.row(m));
  }
  return total / static_cast<double>(x.cols() * mask.size());
}

TeacherParams teacher_backward(const Matrix& grad_recon, const TeacherForward& fwd,
                               const TeacherParams& p, SignGradient sign_grad) {
  TeacherParams g = zeros_like(p);
  axpy(g.decoder.weight, matmul_at_b(fwd.codes.codes, grad_recon));
  axpy(g.decoder.bias, column_sums(grad_recon));

  Matrix d_pre(fwd.relaxed.rows(), fwd.relaxed.cols());
  if (sign_grad == SignGradient::kStraightThrough) {
    d_pre = matmul_a_bt(grad_recon, p.decoder.weight);
    auto dv = d_pre.values();
    auto r = fwd.relaxed.values();
    for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= 1.0 - r[i] * r[i];
  }
  axpy(g.frame_hash.weight, matmul_at_b(fwd.embeddings.frames, d_pre));
  axpy(g.frame_hash.bias, column_sums(d_pre));

  Matrix d_frames = matmul_a_bt(d_pre, p.frame_hash.weight);
  EncoderGrads enc = encode_backward(d_frames, fwd.cache, p.encoder);
  g.encoder = std::move(enc.params);
  g.mask_embed = std::move(enc.mask_embed);
  return g;
}

VideoCode video_code_from_frames(const FrameCodes& frames, TieRule rule) {
  const Matrix& c = frames.codes;
  if (c.rows() == 0) throw DomainError("video_code_from_frames: no frames");
  VideoCode out;
  std::vector<std::int8_t> bits(c.cols());
  for (std::size_t k = 0; k < c.cols(); ++k) {
    // Codes are exactly ±1, so the integer sum decides the sign without
    // rounding.
    long long total = 0;
    for (std::size_t m = 0; m < c.rows(); ++m) total += c(m, k) > 0.0 ? 1 : -1;
    if (total == 0) {
      ++out.ties;
      switch (rule) {
        case TieRule::kPlusOne:
          bits[k] = 1;
          break;
      }
    } else {
      bits[k] = total > 0 ? 1 : -1;
    }
  }
  out.code = BinaryCode(std::move(bits));
  return out;
}

std::vector<std::size_t> sample_frame_mask(std::size_t frames, double ratio, Rng& rng) {
  if (frames == 0) throw DomainError("sample_frame_mask: no frames");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw DomainError("sample_frame_mask: ratio outside [0,1]");
  const auto count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(frames))), 1, frames);
  std::vector<std::size_t> order(frames);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher–Yates: the first `count` slots are a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[i + rng.index(frames - i)]);
  }
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

double teacher_eval_loss(std::span<const Matrix> videos, const TeacherParams& p,
                         std::span<const std::vector<std::size_t>> masks) {
  if (videos.size() != masks.size()) throw ShapeError("teacher_eval_loss: one mask per video");
  double total = 0.0;
  std::size_t masked = 0;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const TeacherForward fwd = teacher_forward(videos[i], p, masks[i]);
    total += teacher_recon_loss(videos[i], fwd.recon, masks[i]) *
             static_cast<double>(masks[i].size());
    masked += masks[i].size();
  }
  return masked == 0 ? 0.0 : total / static_cast<double>(masked);
}

TeacherTrainResult train_teacher(std::span<const Matrix> videos, const EncoderConfig& config,
                                 const TeacherTrainConfig& train) {
  if (videos.empty()) throw DomainError("train_teacher: empty dataset");
  if (train.batch_size == 0) throw DomainError("train_teacher: batch size must be positive");

  Rng rng(train.seed);
  Rng init_rng = rng.split();
  Rng eval_rng = rng.split();
  TeacherTrainResult result{TeacherParams::init(config, init_rng), {}};
  TeacherParams& params = result.params;

  std::vector<std::vector<std::size_t>> eval_masks;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    eval_masks.push_back(sample_frame_mask(config.frame_count, train.mask_ratio, eval_rng));
  }
  result.eval_losses.push_back(teacher_eval_loss(videos, params, eval_masks));
  if (train.epochs == 0) return result;

  Adam adam({.learning_rate = train.learning_rate});
  std::vector<std::size_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
      const std::size_t end = std::min(order.size(), start + train.batch_size);
      std::vector<std::vector<std::size_t>> masks;
      std::size_t total_masked = 0;
      for (std::size_t b = start; b < end; ++b) {
        masks.push_back(sample_frame_mask(config.frame_count, train.mask_ratio, rng));
        total_masked += masks.back().size();
      }
      const double norm = 1.0 / static_cast<double>(config.input_dim * total_masked);

      TeacherParams grads = zeros_like(params);
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const Matrix& x = videos[order[b]];
        const auto& mask = masks[b - start];
        const TeacherForward fwd = teacher_forward(x, params, mask);
        Matrix grad_recon(x.rows(), x.cols());
        for (std::size_t m : mask) {
          for (std::size_t j = 0; j < x.cols(); ++j) {
            const double diff = fwd.recon(m, j) - x(m, j);
            batch_loss += diff * diff * norm;
            grad_recon(m, j) = 2.0 * diff * norm;
          }
        }
        accumulate(grads, teacher_backward(grad_recon, fwd, params));
      }
      if (!std::isfinite(batch_loss)) throw TrainingError("teacher loss is not finite", epoch);
      adam.step(param_refs(params), param_refs(std::as_const(grads)));
    }
    const double eval = teacher_eval_loss(videos, params, eval_masks);
    if (!std::isfinite(eval)) throw TrainingError("teacher loss is not finite", epoch);
    result.eval_losses.push_back(eval);
  }
  if (result.eval_losses.back() > result.eval_losses.front()) {
    throw TrainingError("teacher loss did not decrease from initialization", train.epochs);
  }
  return result;
}

Matrix teacher_video_embeddings(std::span<const Matrix> videos, const TeacherParams& p) {
  Matrix out(videos.size(), p.encoder.config().model_dim);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const EncoderForward enc = encode_forward(videos[i], p.encoder);
    auto src = enc.embeddings.mean.row(0);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace dkph
