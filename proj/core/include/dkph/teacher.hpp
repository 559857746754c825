#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dkph/binary_code.hpp"
#include "dkph/encoder.hpp"
#include "dkph/numerics.hpp"

namespace dkph {

/// Teacher frame codes are fixed at 128 bits.
inline constexpr std::size_t kTeacherBits = 128;

struct TeacherParams {
  EncoderParams encoder;
  Linear frame_hash;  // d_model → K_T
  Linear decoder;     // K_T → D
  Matrix mask_embed;  // 1×d_model

  static TeacherParams init(const EncoderConfig& config, Rng& rng,
                            std::size_t bits = kTeacherBits);

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
    self.encoder.for_each([&](std::string_view name, auto& m) {
      f("encoder." + std::string(name), m);
    });
    self.frame_hash.for_each("frame_hash", f);
    self.decoder.for_each("decoder", f);
    f("mask_embed", self.mask_embed);
  }
};

/// M×K_T matrix with every entry exactly ±1.
struct FrameCodes {
  Matrix codes;
};

struct TeacherForward {
  FrameCodes codes;
  Matrix relaxed;  // tanh(H_T(t)), M×K_T
  Matrix recon;    // M×D
  VisualEmbeddings embeddings;
  EncoderCache cache;
  FrameMask mask;
};

/// Per-frame codes b^m = sign(tanh(H_T(t^m))) and reconstruction D_T(b^m).
/// Masked frames see the mask embedding instead of their projected input.
TeacherForward teacher_forward(const Matrix& x, const TeacherParams& p,
                               std::span<const std::size_t> mask);

/// Squared error over the masked frames, divided by D·|mask|.
double teacher_recon_loss(const Matrix& x, const Matrix& recon, std::span<const std::size_t> mask);

/// Gradients of a loss given dL/d(recon). The sign layer uses `sign_grad`.
TeacherParams teacher_backward(const Matrix& grad_recon, const TeacherForward& fwd,
                               const TeacherParams& p,
                               SignGradient sign_grad = SignGradient::kStraightThrough);

enum class TieRule { kPlusOne };

struct VideoCode {
  BinaryCode code;
  std::size_t ties = 0;  // bits whose frame mean was exactly 0
};

/// Video code by per-bit frame averaging then sign; the averaging baseline
/// that can produce 0 entries. Ties resolve per `rule`.
VideoCode video_code_from_frames(const FrameCodes& frames, TieRule rule = TieRule::kPlusOne);

/// round(ratio·M) distinct frames (at least one), drawn uniformly.
std::vector<std::size_t> sample_frame_mask(std::size_t frames, double ratio, Rng& rng);

struct TeacherTrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 256;
  double learning_rate = 5e-4;
  double mask_ratio = 0.15;
  std::uint64_t seed = 1;
};

struct TeacherTrainResult {
  TeacherParams params;
  /// Masked reconstruction loss on the training set under fixed evaluation
  /// masks; entry 0 is at initialization, entry e after epoch e.
  std::vector<double> eval_losses;
};

/// Adam on the masked reconstruction loss. Throws TrainingError on a
/// non-finite loss or when the final evaluation loss exceeds the initial one.
TeacherTrainResult train_teacher(std::span<const Matrix> videos, const EncoderConfig& config,
                                 const TeacherTrainConfig& train);

/// Masked reconstruction loss over `videos`, with one mask per video.
double teacher_eval_loss(std::span<const Matrix> videos, const TeacherParams& p,
                         std::span<const std::vector<std::size_t>> masks);

/// Unmasked encoder mean t̄ per video, one row each.
Matrix teacher_video_embeddings(std::span<const Matrix> videos, const TeacherParams& p);

}  // namespace dkph
