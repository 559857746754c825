#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dkph/binary_code.hpp"
#include "dkph/encoder.hpp"
#include "dkph/gradcheck.hpp"
#include "dkph/graph.hpp"
#include "dkph/numerics.hpp"
#include "dkph/optimizer.hpp"

namespace dkph {

struct StudentParams {
  EncoderParams encoder;
  Linear hash;      // H_S: (M·d_model) → K over the concatenated frames
  Linear temporal;  // T_S: d_model → K, shared across frames
  Linear decoder;   // D_S: K → D, shared across frames

  static StudentParams init(const EncoderConfig& config, std::size_t bits, Rng& rng);
  std::size_t bits() const noexcept { return hash.out_dim(); }

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
    self.hash.for_each("hash", f);
    self.temporal.for_each("temporal", f);
    self.decoder.for_each("decoder", f);
  }
};

/// What the decoder sees per frame. kDualStream is the trained model
/// (l^m + b); the others are ablations.
enum class DecoderInput {
  kDualStream,  // l^m + b
  kCodeOnly,    // b       (latent stream removed)
  kLatentOnly,  // l^m     (code removed)
  kLatentMean,  // mean_m(l) + b
};

struct StudentForward {
  BinaryCode code;
  Matrix pre_code;  // t̂, 1×K
  Matrix relaxed;   // tanh(t̂), 1×K
  Matrix latent;    // l, M×K
  Matrix mixed;     // decoder input, M×K
  Matrix recon;     // M×D
  VisualEmbeddings embeddings;
  EncoderCache cache;
  DecoderInput input = DecoderInput::kDualStream;
};

StudentForward student_forward(const Matrix& x, const StudentParams& p,
                               DecoderInput input = DecoderInput::kDualStream);

/// Mean squared error over all D·N·M scalars.
double student_recon_loss(std::span<const Matrix> x, std::span<const Matrix> recon);

struct LossWeights {
  double gamma1 = 0.11;
  double gamma2 = 0.9;
  double eta = 0.1;
  double beta = 1.0;
  double lambda1 = 2.0;
  double lambda2 = 1.0;
  double bandwidth = 0.0;  // 0 selects the data-driven default
  double learning_rate = 5e-4;
  double mask_ratio = 0.15;

  void validate() const;
};

struct PairLoss {
  double loss = 0.0;
  Matrix grad;  // dL/d(rows of the input matrix)
};

/// (1/|pairs|)·Σ |a|·(a − ⟨r_i, r_j⟩/K)², with r the rows of `codes`
/// (tanh relaxations, or hard codes). Pair indices address rows.
PairLoss bsim_loss_grad(std::span<const PairSample> pairs, const Matrix& codes);
double bsim_loss(std::span<const PairSample> pairs, const Matrix& codes);

/// (1/|pairs|)·Σ ‖t̄_i − c_i‖² + η|a|(1−a)·[‖t̄_i − c_i‖² − ‖t̄_i − c_j‖² + β]₊
/// where c_v = centers.row(anchor_of[v]). Pair indices address rows of `means`.
PairLoss tsim_loss_grad(std::span<const PairSample> pairs, const Matrix& means,
                        const Matrix& centers, std::span<const std::uint32_t> anchor_of,
                        double eta, double beta);
double tsim_loss(std::span<const PairSample> pairs, const Matrix& means, const Matrix& centers,
                 std::span<const std::uint32_t> anchor_of, double eta, double beta);

/// Frozen teacher knowledge the student distils: cluster centers of the
/// teacher video embeddings and each training video's 1-NN center.
struct TeacherArtifacts {
  Matrix centers;
  std::vector<std::uint32_t> anchor_of;
};

struct StudentLoss {
  double recon = 0.0;
  double bsim = 0.0;
  double tsim = 0.0;
  double total = 0.0;
};

struct StudentGradient {
  StudentLoss loss;
  StudentParams grads;
};

/// L = L_recon + γ1·L_bsim + γ2·L_tsim on one batch. Reconstruction covers
/// the batch videos; pair endpoints outside the batch are forwarded for the
/// pair terms only. Pair indices are training-set indices.
StudentGradient student_loss_and_grad(const StudentParams& p, std::span<const Matrix> videos,
                                      std::span<const std::uint32_t> batch,
                                      std::span<const PairSample> pairs,
                                      const TeacherArtifacts& teacher, const LossWeights& w,
                                      DecoderInput input = DecoderInput::kDualStream,
                                      SignGradient sign_grad = SignGradient::kStraightThrough);

/// One Adam update. Pairs are drawn from `graph` within the batch unless
/// γ1 = γ2 = 0, in which case no graph is needed.
StudentLoss student_step(StudentParams& p, Adam& optimizer, std::span<const Matrix> videos,
                         std::span<const std::uint32_t> batch, const SignedGraph* graph,
                         const TeacherArtifacts& teacher, const LossWeights& w,
                         std::size_t pair_count, DecoderInput input, Rng& rng);

struct StudentTrainConfig {
  std::size_t bits = 64;
  std::size_t epochs = 48;
  std::size_t batch_size = 256;
  std::size_t pairs_per_batch = 0;  // 0 means one pair per batch video
  std::uint64_t seed = 2;
  LossWeights weights;
  DecoderInput input = DecoderInput::kDualStream;
};

struct EpochLog {
  std::size_t epoch = 0;
  StudentLoss loss;  // averaged over the epoch's batches
};

struct StudentTrainResult {
  StudentParams params;
  std::vector<EpochLog> log;
};

StudentTrainResult train_student(std::span<const Matrix> videos, const EncoderConfig& config,
                                 const SignedGraph* graph, const TeacherArtifacts& teacher,
                                 const StudentTrainConfig& train);

std::vector<BinaryCode> encode_videos(std::span<const Matrix> videos, const StudentParams& p);

/// Reconstruction MSE over `videos` with the given decoder input.
double reconstruction_error(std::span<const Matrix> videos, const StudentParams& p,
                            DecoderInput input);

struct StudentGradCheck {
  GradCheckReport report;
  StudentLoss loss;
  /// Names of the parameters left out of the check (the hash layer that
  /// feeds the sign).
  std::vector<std::string> excluded;
  std::size_t checked_parameters = 0;
};

/// Central-difference check of the full student loss on a seeded toy
/// instance: N=6 videos of 4×6 frames, d_model=8, K=8, a batch of four with
/// pair partners outside it. The sign layer uses its true (zero) derivative
/// and the hash-layer parameters are excluded.
StudentGradCheck check_student_gradients(std::uint64_t seed, double step = 1e-5);

}  // namespace dkph
