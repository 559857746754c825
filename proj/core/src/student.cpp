#include "dkph/student.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <utility>

#include "dkph/errors.hpp"
#include "dkph/log.hpp"
#include "dkph/params.hpp"

namespace dkph {

namespace {

Matrix flatten(const Matrix& m) {
  return Matrix(1, m.size(), std::vector<double>(m.values().begin(), m.values().end()));
}

Matrix unflatten(const Matrix& flat, std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, std::vector<double>(flat.values().begin(), flat.values().end()));
}

void check_pair(const PairSample& s, std::size_t rows) {
  if (s.i >= rows || s.j >= rows) throw ShapeError("pair index outside the code matrix");
  if (s.label != 1 && s.label != -1) throw DomainError("pair label must be +1 or -1");
}

}  // namespace

StudentParams StudentParams::init(const EncoderConfig& config, std::size_t bits, Rng& rng) {
  if (bits == 0) throw DomainError("StudentParams: code length must be positive");
  StudentParams p;
  p.encoder = EncoderParams::init(config, rng);
  p.hash = Linear::init(config.frame_count * config.model_dim, bits, rng);
  p.temporal = Linear::init(config.model_dim, bits, rng);
  p.decoder = Linear::init(bits, config.input_dim, rng);
  return p;
}

StudentForward student_forward(const Matrix& x, const StudentParams& p, DecoderInput input) {
  StudentForward fwd;
  fwd.input = input;
  EncoderForward enc = encode_forward(x, p.encoder);
  const Matrix& t = enc.embeddings.frames;

  fwd.pre_code = p.hash.apply(flatten(t));
  fwd.relaxed = tanh(fwd.pre_code);
  fwd.code = BinaryCode::from_signs(fwd.relaxed.values());
  fwd.latent = p.temporal.apply(t);

  const Matrix code_row = fwd.code.as_row();
  switch (input) {
    case DecoderInput::kDualStream:
      fwd.mixed = add_row_broadcast(fwd.latent, code_row);
      break;
    case DecoderInput::kCodeOnly:
      fwd.mixed = add_row_broadcast(Matrix(t.rows(), p.bits()), code_row);
      break;
    case DecoderInput::kLatentOnly:
      fwd.mixed = fwd.latent;
      break;
    case DecoderInput::kLatentMean: {
      const Matrix mean = row_mean(fwd.latent);
      fwd.mixed = add_row_broadcast(Matrix(t.rows(), p.bits()), add(mean, code_row));
      break;
    }
  }
  fwd.recon = p.decoder.apply(fwd.mixed);
  fwd.embeddings = std::move(enc.embeddings);
  fwd.cache = std::move(enc.cache);
  return fwd;
}

double student_recon_loss(std::span<const Matrix> x, std::span<const Matrix> recon) {
  if (x.size() != recon.size()) throw ShapeError("student_recon_loss: batch size mismatch");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!x[i].same_shape(recon[i])) throw ShapeError("student_recon_loss: shape mismatch");
    total += squared_norm(sub(x[i], recon[i]));
    count += x[i].size();
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

void LossWeights::validate() const {
  for (double v : {gamma1, gamma2, eta, beta, lambda1, lambda2, bandwidth, learning_rate,
                   mask_ratio}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("loss weights must be finite and non-negative");
  }
}

PairLoss bsim_loss_grad(std::span<const PairSample> pairs, const Matrix& codes) {
  if (pairs.empty()) throw DomainError("bsim_loss: no pairs");
  const double k = static_cast<double>(codes.cols());
  const double inv_pairs = 1.0 / static_cast<double>(pairs.size());
  PairLoss out{0.0, Matrix::zeros_like(codes)};
  for (const PairSample& s : pairs) {
    check_pair(s, codes.rows());
    const double a = s.label;
    auto ri = codes.row(s.i);
    auto rj = codes.row(s.j);
    double dot = 0.0;
    for (std::size_t b = 0; b < ri.size(); ++b) dot += ri[b] * rj[b];
    const double residual = a - dot / k;
    out.loss += std::abs(a) * residual * residual * inv_pairs;
    const double coeff = -2.0 * std::abs(a) * residual / k * inv_pairs;
    auto gi = out.grad.row(s.i);
    auto gj = out.grad.row(s.j);
    for (std::size_t b = 0; b < ri.size(); ++b) {
      gi[b] += coeff * rj[b];
      gj[b] += coeff * ri[b];
    }
  }
  return out;
}

double bsim_loss(std::span<const PairSample> pairs, const Matrix& codes) {
  return bsim_loss_grad(pairs, codes).loss;
}

PairLoss tsim_loss_grad(std::span<const PairSample> pairs, const Matrix& means,
                        const Matrix& centers, std::span<const std::uint32_t> anchor_of,
                        double eta, double beta) {
  if (pairs.empty()) throw DomainError("tsim_loss: no pairs");
  if (anchor_of.size() != means.rows()) throw ShapeError("tsim_loss: anchor_of per mean row");
  if (means.cols() != centers.cols()) throw ShapeError("tsim_loss: embedding dimension mismatch");
  const double inv_pairs = 1.0 / static_cast<double>(pairs.size());
  PairLoss out{0.0, Matrix::zeros_like(means)};
  for (const PairSample& s : pairs) {
    check_pair(s, means.rows());
    if (anchor_of[s.i] >= centers.rows() || anchor_of[s.j] >= centers.rows()) {
      throw ShapeError("tsim_loss: anchor index outside the center set");
    }
    const double a = s.label;
    auto t = means.row(s.i);
    auto ci = centers.row(anchor_of[s.i]);
    auto cj = centers.row(anchor_of[s.j]);
    const double pull = squared_distance(t, ci);
    const double push = squared_distance(t, cj);
    const double weight = eta * std::abs(a) * (1.0 - a);
    const double hinge = pull - push + beta;
    out.loss += (pull + weight * std::max(0.0, hinge)) * inv_pairs;

    auto g = out.grad.row(s.i);
    const bool active = weight != 0.0 && hinge > 0.0;
    for (std::size_t d = 0; d < t.size(); ++d) {
      double gd = 2.0 * (t[d] - ci[d]);
      if (active) gd += weight * 2.0 * (cj[d] - ci[d]);
      g[d] += gd * inv_pairs;
    }
  }
  return out;
}

double tsim_loss(std::span<const PairSample> pairs, const Matrix& means, const Matrix& centers,
                 std::span<const std::uint32_t> anchor_of, double eta, double beta) {
  return tsim_loss_grad(pairs, means, centers, anchor_of, eta, beta).loss;
}

StudentGradient student_loss_and_grad(const StudentParams& p, std::span<const Matrix> videos,
                                      std::span<const std::uint32_t> batch,
                                      std::span<const PairSample> pairs,
                                      const TeacherArtifacts& teacher, const LossWeights& w,
                                      DecoderInput input, SignGradient sign_grad) {
  if (batch.empty()) throw DomainError("student_loss_and_grad: empty batch");
  const bool use_pairs = !pairs.empty() && (w.gamma1 != 0.0 || w.gamma2 != 0.0);

  // Local ordering: batch members first, then pair partners from outside it.
  std::vector<std::uint32_t> members(batch.begin(), batch.end());
  std::unordered_map<std::uint32_t, std::uint32_t> local;
  for (std::size_t n = 0; n < members.size(); ++n) {
    if (members[n] >= videos.size()) throw DomainError("batch index outside the training set");
    if (!local.emplace(members[n], static_cast<std::uint32_t>(n)).second) {
      throw DomainError("duplicate video in batch");
    }
  }
  std::vector<PairSample> local_pairs;
  if (use_pairs) {
    for (const PairSample& s : pairs) {
      for (std::uint32_t v : {s.i, s.j}) {
        if (v >= videos.size()) throw DomainError("pair index outside the training set");
        if (local.emplace(v, static_cast<std::uint32_t>(members.size())).second) {
          members.push_back(v);
        }
      }
      local_pairs.push_back({local.at(s.i), local.at(s.j), s.label});
    }
  }

  std::vector<StudentForward> fwd;
  fwd.reserve(members.size());
  for (std::uint32_t v : members) fwd.push_back(student_forward(videos[v], p, input));

  const std::size_t frames = videos[members[0]].rows();
  const std::size_t dim = videos[members[0]].cols();
  const std::size_t bits = p.bits();
  const double recon_norm = 1.0 / static_cast<double>(dim * frames * batch.size());

  StudentGradient result{{}, zeros_like(p)};
  StudentLoss& loss = result.loss;

  Matrix d_relaxed(members.size(), bits);
  Matrix d_means(members.size(), p.encoder.config().model_dim);
  if (use_pairs) {
    Matrix relaxed(members.size(), bits);
    Matrix means(members.size(), d_means.cols());
    std::vector<std::uint32_t> anchors(members.size());
    for (std::size_t n = 0; n < members.size(); ++n) {
      std::copy(fwd[n].relaxed.values().begin(), fwd[n].relaxed.values().end(),
                relaxed.row(n).begin());
      std::copy(fwd[n].embeddings.mean.values().begin(), fwd[n].embeddings.mean.values().end(),
                means.row(n).begin());
      if (members[n] >= teacher.anchor_of.size()) throw DomainError("video has no teacher anchor");
      anchors[n] = teacher.anchor_of[members[n]];
    }
    PairLoss b = bsim_loss_grad(local_pairs, relaxed);
    PairLoss t = tsim_loss_grad(local_pairs, means, teacher.centers, anchors, w.eta, w.beta);
    loss.bsim = b.loss;
    loss.tsim = t.loss;
    axpy(d_relaxed, b.grad, w.gamma1);
    axpy(d_means, t.grad, w.gamma2);
  }

  for (std::size_t n = 0; n < members.size(); ++n) {
    const StudentForward& f = fwd[n];
    const Matrix& x = videos[members[n]];
    Matrix d_frames(frames, d_means.cols());
    Matrix d_code(1, bits);
    Matrix d_latent(frames, bits);

    if (n < batch.size()) {
      Matrix d_recon = sub(f.recon, x);
      loss.recon += squared_norm(d_recon) * recon_norm;
      for (double& v : d_recon.values()) v *= 2.0 * recon_norm;

      axpy(result.grads.decoder.weight, matmul_at_b(f.mixed, d_recon));
      axpy(result.grads.decoder.bias, column_sums(d_recon));
      const Matrix d_mixed = matmul_a_bt(d_recon, p.decoder.weight);
      const Matrix mixed_sum = column_sums(d_mixed);
      switch (input) {
        case DecoderInput::kDualStream:
          d_latent = d_mixed;
          d_code = mixed_sum;
          break;
        case DecoderInput::kCodeOnly:
          d_code = mixed_sum;
          break;
        case DecoderInput::kLatentOnly:
          d_latent = d_mixed;
          break;
        case DecoderInput::kLatentMean:
          d_code = mixed_sum;
          for (std::size_t m = 0; m < frames; ++m) {
            auto row = d_latent.row(m);
            for (std::size_t b = 0; b < bits; ++b) row[b] = mixed_sum(0, b) / static_cast<double>(frames);
          }
          break;
      }
    }

    // Hash stream: the code reaches the loss through sign (straight-through
    // or zero) and the pair losses consume the tanh relaxation directly.
    Matrix d_pre(1, bits);
    for (std::size_t b = 0; b < bits; ++b) {
      double g = d_relaxed(n, b);
      if (sign_grad == SignGradient::kStraightThrough) g += d_code(0, b);
      const double r = f.relaxed(0, b);
      d_pre(0, b) = g * (1.0 - r * r);
    }
    const Matrix& t = f.embeddings.frames;
    axpy(result.grads.hash.weight, matmul_at_b(flatten(t), d_pre));
    axpy(result.grads.hash.bias, d_pre);
    axpy(d_frames, unflatten(matmul_a_bt(d_pre, p.hash.weight), frames, t.cols()));

    // Temporal stream.
    axpy(result.grads.temporal.weight, matmul_at_b(t, d_latent));
    axpy(result.grads.temporal.bias, column_sums(d_latent));
    axpy(d_frames, matmul_a_bt(d_latent, p.temporal.weight));

    // Mean embedding (tsim) spreads evenly over frames.
    for (std::size_t m = 0; m < frames; ++m) {
      auto row = d_frames.row(m);
      for (std::size_t d = 0; d < row.size(); ++d) row[d] += d_means(n, d) / static_cast<double>(frames);
    }

    EncoderGrads enc = encode_backward(d_frames, f.cache, p.encoder);
    accumulate(result.grads.encoder, enc.params);
  }

  loss.total = loss.recon + w.gamma1 * loss.bsim + w.gamma2 * loss.tsim;
  return result;
}

StudentLoss student_step(StudentParams& p, Adam& optimizer, std::span<const Matrix> videos,
                         std::span<const std::uint32_t> batch, const SignedGraph* graph,
                         const TeacherArtifacts& teacher, const LossWeights& w,
                         std::size_t pair_count, DecoderInput input, Rng& rng) {
  std::vector<PairSample> pairs;
  if (w.gamma1 != 0.0 || w.gamma2 != 0.0) {
    if (graph == nullptr) throw DomainError("student_step: similarity losses need a graph");
    try {
      pairs = sample_pairs(*graph, batch, std::max<std::size_t>(pair_count, 1), rng).pairs;
    } catch (const SamplingError&) {
      // Every batch member is isolated in the graph; this step only reconstructs.
      log::warn("student_step: batch has no labelled pairs, similarity losses skipped");
    }
  }
  StudentGradient g = student_loss_and_grad(p, videos, batch, pairs, teacher, w, input);
  if (!std::isfinite(g.loss.total)) throw TrainingError("student loss is not finite", 0);
  optimizer.step(param_refs(p), param_refs(std::as_const(g.grads)));
  return g.loss;
}

StudentTrainResult train_student(std::span<const Matrix> videos, const EncoderConfig& config,
                                 const SignedGraph* graph, const TeacherArtifacts& teacher,
                                 const StudentTrainConfig& train) {
  if (videos.empty()) throw DomainError("train_student: empty dataset");
  if (train.batch_size == 0) throw DomainError("train_student: batch size must be positive");
  train.weights.validate();

  Rng rng(train.seed);
  Rng init_rng = rng.split();
  StudentTrainResult result{StudentParams::init(config, train.bits, init_rng), {}};
  Adam adam({.learning_rate = train.weights.learning_rate});

  std::vector<std::uint32_t> order(videos.size());
  std::iota(order.begin(), order.end(), 0U);
  for (std::size_t epoch = 1; epoch <= train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    EpochLog entry{epoch, {}};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
      const std::size_t end = std::min(order.size(), start + train.batch_size);
      const std::span<const std::uint32_t> batch(order.data() + start, end - start);
      const std::size_t pair_count = train.pairs_per_batch == 0 ? batch.size() : train.pairs_per_batch;
      StudentLoss l;
      try {
        l = student_step(result.params, adam, videos, batch, graph, teacher, train.weights,
                         pair_count, train.input, rng);
      } catch (const TrainingError&) {
        throw TrainingError("student loss is not finite", epoch);
      }
      entry.loss.recon += l.recon;
      entry.loss.bsim += l.bsim;
      entry.loss.tsim += l.tsim;
      entry.loss.total += l.total;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    entry.loss.recon *= inv;
    entry.loss.bsim *= inv;
    entry.loss.tsim *= inv;
    entry.loss.total *= inv;
    result.log.push_back(entry);
  }
  return result;
}

std::vector<BinaryCode> encode_videos(std::span<const Matrix> videos, const StudentParams& p) {
  std::vector<BinaryCode> codes;
  codes.reserve(videos.size());
  for (const Matrix& x : videos) {
    const EncoderForward enc = encode_forward(x, p.encoder);
    codes.push_back(BinaryCode::from_signs(p.hash.apply(flatten(enc.embeddings.frames)).values()));
  }
  return codes;
}

double reconstruction_error(std::span<const Matrix> videos, const StudentParams& p,
                            DecoderInput input) {
  double total = 0.0;
  std::size_t count = 0;
  for (const Matrix& x : videos) {
    const StudentForward f = student_forward(x, p, input);
    total += squared_norm(sub(f.recon, x));
    count += x.size();
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

StudentGradCheck check_student_gradients(std::uint64_t seed, double step) {
  constexpr std::size_t kVideos = 6;
  constexpr std::size_t kFrames = 4;
  constexpr std::size_t kDim = 6;
  constexpr std::size_t kBits = 8;
  Rng rng(seed);
  std::vector<Matrix> videos;
  for (std::size_t v = 0; v < kVideos; ++v) videos.push_back(normal_matrix(kFrames, kDim, 1.0, rng));
  StudentParams p = StudentParams::init(EncoderConfig{kFrames, kDim, 8, 16}, kBits, rng);
  TeacherArtifacts teacher{normal_matrix(3, 8, 1.0, rng), {0, 1, 2, 0, 1, 2}};
  const std::vector<std::uint32_t> batch = {0, 1, 2, 3};
  const std::vector<PairSample> pairs = {{0, 1, 1}, {1, 4, -1}, {2, 5, 1}, {3, 0, -1}};
  LossWeights w;

  StudentGradCheck out;
  const auto loss = [&] {
    return student_loss_and_grad(p, videos, batch, pairs, teacher, w, DecoderInput::kDualStream,
                                 SignGradient::kZero)
        .loss.total;
  };
  StudentGradient g = student_loss_and_grad(p, videos, batch, pairs, teacher, w,
                                            DecoderInput::kDualStream, SignGradient::kZero);
  out.loss = g.loss;

  std::vector<Matrix*> params;
  std::vector<const Matrix*> analytic;
  p.for_each([&](const std::string& name, Matrix& m) {
    if (name.rfind("hash.", 0) == 0) {
      out.excluded.push_back(name);
    } else {
      params.push_back(&m);
    }
  });
  std::as_const(g.grads).for_each([&](const std::string& name, const Matrix& m) {
    if (name.rfind("hash.", 0) != 0) analytic.push_back(&m);
  });
  out.checked_parameters = params.size();
  out.report = finite_diff_check(loss, params, analytic, step);
  return out;
}

}  // namespace dkph
