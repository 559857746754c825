#include <doctest.h>

#include <cmath>
#include <vector>

#include "dkph/binary_code.hpp"
#include "dkph/errors.hpp"
#include "dkph/gradcheck.hpp"
#include "dkph/params.hpp"
#include "dkph/student.hpp"

using namespace dkph;

namespace {

const EncoderConfig kToy{4, 6, 8, 16};

StudentParams toy_student(std::uint64_t seed, std::size_t bits = 8) {
  Rng rng(seed);
  return StudentParams::init(kToy, bits, rng);
}

std::vector<Matrix> toy_videos(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Matrix> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(normal_matrix(4, 6, 1.0, rng));
  return v;
}

}  // namespace

TEST_SUITE("student") {

TEST_CASE("BinaryCode packing") {
  SUBCASE("bit layout") {
    const BinaryCode c({1, -1, -1, -1, -1, -1, -1, 1, -1, 1});
    const auto packed = c.pack();
    REQUIRE(packed.size() == 2);
    CHECK(packed[0] == 0x81);
    CHECK(packed[1] == 0x02);
  }
  SUBCASE("round trip") {
    Rng rng(1);
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<std::int8_t> bits(1 + rng.index(130));
      for (auto& b : bits) b = rng.coin() ? 1 : -1;
      const BinaryCode c(bits);
      CHECK(BinaryCode::unpack(c.pack(), c.size()) == c);
    }
  }
  SUBCASE("only +-1 is accepted") {
    CHECK_THROWS_AS(BinaryCode({1, 0, -1}), DomainError);
    CHECK(BinaryCode::from_signs(std::vector<double>{0.0, -0.0, -1e-300}) == BinaryCode({1, 1, -1}));
  }
}

TEST_CASE("zero hash layer gives the all +1 code") {
  StudentParams p = toy_student(2);
  p.hash.weight.fill(0.0);
  p.hash.bias.fill(0.0);
  const StudentForward f = student_forward(toy_videos(1, 3)[0], p);
  CHECK(f.pre_code == Matrix(1, 8));
  for (std::int8_t b : f.code.bits()) CHECK(b == 1);
}

TEST_CASE("zero temporal layer makes every frame reconstruction equal") {
  StudentParams p = toy_student(4);
  p.temporal.weight.fill(0.0);
  p.temporal.bias.fill(0.0);
  const StudentForward f = student_forward(toy_videos(1, 5)[0], p);
  for (std::size_t m = 1; m < 4; ++m)
    for (std::size_t j = 0; j < 6; ++j) CHECK(f.recon(m, j) == f.recon(0, j));
}

TEST_CASE("forward matches a step-by-step reference") {
  const StudentParams p = toy_student(6);
  const Matrix x = toy_videos(1, 7)[0];
  const Matrix t = encode_forward(x, p.encoder).embeddings.frames;
  for (DecoderInput input : {DecoderInput::kDualStream, DecoderInput::kCodeOnly,
                             DecoderInput::kLatentOnly, DecoderInput::kLatentMean}) {
    const StudentForward f = student_forward(x, p, input);
    std::vector<double> code(8);
    for (std::size_t k = 0; k < 8; ++k) {
      double pre = p.hash.bias(0, k);
      for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t j = 0; j < 8; ++j) pre += t(m, j) * p.hash.weight(m * 8 + j, k);
      CHECK(f.pre_code(0, k) == doctest::Approx(pre).epsilon(1e-13));
      code[k] = std::tanh(pre) >= 0.0 ? 1.0 : -1.0;
      CHECK(f.code[k] == code[k]);
    }
    std::vector<std::vector<double>> latent(4, std::vector<double>(8));
    std::vector<double> mean(8, 0.0);
    for (std::size_t m = 0; m < 4; ++m)
      for (std::size_t k = 0; k < 8; ++k) {
        latent[m][k] = p.temporal.bias(0, k);
        for (std::size_t j = 0; j < 8; ++j) latent[m][k] += t(m, j) * p.temporal.weight(j, k);
        mean[k] += latent[m][k] / 4.0;
      }
    for (std::size_t m = 0; m < 4; ++m) {
      for (std::size_t j = 0; j < 6; ++j) {
        double r = p.decoder.bias(0, j);
        for (std::size_t k = 0; k < 8; ++k) {
          double in = 0.0;
          switch (input) {
            case DecoderInput::kDualStream: in = latent[m][k] + code[k]; break;
            case DecoderInput::kCodeOnly: in = code[k]; break;
            case DecoderInput::kLatentOnly: in = latent[m][k]; break;
            case DecoderInput::kLatentMean: in = mean[k] + code[k]; break;
          }
          r += in * p.decoder.weight(k, j);
        }
        CHECK(f.recon(m, j) == doctest::Approx(r).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("student_recon_loss") {
  const std::vector<Matrix> x = toy_videos(3, 8);
  CHECK(student_recon_loss(x, x) == 0.0);
  std::vector<Matrix> shifted;
  for (const Matrix& v : x) shifted.push_back(add(v, Matrix(4, 6, 0.7)));
  CHECK(student_recon_loss(x, shifted) == doctest::Approx(0.49));
  const std::vector<Matrix> y = toy_videos(3, 9);
  double brute = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t t = 0; t < 24; ++t) brute += std::pow(x[i].values()[t] - y[i].values()[t], 2);
  CHECK(student_recon_loss(x, y) == doctest::Approx(brute / 72.0).epsilon(1e-14));
}

TEST_CASE("bsim_loss") {
  const Matrix codes = Matrix::from_rows({{1, 1, -1, -1}, {1, 1, -1, -1}, {-1, -1, 1, 1}, {1, -1, 1, -1}});
  CHECK(bsim_loss(std::vector<PairSample>{{0, 1, 1}}, codes) == 0.0);
  CHECK(bsim_loss(std::vector<PairSample>{{0, 2, 1}}, codes) == doctest::Approx(4.0));
  CHECK(bsim_loss(std::vector<PairSample>{{0, 3, -1}}, codes) == doctest::Approx(1.0));
  CHECK(bsim_loss(std::vector<PairSample>{{0, 2, 1}, {0, 3, -1}}, codes) == doctest::Approx(2.5));

  SUBCASE("symmetric in the pair order") {
    Rng rng(10);
    const Matrix r = dkph::tanh(normal_matrix(5, 8, 1.0, rng));
    for (int label : {1, -1}) {
      for (std::uint32_t i = 0; i < 5; ++i)
        for (std::uint32_t j = 0; j < 5; ++j)
          CHECK(bsim_loss(std::vector<PairSample>{{i, j, label}}, r) ==
                doctest::Approx(bsim_loss(std::vector<PairSample>{{j, i, label}}, r)));
    }
  }
  SUBCASE("gradient") {
    Rng rng(11);
    Matrix r = dkph::tanh(normal_matrix(4, 6, 1.0, rng));
    const std::vector<PairSample> pairs = {{0, 1, 1}, {2, 1, -1}, {3, 0, -1}, {2, 2, 1}};
    const Matrix grad = bsim_loss_grad(pairs, r).grad;
    Matrix* params[] = {&r};
    const Matrix* analytic[] = {&grad};
    CHECK(finite_diff_check([&] { return bsim_loss(pairs, r); }, params, analytic, 1e-6).max_rel_error < 1e-6);
  }
}

TEST_CASE("tsim_loss") {
  const Matrix centers = Matrix::from_rows({{0, 0}, {1, 1}, {0.5, 0.5}});
  const std::vector<std::uint32_t> anchor_of = {0, 1, 2};
  Matrix means = Matrix::from_rows({{0, 0}, {9, 9}, {3, 3}});
  CHECK(tsim_loss(std::vector<PairSample>{{0, 1, 1}}, means, centers, anchor_of, 0.1, 1.0) == 0.0);
  // ‖t̄_0 − c_1‖² = 2: the hinge is inactive.
  CHECK(tsim_loss(std::vector<PairSample>{{0, 1, -1}}, means, centers, anchor_of, 0.1, 1.0) == 0.0);
  // ‖t̄_0 − c_2‖² = 0.5: 0.1·2·[0 − 0.5 + 1] = 0.1.
  CHECK(tsim_loss(std::vector<PairSample>{{0, 2, -1}}, means, centers, anchor_of, 0.1, 1.0) ==
        doctest::Approx(0.1));

  SUBCASE("hinge is non-negative and vanishes with margin") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
      const Matrix m = normal_matrix(3, 2, 2.0, rng);
      const Matrix c = normal_matrix(3, 2, 2.0, rng);
      const std::vector<PairSample> pair = {{0, 1, -1}};
      const double pull = squared_distance(m.row(0), c.row(0));
      const double push = squared_distance(m.row(0), c.row(1));
      const double hinge = tsim_loss(pair, m, c, anchor_of, 0.1, 1.0) - pull;
      CHECK(hinge >= -1e-12);
      if (pull + 1.0 <= push) CHECK(std::abs(hinge) < 1e-12);
    }
  }
  SUBCASE("gradient") {
    Rng rng(13);
    Matrix m = normal_matrix(3, 2, 0.5, rng);
    const std::vector<PairSample> pairs = {{0, 1, -1}, {1, 2, 1}, {2, 0, -1}};
    const Matrix grad = tsim_loss_grad(pairs, m, centers, anchor_of, 0.1, 1.0).grad;
    Matrix* params[] = {&m};
    const Matrix* analytic[] = {&grad};
    CHECK(finite_diff_check([&] { return tsim_loss(pairs, m, centers, anchor_of, 0.1, 1.0); },
                            params, analytic, 1e-6)
              .max_rel_error < 1e-6);
  }
}

TEST_CASE("loss weight defaults") {
  const LossWeights w;
  CHECK(w.gamma1 == 0.11);
  CHECK(w.gamma2 == 0.9);
  CHECK(w.eta == 0.1);
  CHECK(w.lambda1 == 2.0);
  CHECK(w.lambda2 == 1.0);
  CHECK(w.learning_rate == 5e-4);
  LossWeights bad;
  bad.eta = -1.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("full loss passes the finite-difference check") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const StudentGradCheck gc = check_student_gradients(seed);
    INFO("seed " << seed << " error " << gc.report.max_rel_error);
    CHECK(gc.report.max_rel_error < 1e-4);
    CHECK(gc.excluded == std::vector<std::string>{"hash.weight", "hash.bias"});
    CHECK(gc.loss.bsim > 0.0);
    CHECK(gc.loss.tsim > 0.0);
  }
}

TEST_CASE("zero similarity weights reduce to the reconstruction gradient") {
  const StudentParams p = toy_student(14);
  const std::vector<Matrix> videos = toy_videos(6, 15);
  const std::vector<std::uint32_t> batch = {0, 1, 2};
  const std::vector<PairSample> pairs = {{0, 4, 1}, {1, 5, -1}};
  Rng rng(16);
  const TeacherArtifacts teacher{normal_matrix(2, 8, 1.0, rng), {0, 1, 0, 1, 0, 1}};
  LossWeights w;
  w.gamma1 = 0.0;
  w.gamma2 = 0.0;
  const StudentGradient with_pairs = student_loss_and_grad(p, videos, batch, pairs, teacher, w);
  const StudentGradient without = student_loss_and_grad(p, videos, batch, {}, teacher, w);
  CHECK(with_pairs.loss.total == without.loss.total);
  const auto a = param_refs(with_pairs.grads);
  const auto b = param_refs(without.grads);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);

  SUBCASE("sign-preserving changes to the pre-code leave the loss unchanged") {
    StudentParams q = p;
    double smallest = 1e9;
    for (std::uint32_t v : batch) {
      for (double t : student_forward(videos[v], p).pre_code.values()) smallest = std::min(smallest, std::abs(t));
    }
    for (double& bias : q.hash.bias.values()) bias += 0.5 * smallest;
    CHECK(student_loss_and_grad(q, videos, batch, {}, teacher, w).loss.total == without.loss.total);
  }
}

TEST_CASE("student_step") {
  StudentParams p = toy_student(17);
  const std::vector<Matrix> videos = toy_videos(6, 18);
  const std::vector<std::uint32_t> batch = {0, 1, 2, 3};
  Rng rng(19);
  const TeacherArtifacts teacher{normal_matrix(2, 8, 1.0, rng), {0, 1, 0, 1, 0, 1}};
  Adam adam;
  SUBCASE("similarity losses need a graph") {
    CHECK_THROWS_AS(student_step(p, adam, videos, batch, nullptr, teacher, LossWeights{}, 4,
                                 DecoderInput::kDualStream, rng),
                    DomainError);
  }
  SUBCASE("reconstruction-only steps run without one and reduce the loss") {
    LossWeights w;
    w.gamma1 = 0.0;
    w.gamma2 = 0.0;
    w.learning_rate = 1e-2;
    Adam fast({.learning_rate = 1e-2});
    const double first = student_step(p, fast, videos, batch, nullptr, teacher, w, 4,
                                      DecoderInput::kDualStream, rng).total;
    double last = first;
    for (int s = 0; s < 30; ++s) {
      last = student_step(p, fast, videos, batch, nullptr, teacher, w, 4, DecoderInput::kDualStream, rng).total;
    }
    CHECK(last < first);
  }
}

TEST_CASE("codes are always +-1") {
  const StudentParams p = toy_student(20, 13);
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const Matrix x = normal_matrix(4, 6, rng.uniform(0.0, 20.0), rng);
    const StudentForward f = student_forward(x, p);
    for (std::int8_t b : f.code.bits()) CHECK((b == 1 || b == -1));
  }
}

}  // TEST_SUITE
