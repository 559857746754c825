#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "dkph/binary_code.hpp"
#include "dkph/encoder.hpp"
#include "dkph/graph.hpp"
#include "dkph/numerics.hpp"
#include "dkph/retrieval.hpp"
#include "dkph/student.hpp"

namespace {

using namespace dkph;

BinaryCode random_code(std::size_t bits, Rng& rng) {
  std::vector<std::int8_t> b(bits);
  for (auto& v : b) v = rng.coin() ? 1 : -1;
  return BinaryCode(std::move(b));
}

void BM_HammingPacked(benchmark::State& state) {
  Rng rng(1);
  const std::size_t bits = static_cast<std::size_t>(state.range(0));
  const auto a = random_code(bits, rng).pack();
  const auto b = random_code(bits, rng).pack();
  for (auto _ : state) benchmark::DoNotOptimize(hamming_packed(a, b));
}
BENCHMARK(BM_HammingPacked)->Arg(16)->Arg(64)->Arg(256);

void BM_QueryTopk(benchmark::State& state) {
  Rng rng(2);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<BinaryCode> db;
  for (std::size_t i = 0; i < n; ++i) db.push_back(random_code(64, rng));
  const CodeIndex index(db);
  const BinaryCode q = random_code(64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(query_topk(index, q, 100));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_QueryTopk)->Arg(1000)->Arg(100000);

void BM_StudentForward(benchmark::State& state) {
  Rng rng(3);
  const EncoderConfig config{25, 64, static_cast<std::size_t>(state.range(0)),
                             2 * static_cast<std::size_t>(state.range(0))};
  const StudentParams p = StudentParams::init(config, 64, rng);
  const Matrix x = normal_matrix(25, 64, 1.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(student_forward(x, p));
}
BENCHMARK(BM_StudentForward)->Arg(32)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_AdjacencyRow(benchmark::State& state) {
  Rng rng(4);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const Matrix points = normal_matrix(n, 16, 1.0, rng);
  const AnchorSet anchors = kmeans(points, 100, 5, 20);
  const AnchorGraph graph(
      build_affinity(points, anchors.centers, 10, default_bandwidth(points, anchors.centers, 10)));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(adjacency_row(i, graph));
    i = (i + 1) % n;
  }
}
BENCHMARK(BM_AdjacencyRow)->Arg(2000)->Arg(20000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
