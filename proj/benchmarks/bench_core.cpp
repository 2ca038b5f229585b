#include <benchmark/benchmark.h>

#include <random>

#include "privprof/clustering.hpp"
#include "privprof/corpus.hpp"
#include "privprof/recommender.hpp"
#include "privprof/similarity.hpp"

namespace {

using namespace privprof;

Dataset planted(std::size_t users, std::size_t width) {
  SyntheticSpec spec;
  spec.n_users = users;
  spec.catalog_width = width;
  spec.seed = 1;
  return generate_synthetic(spec).dataset;
}

void BM_SimilarityMatrix(benchmark::State& state) {
  const auto d = planted(static_cast<std::size_t>(state.range(0)), 135);
  for (auto _ : state) benchmark::DoNotOptimize(similarity_matrix(d));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SimilarityMatrix)->RangeMultiplier(2)->Range(64, 1024)->Complexity(benchmark::oNSquared);

void BM_KMedoids(benchmark::State& state) {
  const auto d = distance_matrix(similarity_matrix(planted(static_cast<std::size_t>(state.range(0)), 135)));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(kmedoids(d, 3, seed++));
}
BENCHMARK(BM_KMedoids)->Arg(100)->Arg(300)->Arg(600);

void BM_KMedoidsAlternatingOnly(benchmark::State& state) {
  const auto d = distance_matrix(similarity_matrix(planted(static_cast<std::size_t>(state.range(0)), 135)));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(kmedoids(d, 3, seed++, 100, Refinement::kNone));
}
BENCHMARK(BM_KMedoidsAlternatingOnly)->Arg(100)->Arg(300)->Arg(600);

void BM_RecommendTopN(benchmark::State& state) {
  const auto d = planted(300, 135);
  std::vector<std::size_t> rows(100);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = 3 * i;
  const auto matrix = build_ratings_matrix(d, rows);
  std::mt19937_64 gen(7);
  PartialRow target;
  for (double a : d.users[1].answers) target.push_back(gen() % 3 == 0 ? to_cell(a) : Cell::kUnknown);
  for (auto _ : state) {
    benchmark::DoNotOptimize(recommend_top_n(matrix, target, static_cast<std::size_t>(state.range(0)), 50));
  }
}
BENCHMARK(BM_RecommendTopN)->Arg(3)->Arg(15);

}  // namespace

BENCHMARK_MAIN();
