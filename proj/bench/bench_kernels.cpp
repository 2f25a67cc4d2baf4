#include <benchmark/benchmark.h>

#include "weakrec/kernels.hpp"
#include "weakrec/sensing.hpp"

using namespace weakrec;

namespace {

template <class S>
struct Fixture {
  GaussianEnsemble<S> e;
  Eigen::VectorXd w;
  Vec<S> v;
  Eigen::MatrixXd W;
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> V;
  Fixture(Eigen::Index n, Eigen::Index d) {
    Rng rng = make_rng(1);
    e = GaussianEnsemble<S>::sample(n, d, rng);
    w = Eigen::VectorXd::Random(n);
    v = Vec<S>::Random(d);
    W = Eigen::MatrixXd::Random(n, 4);
    V = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>::Random(d, 4);
  }
};

template <class S, bool Omp>
void BM_weighted_gram(benchmark::State& st) {
  const Eigen::Index d = st.range(0);
  Fixture<S> f(4 * d, d);
  const auto a = kernels::rows<S>(f.e.matrix(), f.e.n());
  Vec<S> out;
  for (auto _ : st) {
    if constexpr (Omp)
      kernels::weighted_gram_omp<S>(a, f.w, f.v, out);
    else
      kernels::weighted_gram_serial<S>(a, f.w, f.v, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetBytesProcessed(st.iterations() * f.e.n() * d * static_cast<long>(sizeof(S)));
}

template <class S, bool Omp>
void BM_weighted_gram_block(benchmark::State& st) {
  const Eigen::Index d = st.range(0);
  Fixture<S> f(4 * d, d);
  const auto a = kernels::rows<S>(f.e.matrix(), f.e.n());
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> out;
  for (auto _ : st) {
    if constexpr (Omp)
      kernels::weighted_gram_block_omp<S>(a, f.W, f.V, out);
    else
      kernels::weighted_gram_block_serial<S>(a, f.W, f.V, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetBytesProcessed(st.iterations() * f.e.n() * d * static_cast<long>(sizeof(S)));
}

}  // namespace

BENCHMARK(BM_weighted_gram<double, false>)->Arg(512)->Arg(2048);
BENCHMARK(BM_weighted_gram<double, true>)->Arg(512)->Arg(2048);
BENCHMARK(BM_weighted_gram<cplx, false>)->Arg(512)->Arg(2048);
BENCHMARK(BM_weighted_gram<cplx, true>)->Arg(512)->Arg(2048);
BENCHMARK(BM_weighted_gram_block<cplx, false>)->Arg(1024);
BENCHMARK(BM_weighted_gram_block<cplx, true>)->Arg(1024);

BENCHMARK_MAIN();
