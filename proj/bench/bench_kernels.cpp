// Serial reference vs OpenMP kernels: agent best responses inside ADMM,
// the Nash-gap certificate, and the Monte Carlo covariance harness.

#include "mfg/coordination.hpp"
#include "mfg/scenario.hpp"
#include "mfg/verification.hpp"

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>

namespace {

double time_best(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best,
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void report(const char* name, double serial, double parallel) {
  std::printf("%-28s serial %9.4f s   parallel %9.4f s   speedup %5.2fx\n", name, serial,
              parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 400;
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 3;
  std::printf("threads=%d  N=%d  K=36  repeats=%d\n", omp_get_max_threads(), n, repeats);

  mfg::ScenarioConfig config;
  config.n_agents = n;
  const mfg::ProblemInstance inst = mfg::generate_fleet(config);
  const double rho = mfg::default_admm_penalty(inst);

  mfg::CoordinationOptions opts;
  opts.max_iter = 30;
  opts.tol = 1e-12;
  mfg::Solution sol;
  auto admm = [&](mfg::Execution exec) {
    opts.exec = exec;
    return time_best(repeats, [&] { sol = mfg::admm_solve(inst, rho, opts); });
  };
  const double admm_serial = admm(mfg::Execution::serial);
  report("admm (30 iterations)", admm_serial, admm(mfg::Execution::parallel));

  auto gap = [&](mfg::Execution exec) {
    return time_best(repeats, [&] { mfg::epsilon_nash_gap(inst, sol, opts.qp, exec); });
  };
  const double gap_serial = gap(mfg::Execution::serial);
  report("nash gap certificate", gap_serial, gap(mfg::Execution::parallel));

  auto lemma = [&](mfg::Execution exec) {
    mfg::Lemma1Options o;
    o.exec = exec;
    return time_best(repeats, [&] { mfg::lemma1_bound_estimate(1.0, 1.0, 1000, 10000, 7, o); });
  };
  const double lemma_serial = lemma(mfg::Execution::serial);
  report("covariance monte carlo", lemma_serial, lemma(mfg::Execution::parallel));
  return 0;
}
