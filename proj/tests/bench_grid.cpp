// ad-hoc timing harness for the (structure, G) grid; not registered in ctest
#include <chrono>
#include <cstdio>

#include "tvprof/averaging.hpp"
#include "tvprof/features.hpp"
#include "tvprof/gmm.hpp"
#include "tvprof/ingest.hpp"
#include "tvprof/pipeline.hpp"
#include "tvprof/synth.hpp"

using namespace tvprof;
using Clock = std::chrono::steady_clock;

int main() {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const auto specs = make_default_specs(1, {2021, 1}, 1, 3, 0.0, 7);
  const auto data = gen_sessions(specs, 7);
  const auto groups = group_by_household_month(data.sessions);
  const auto fm = build_feature_matrix(groups[0], AggregationRule{});
  const Eigen::MatrixXd x = standardize(fm.values).values;
  std::printf("matrix: %ld x %ld\n", static_cast<long>(x.rows()),
              static_cast<long>(x.cols()));

  EmConfig em;
  for (int p = 0; p < kNumStructures; ++p) {
    const auto t0 = Clock::now();
    long iters = 0;
    int fails = 0;
    for (int g = 1; g <= 15 && g < x.rows(); ++g) {
      try {
        const auto c0 = Clock::now();
        const auto fit = em_fit(x, g, kAllStructures[static_cast<std::size_t>(p)], em,
                                mix64(7, static_cast<std::uint64_t>(p * 100 + g)));
        iters += fit.iterations;
        fails += fit.failed ? 1 : 0;
        const double cms =
            std::chrono::duration<double, std::milli>(Clock::now() - c0).count();
        if (cms > 200.0)
          std::printf("  slow %s G=%d: %.0f ms, %d iters, failed=%d\n",
                      structure_name(kAllStructures[static_cast<std::size_t>(p)]), g,
                      cms, fit.iterations, fit.failed ? 1 : 0);
      } catch (const std::exception& e) {
        std::printf("  THROW %s G=%d: %s\n",
                    structure_name(kAllStructures[static_cast<std::size_t>(p)]), g,
                    e.what());
        std::fflush(stdout);
      }
    }
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    std::printf("%s: %8.1f ms  (best-restart iters %ld, failed %d)\n",
                structure_name(kAllStructures[static_cast<std::size_t>(p)]), ms,
                iters, fails);
  }
  return 0;
}
