// Timings of the parallel/vectorized kernels against their serial references.
// Usage: mobiclr_bench [repeats]

#include "oracle.hpp"

#include "mobiclr/encoder.hpp"
#include "mobiclr/ingest.hpp"
#include "mobiclr/kernels.hpp"

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace mobiclr;

namespace {

double best_ms(int repeats, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

void report(const std::string& name, double fast, double ref) {
    std::cout << std::left << std::setw(34) << name << std::right << std::fixed << std::setprecision(2)
              << std::setw(10) << fast << " ms" << std::setw(10) << ref << " ms  x" << std::setprecision(1)
              << ref / fast << '\n';
}

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 5;
#ifdef _OPENMP
    std::cout << "threads: " << omp_get_max_threads() << '\n';
#endif
    std::cout << std::left << std::setw(34) << "kernel" << std::right << std::setw(13) << "fast" << std::setw(13)
              << "reference" << "  speedup\n";

    {
        const Mat x = random_mat(336, 128, 1);
        std::vector<Mat> taps;
        for (int j = 0; j < 3; ++j) taps.push_back(random_mat(128, 128, 2 + j));
        const Mat bias = random_mat(1, 128, 5);
        volatile double sink = 0;
        const double fast = best_ms(repeats, [&] { sink = sink + kernels::conv1d(x, taps, bias, 2)(0, 0); });
        const double ref = best_ms(repeats, [&] { sink = sink + kernels::conv1d_reference(x, taps, bias, 2)(0, 0); });
        report("conv1d T=336 C=128 d=2", fast, ref);
    }
    {
        const auto model = encoder::init_model(encoder::ModelConfig{}, 1);
        std::vector<Mat> xs;
        for (int i = 0; i < 16; ++i) xs.push_back(random_mat(336, 2, 10 + i));
        const auto& enc = model.encoder(encoder::Flow::Joint);
        const double fast = best_ms(repeats, [&] { encoder::encode_batch(xs, enc); });
        const double ref = best_ms(repeats, [&] { encoder::encode_batch_serial(xs, enc); });
        report("encode_batch 16 x T=336", fast, ref);
    }
    {
        std::vector<std::string> ids;
        for (int i = 0; i < 77; ++i) ids.push_back("r" + std::to_string(i));
        const ingest::RegionSet regions(ids);
        const ingest::Timestamp t0 = 1546819200;
        const auto trips = testkit::random_trips(1000000, 77, t0, 336, 3);
        const double fast = best_ms(repeats, [&] { ingest::bin_trips(trips, regions, t0, t0 + 336 * 3600); });
        const double ref = best_ms(repeats, [&] { ingest::bin_trips_serial(trips, regions, t0, t0 + 336 * 3600); });
        report("bin_trips 1e6 trips, 77 regions", fast, ref);
    }
}
