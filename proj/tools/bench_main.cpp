// Compares the OpenMP histogram / permutation kernels against their serial
// reference implementations on synthetic data.

#include <chrono>
#include <cstdio>
#include <numeric>
#include <random>
#include <vector>

#include "essay_audit/boosting.hpp"
#include "essay_audit/fairness.hpp"
#include "essay_audit/rng.hpp"

using namespace essay_audit;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void bench_histograms() {
    const std::size_t n_rows = 100000, n_features = 100;
    auto rng = make_rng(42);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Matrix X(n_rows, n_features);
    for (double& v : X.data) v = uniform(rng);
    std::vector<double> g(n_rows), h(n_rows, 1.0);
    for (double& v : g) v = uniform(rng) - 0.5;

    gbm::Config config;
    gbm::Binned binned = gbm::bin_features(X, config);
    std::vector<std::size_t> offsets(n_features + 1, 0);
    for (std::size_t f = 0; f < n_features; ++f)
        offsets[f + 1] = offsets[f] + binned.map.features[f].total_bins();
    std::vector<std::uint32_t> rows(n_rows);
    std::iota(rows.begin(), rows.end(), 0u);

    std::vector<gbm::HistBin> out_serial(offsets.back()), out_parallel(offsets.back());
    const int reps = 20;

    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) {
        std::fill(out_serial.begin(), out_serial.end(), gbm::HistBin{});
        gbm::build_histograms_serial(binned.matrix, rows.data(), rows.data() + n_rows, g, h,
                                     offsets, out_serial);
    }
    double serial = seconds_since(t0) / reps;

    t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) {
        std::fill(out_parallel.begin(), out_parallel.end(), gbm::HistBin{});
        gbm::build_histograms(binned.matrix, rows.data(), rows.data() + n_rows, g, h, offsets,
                              out_parallel, true);
    }
    double parallel = seconds_since(t0) / reps;

    bool match = true;
    for (std::size_t i = 0; i < out_serial.size(); ++i)
        if (out_serial[i].sum_g != out_parallel[i].sum_g ||
            out_serial[i].count != out_parallel[i].count)
            match = false;

    std::printf("histogram build   %8zu x %3zu  serial %8.2f ms  omp %8.2f ms  speedup %.2fx  %s\n",
                n_rows, n_features, serial * 1e3, parallel * 1e3, serial / parallel,
                match ? "identical" : "MISMATCH");
}

void bench_permutation_test() {
    const std::size_t n = 5000;
    auto rng = make_rng(7);
    std::uniform_int_distribution<int> score(1, 6);
    std::uniform_int_distribution<int> coin(0, 1);

    Corpus corpus;
    std::vector<PredictionRecord> preds;
    for (std::size_t i = 0; i < n; ++i) {
        EssayRecord rec;
        rec.essay_id = "e" + std::to_string(i);
        rec.full_text = "x.";
        rec.holistic_score = score(rng);
        rec.demographics.gender = coin(rng) ? "M" : "F";
        rec.demographics.ell_status = coin(rng) ? "yes" : "no";
        PredictionRecord p;
        p.essay_id = rec.essay_id;
        p.true_score = rec.holistic_score;
        p.predicted_score = score(rng);
        corpus.records.push_back(std::move(rec));
        preds.push_back(std::move(p));
    }

    PermutationConfig serial_cfg{1000, 11, false};
    PermutationConfig parallel_cfg{1000, 11, true};

    auto t0 = std::chrono::steady_clock::now();
    RegressionFairnessResult rs = osa(preds, corpus, {"gender", "ell_status"}, serial_cfg);
    double serial = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    RegressionFairnessResult rp = osa(preds, corpus, {"gender", "ell_status"}, parallel_cfg);
    double parallel = seconds_since(t0);

    std::printf("permutation test  n=%zu B=1000      serial %8.2f ms  omp %8.2f ms  speedup %.2fx  %s\n",
                n, serial * 1e3, parallel * 1e3, serial / parallel,
                rs.permutation_p_value == rp.permutation_p_value ? "identical" : "MISMATCH");
}

}  // namespace

int main() {
    bench_histograms();
    bench_permutation_test();
    return 0;
}
