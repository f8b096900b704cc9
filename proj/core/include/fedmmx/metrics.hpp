#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fedmmx/nam.hpp"

namespace fedmmx {

struct EvalOptions {
    double mask_fraction = 0.2;
    double mask_value = 0.0;
    int ece_bins = 10;
};

struct MetricReport {
    double accuracy = 0.0;
    std::optional<double> ec;  // empty when no sample exposes >= 2 modalities
    double fs = 0.0;
    double ece = 0.0;
    double mean_entropy = 0.0;
    std::size_t samples = 0;
    std::size_t ec_eligible = 0;
    std::size_t ec_skipped = 0;
};

// Cosine similarity; 0 when either vector has norm < 1e-12. Throws on length
// mismatch or empty input.
double explanation_consistency(std::span<const double> a, std::span<const double> b);

struct EcResult {
    std::optional<double> mean;  // empty when no eligible samples
    std::size_t eligible = 0;
    std::size_t skipped = 0;
};

// Mean over samples (>= 2 available modalities) of the mean pairwise cosine
// between class-aggregate explanation vectors.
EcResult dataset_ec(const NamParams& params, std::span<const Sample> dataset);

double faithfulness_sample_score(double p0, double p1);

// Perturbation faithfulness: mask the ceil(mask_fraction * d_m) features with
// the largest |contribution to the predicted class| per modality, measure the
// relative drop of the predicted-class fused probability.
double faithfulness(const NamParams& params, std::span<const Sample> dataset,
                    double mask_fraction, double mask_value = 0.0);

// Expected calibration error over equal-width bins on [0,1]; the last bin is
// right-inclusive.
double ece(const std::vector<double>& confidences, const std::vector<bool>& correct,
           int num_bins);

// Shannon entropy -sum p ln p with 0 ln 0 := 0. Input must be a distribution
// (entries >= 0, sum within 1e-9 of 1).
double predictive_entropy(std::span<const double> probs);

// Full evaluation pass over a dataset: accuracy, EC, FS, ECE, mean entropy.
MetricReport evaluate(const NamParams& params, std::span<const Sample> dataset,
                      const EvalOptions& options = {});

// (1 + cosine)/2, the [0,1] rescaling used for trust components and exports.
double rescale_ec(double ec);

}  // namespace fedmmx
