#include "fedmmx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fedmmx/numeric.hpp"

namespace fedmmx {

double explanation_consistency(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("explanation_consistency: length mismatch");
    if (a.empty()) throw std::invalid_argument("explanation_consistency: empty vectors");
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        norm_a += a[i] * a[i];
        norm_b += b[i] * b[i];
    }
    norm_a = std::sqrt(norm_a);
    norm_b = std::sqrt(norm_b);
    if (norm_a < 1e-12 || norm_b < 1e-12) return 0.0;
    return dot / (norm_a * norm_b);
}

double rescale_ec(double ec) { return (1.0 + ec) / 2.0; }

namespace {

// Mean pairwise cosine between the class-aggregate explanation vectors of one
// sample; empty when the sample exposes fewer than two modalities.
std::optional<double> sample_ec(const NamParams& params, const Sample& sample) {
    const auto available = sample.available_modalities();
    if (available.size() < 2) return std::nullopt;
    const auto attr = attribution(params, sample, available);
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < attr.class_totals.size(); ++i) {
        for (std::size_t j = i + 1; j < attr.class_totals.size(); ++j) {
            sum += explanation_consistency(attr.class_totals[i], attr.class_totals[j]);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

double sample_faithfulness(const NamParams& params, const Sample& sample,
                           double mask_fraction, double mask_value) {
    const auto available = sample.available_modalities();
    const auto fwd = forward(params, sample, available);
    const auto p = softmax(fwd.fused);
    const std::size_t predicted = argmax(p);
    const double p0 = p[predicted];

    const auto attr = attribution(params, sample, available);
    Sample masked = sample;
    for (std::size_t i = 0; i < available.size(); ++i) {
        const int m = available[i];
        const int dim = params.layout().modalities[m].dim;
        std::vector<int> order(dim);
        std::iota(order.begin(), order.end(), 0);
        // |contribution to predicted class| descending, ties by feature index.
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return std::abs(attr.contributions[i][a * params.layout().classes + predicted]) >
                   std::abs(attr.contributions[i][b * params.layout().classes + predicted]);
        });
        const int n_mask = std::min(dim, guarded_ceil(mask_fraction * dim));
        for (int r = 0; r < n_mask; ++r) masked.features[m][order[r]] = mask_value;
    }

    const auto fwd_masked = forward(params, masked, available);
    const double p1 = softmax(fwd_masked.fused)[predicted];
    return faithfulness_sample_score(p0, p1);
}

}  // namespace

double faithfulness_sample_score(double p0, double p1) {
    return clamp01((p0 - p1) / std::max(p0, 1e-12));
}

EcResult dataset_ec(const NamParams& params, std::span<const Sample> dataset) {
    EcResult result;
    double sum = 0.0;
    for (const auto& sample : dataset) {
        const auto ec = sample_ec(params, sample);
        if (ec.has_value()) {
            sum += *ec;
            ++result.eligible;
        } else {
            ++result.skipped;
        }
    }
    if (result.eligible > 0) result.mean = sum / static_cast<double>(result.eligible);
    return result;
}

double faithfulness(const NamParams& params, std::span<const Sample> dataset,
                    double mask_fraction, double mask_value) {
    if (dataset.empty()) throw std::invalid_argument("faithfulness: empty dataset");
    if (mask_fraction <= 0.0 || mask_fraction > 1.0)
        throw std::invalid_argument("faithfulness: mask_fraction must be in (0, 1]");
    double sum = 0.0;
    for (const auto& sample : dataset) {
        sum += sample_faithfulness(params, sample, mask_fraction, mask_value);
    }
    return sum / static_cast<double>(dataset.size());
}

double ece(const std::vector<double>& confidences, const std::vector<bool>& correct,
           int num_bins) {
    if (confidences.size() != correct.size())
        throw std::invalid_argument("ece: length mismatch");
    if (confidences.empty()) throw std::invalid_argument("ece: empty input");
    if (num_bins < 1) throw std::invalid_argument("ece: num_bins must be >= 1");

    std::vector<std::size_t> count(num_bins, 0);
    std::vector<double> conf_sum(num_bins, 0.0);
    std::vector<double> acc_sum(num_bins, 0.0);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        const double c = confidences[i];
        if (c < 0.0 || c > 1.0) throw std::invalid_argument("ece: confidence outside [0,1]");
        const int bin = std::min(static_cast<int>(c * num_bins), num_bins - 1);
        ++count[bin];
        conf_sum[bin] += c;
        acc_sum[bin] += correct[i] ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(confidences.size());
    double result = 0.0;
    for (int b = 0; b < num_bins; ++b) {
        if (count[b] == 0) continue;
        const double nb = static_cast<double>(count[b]);
        result += (nb / n) * std::abs(acc_sum[b] / nb - conf_sum[b] / nb);
    }
    return result;
}

double predictive_entropy(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("predictive_entropy: empty input");
    double sum = 0.0;
    for (const double p : probs) {
        if (p < 0.0) throw std::invalid_argument("predictive_entropy: negative probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("predictive_entropy: probabilities must sum to 1");
    double h = 0.0;
    for (const double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

MetricReport evaluate(const NamParams& params, std::span<const Sample> dataset,
                      const EvalOptions& options) {
    if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");

    MetricReport report;
    report.samples = dataset.size();

    std::vector<double> confidences;
    std::vector<bool> correct;
    confidences.reserve(dataset.size());
    correct.reserve(dataset.size());

    std::size_t hits = 0;
    double entropy_sum = 0.0;
    double ec_sum = 0.0;

    for (const auto& sample : dataset) {
        const auto available = sample.available_modalities();
        const auto fwd = forward(params, sample, available);
        const auto p = softmax(fwd.fused);
        const std::size_t predicted = argmax(p);
        const bool hit = static_cast<int>(predicted) == sample.label;
        hits += hit ? 1 : 0;
        confidences.push_back(p[predicted]);
        correct.push_back(hit);
        entropy_sum += predictive_entropy(p);

        const auto ec = sample_ec(params, sample);
        if (ec.has_value()) {
            ec_sum += *ec;
            ++report.ec_eligible;
        } else {
            ++report.ec_skipped;
        }
    }

    report.accuracy = static_cast<double>(hits) / static_cast<double>(dataset.size());
    report.mean_entropy = entropy_sum / static_cast<double>(dataset.size());
    report.ece = ece(confidences, correct, options.ece_bins);
    if (report.ec_eligible > 0) report.ec = ec_sum / static_cast<double>(report.ec_eligible);
    report.fs = faithfulness(params, dataset, options.mask_fraction, options.mask_value);
    return report;
}

}  // namespace fedmmx
