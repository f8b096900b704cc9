#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedmmx/dataset.hpp"
#include "fedmmx/rng.hpp"

namespace fedmmx {

// Multi-modal Neural Additive Model. Each (modality, feature) pair owns a
// 1 -> hidden -> classes perceptron with ReLU activation ("shape function");
// per-modality logits are bias + sum of shape-function outputs, and the fused
// prediction is the arithmetic mean of the per-modality logits over the
// modalities available on a sample.
//
// Parameter layout (modality-major, feature-major). Segment for modality m:
//   [ feature 0: w_in(H) | b_hidden(H) | w_out(H*C, row-major h*C+c) ]
//   [ feature 1: ... ] ... [ feature d_m-1: ... ] [ bias(C) ]
// flatten() concatenates the segments in layout order.
struct NamLayout {
    std::vector<ModalityDef> modalities;
    int hidden = 8;
    int classes = 2;

    std::size_t feature_block() const {
        return static_cast<std::size_t>(2 * hidden + hidden * classes);
    }
    std::size_t segment_size(std::size_t m) const {
        return static_cast<std::size_t>(modalities[m].dim) * feature_block() + classes;
    }
    std::size_t total_size() const {
        std::size_t n = 0;
        for (std::size_t m = 0; m < modalities.size(); ++m) n += segment_size(m);
        return n;
    }
    int modality_index(const std::string& id) const;
    void validate() const;

    bool operator==(const NamLayout&) const = default;
};

class NamParams {
public:
    NamParams() = default;
    explicit NamParams(NamLayout layout);  // zero-initialized

    // Weights uniform(-0.5, 0.5)/sqrt(fan_in), biases zero.
    static NamParams random_init(const NamLayout& layout, Rng& rng);

    const NamLayout& layout() const { return layout_; }

    std::span<double> segment(std::size_t m) { return segments_[m]; }
    std::span<const double> segment(std::size_t m) const { return segments_[m]; }

    // Shape-function blocks of feature j in modality m.
    std::span<double> w_in(std::size_t m, std::size_t j);
    std::span<const double> w_in(std::size_t m, std::size_t j) const;
    std::span<double> b_hidden(std::size_t m, std::size_t j);
    std::span<const double> b_hidden(std::size_t m, std::size_t j) const;
    std::span<double> w_out(std::size_t m, std::size_t j);  // H*C, row-major
    std::span<const double> w_out(std::size_t m, std::size_t j) const;
    std::span<double> bias(std::size_t m);
    std::span<const double> bias(std::size_t m) const;

    std::vector<double> flatten() const;
    static NamParams unflatten(const NamLayout& layout, std::span<const double> flat);

    // Half-open [begin, end) offsets of each modality segment in flatten() order.
    static std::vector<std::pair<std::size_t, std::size_t>> segment_bounds(const NamLayout& layout);

    bool all_finite() const;
    void fill(double value);

    bool operator==(const NamParams&) const = default;

private:
    NamLayout layout_;
    std::vector<std::vector<double>> segments_;
};

struct Hyperparams {
    double lambda1 = 0.5;     // consistency weight
    double lambda2 = 0.01;    // interpretability weight
    double tau = 2.0;         // distillation temperature
    double lr = 0.3;
    int local_epochs = 3;
    int batch_size = 16;

    void validate() const;
};

struct LossBreakdown {
    double pred = 0.0;
    double modal = 0.0;
    double intp = 0.0;
    double total = 0.0;  // pred + lambda1*modal + lambda2*intp
};

struct ForwardResult {
    std::vector<int> modalities;                       // available, ascending
    std::vector<std::vector<double>> modality_logits;  // parallel to modalities
    std::vector<double> fused;                         // mean of modality logits
};

// Per-modality additive contributions. contributions[i] is d_m x C row-major:
// entry [j*C + c] is shape function j's contribution to the class-c logit.
// class_totals[i][c] = sum_j contributions[i][j*C + c]; the per-modality logit
// decomposes exactly as bias[c] + class_totals[i][c].
struct Attribution {
    std::vector<int> modalities;
    std::vector<std::vector<double>> contributions;
    std::vector<std::vector<double>> class_totals;
};

ForwardResult forward(const NamParams& params, const Sample& sample,
                      std::span<const int> available);

Attribution attribution(const NamParams& params, const Sample& sample,
                        std::span<const int> available);

// Three-term objective over a batch (mean over samples):
//   pred  - cross-entropy of softmax(fused logits)
//   modal - mean over available modalities of tau^2 * KL(softmax(fused/tau) ||
//           softmax(z_m/tau)); 0 when exactly one modality is available
//   intp  - mean over (modality, feature, class) of squared contributions
// Gradients are exact analytic derivatives of total = pred + l1*modal + l2*intp
// (the distillation teacher is not detached). Gradient entries for modalities
// outside `available` are zero.
struct LossGrad {
    LossBreakdown loss;
    NamParams grad;
};

LossGrad loss_and_grad(const NamParams& params, std::span<const Sample> data,
                       std::span<const int> batch_indices, std::span<const int> available,
                       const Hyperparams& hyper);

// Loss only (no gradient allocation); same value as loss_and_grad().loss.
LossBreakdown loss_only(const NamParams& params, std::span<const Sample> data,
                        std::span<const int> batch_indices, std::span<const int> available,
                        const Hyperparams& hyper);

// p <- p - lr * g, elementwise; layouts must match.
void sgd_step(NamParams& params, const NamParams& grads, double lr);

// Restricted variant: only the segments of `modalities` are touched.
void sgd_step(NamParams& params, const NamParams& grads, double lr,
              std::span<const int> modalities);

}  // namespace fedmmx
