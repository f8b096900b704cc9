#include "fedmmx/nam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedmmx/numeric.hpp"

namespace fedmmx {

namespace {
constexpr double kProbFloor = 1e-12;

void check_available(const NamLayout& layout, const Sample& sample,
                     std::span<const int> available) {
    if (available.empty()) throw std::invalid_argument("forward: no available modalities");
    for (const int m : available) {
        if (m < 0 || m >= static_cast<int>(layout.modalities.size()))
            throw std::invalid_argument("forward: unknown modality index " + std::to_string(m));
        if (!sample.has_modality(m))
            throw std::invalid_argument("forward: sample missing modality " +
                                        layout.modalities[m].id);
        if (sample.features[m].size() != static_cast<std::size_t>(layout.modalities[m].dim))
            throw std::invalid_argument("forward: dimension mismatch for modality " +
                                        layout.modalities[m].id);
    }
}
}  // namespace

int NamLayout::modality_index(const std::string& id) const {
    for (std::size_t m = 0; m < modalities.size(); ++m) {
        if (modalities[m].id == id) return static_cast<int>(m);
    }
    return -1;
}

void NamLayout::validate() const {
    if (hidden < 1) throw std::invalid_argument("layout.hidden: must be >= 1");
    if (classes < 2) throw std::invalid_argument("layout.classes: must be >= 2");
    if (modalities.empty()) throw std::invalid_argument("layout.modalities: must be nonempty");
    for (const auto& m : modalities) {
        if (m.dim < 1) throw std::invalid_argument("layout.modalities: dim must be >= 1");
    }
}

NamParams::NamParams(NamLayout layout) : layout_(std::move(layout)) {
    layout_.validate();
    segments_.resize(layout_.modalities.size());
    for (std::size_t m = 0; m < segments_.size(); ++m) {
        segments_[m].assign(layout_.segment_size(m), 0.0);
    }
}

NamParams NamParams::random_init(const NamLayout& layout, Rng& rng) {
    NamParams p(layout);
    const double out_scale = 1.0 / std::sqrt(static_cast<double>(layout.hidden));
    for (std::size_t m = 0; m < layout.modalities.size(); ++m) {
        for (int j = 0; j < layout.modalities[m].dim; ++j) {
            for (auto& w : p.w_in(m, j)) w = rng.uniform(-0.5, 0.5);
            for (auto& w : p.w_out(m, j)) w = rng.uniform(-0.5, 0.5) * out_scale;
        }
    }
    return p;
}

std::span<double> NamParams::w_in(std::size_t m, std::size_t j) {
    return std::span<double>(segments_[m]).subspan(j * layout_.feature_block(), layout_.hidden);
}
std::span<const double> NamParams::w_in(std::size_t m, std::size_t j) const {
    return std::span<const double>(segments_[m]).subspan(j * layout_.feature_block(), layout_.hidden);
}
std::span<double> NamParams::b_hidden(std::size_t m, std::size_t j) {
    return std::span<double>(segments_[m])
        .subspan(j * layout_.feature_block() + layout_.hidden, layout_.hidden);
}
std::span<const double> NamParams::b_hidden(std::size_t m, std::size_t j) const {
    return std::span<const double>(segments_[m])
        .subspan(j * layout_.feature_block() + layout_.hidden, layout_.hidden);
}
std::span<double> NamParams::w_out(std::size_t m, std::size_t j) {
    return std::span<double>(segments_[m])
        .subspan(j * layout_.feature_block() + 2 * layout_.hidden,
                 static_cast<std::size_t>(layout_.hidden) * layout_.classes);
}
std::span<const double> NamParams::w_out(std::size_t m, std::size_t j) const {
    return std::span<const double>(segments_[m])
        .subspan(j * layout_.feature_block() + 2 * layout_.hidden,
                 static_cast<std::size_t>(layout_.hidden) * layout_.classes);
}
std::span<double> NamParams::bias(std::size_t m) {
    return std::span<double>(segments_[m])
        .subspan(static_cast<std::size_t>(layout_.modalities[m].dim) * layout_.feature_block(),
                 layout_.classes);
}
std::span<const double> NamParams::bias(std::size_t m) const {
    return std::span<const double>(segments_[m])
        .subspan(static_cast<std::size_t>(layout_.modalities[m].dim) * layout_.feature_block(),
                 layout_.classes);
}

std::vector<double> NamParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(layout_.total_size());
    for (const auto& segment : segments_) flat.insert(flat.end(), segment.begin(), segment.end());
    return flat;
}

NamParams NamParams::unflatten(const NamLayout& layout, std::span<const double> flat) {
    if (flat.size() != layout.total_size())
        throw std::invalid_argument("unflatten: length mismatch (expected " +
                                    std::to_string(layout.total_size()) + ", got " +
                                    std::to_string(flat.size()) + ")");
    NamParams p(layout);
    std::size_t offset = 0;
    for (std::size_t m = 0; m < p.segments_.size(); ++m) {
        std::copy_n(flat.begin() + offset, p.segments_[m].size(), p.segments_[m].begin());
        offset += p.segments_[m].size();
    }
    return p;
}

std::vector<std::pair<std::size_t, std::size_t>> NamParams::segment_bounds(const NamLayout& layout) {
    std::vector<std::pair<std::size_t, std::size_t>> bounds;
    std::size_t offset = 0;
    for (std::size_t m = 0; m < layout.modalities.size(); ++m) {
        bounds.emplace_back(offset, offset + layout.segment_size(m));
        offset += layout.segment_size(m);
    }
    return bounds;
}

bool NamParams::all_finite() const {
    for (const auto& segment : segments_) {
        for (const double v : segment) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

void NamParams::fill(double value) {
    for (auto& segment : segments_) std::fill(segment.begin(), segment.end(), value);
}

void Hyperparams::validate() const {
    if (lambda1 < 0.0) throw std::invalid_argument("hyper.lambda1: must be >= 0");
    if (lambda2 < 0.0) throw std::invalid_argument("hyper.lambda2: must be >= 0");
    if (tau <= 0.0) throw std::invalid_argument("hyper.tau: must be > 0");
    if (lr < 0.0) throw std::invalid_argument("hyper.lr: must be >= 0");
    if (local_epochs < 1) throw std::invalid_argument("hyper.local_epochs: must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("hyper.batch_size: must be >= 1");
}

ForwardResult forward(const NamParams& params, const Sample& sample,
                      std::span<const int> available) {
    const auto& layout = params.layout();
    check_available(layout, sample, available);
    const int C = layout.classes;
    const int H = layout.hidden;

    ForwardResult result;
    result.modalities.assign(available.begin(), available.end());
    result.modality_logits.resize(available.size());
    result.fused.assign(C, 0.0);

    for (std::size_t i = 0; i < available.size(); ++i) {
        const std::size_t m = available[i];
        auto& z = result.modality_logits[i];
        const auto bias = params.bias(m);
        z.assign(bias.begin(), bias.end());
        for (int j = 0; j < layout.modalities[m].dim; ++j) {
            const double x = sample.features[m][j];
            const auto w_in = params.w_in(m, j);
            const auto b_hid = params.b_hidden(m, j);
            const auto w_out = params.w_out(m, j);
            for (int h = 0; h < H; ++h) {
                const double act = std::max(0.0, w_in[h] * x + b_hid[h]);
                if (act == 0.0) continue;
                for (int c = 0; c < C; ++c) z[c] += w_out[h * C + c] * act;
            }
        }
        for (int c = 0; c < C; ++c) result.fused[c] += z[c];
    }
    const double inv = 1.0 / static_cast<double>(available.size());
    for (auto& v : result.fused) v *= inv;
    return result;
}

Attribution attribution(const NamParams& params, const Sample& sample,
                        std::span<const int> available) {
    const auto& layout = params.layout();
    check_available(layout, sample, available);
    const int C = layout.classes;
    const int H = layout.hidden;

    Attribution result;
    result.modalities.assign(available.begin(), available.end());
    result.contributions.resize(available.size());
    result.class_totals.resize(available.size());

    for (std::size_t i = 0; i < available.size(); ++i) {
        const std::size_t m = available[i];
        const int dim = layout.modalities[m].dim;
        auto& contrib = result.contributions[i];
        contrib.assign(static_cast<std::size_t>(dim) * C, 0.0);
        auto& totals = result.class_totals[i];
        totals.assign(C, 0.0);
        for (int j = 0; j < dim; ++j) {
            const double x = sample.features[m][j];
            const auto w_in = params.w_in(m, j);
            const auto b_hid = params.b_hidden(m, j);
            const auto w_out = params.w_out(m, j);
            for (int h = 0; h < H; ++h) {
                const double act = std::max(0.0, w_in[h] * x + b_hid[h]);
                if (act == 0.0) continue;
                for (int c = 0; c < C; ++c) contrib[j * C + c] += w_out[h * C + c] * act;
            }
            for (int c = 0; c < C; ++c) totals[c] += contrib[j * C + c];
        }
    }
    return result;
}

namespace {

struct BatchAccumulator {
    LossBreakdown loss;
    NamParams* grad = nullptr;  // null for loss-only evaluation
};

// Shared forward+backward for one sample; accumulates unnormalized sums.
void accumulate_sample(const NamParams& params, const Sample& sample,
                       std::span<const int> available, const Hyperparams& hyper,
                       BatchAccumulator& acc) {
    const auto& layout = params.layout();
    const int C = layout.classes;
    const int H = layout.hidden;
    const std::size_t n_mod = available.size();
    const double inv_mod = 1.0 / static_cast<double>(n_mod);

    if (sample.label < 0 || sample.label >= C)
        throw std::invalid_argument("loss_and_grad: label out of range");

    // Forward with cached activations.
    std::vector<std::vector<double>> hidden_act(n_mod);   // [i][j*H + h]
    std::vector<std::vector<double>> contrib(n_mod);      // [i][j*C + c]
    std::vector<std::vector<double>> z(n_mod);            // per-modality logits
    std::vector<double> fused(C, 0.0);
    std::size_t total_features = 0;

    for (std::size_t i = 0; i < n_mod; ++i) {
        const std::size_t m = available[i];
        const int dim = layout.modalities[m].dim;
        total_features += dim;
        hidden_act[i].assign(static_cast<std::size_t>(dim) * H, 0.0);
        contrib[i].assign(static_cast<std::size_t>(dim) * C, 0.0);
        const auto bias = params.bias(m);
        z[i].assign(bias.begin(), bias.end());
        for (int j = 0; j < dim; ++j) {
            const double x = sample.features[m][j];
            const auto w_in = params.w_in(m, j);
            const auto b_hid = params.b_hidden(m, j);
            const auto w_out = params.w_out(m, j);
            for (int h = 0; h < H; ++h) {
                const double act = std::max(0.0, w_in[h] * x + b_hid[h]);
                hidden_act[i][j * H + h] = act;
                if (act == 0.0) continue;
                for (int c = 0; c < C; ++c) contrib[i][j * C + c] += w_out[h * C + c] * act;
            }
            for (int c = 0; c < C; ++c) z[i][c] += contrib[i][j * C + c];
        }
        for (int c = 0; c < C; ++c) fused[c] += z[i][c];
    }
    for (auto& v : fused) v *= inv_mod;

    // Prediction loss.
    const auto log_p = log_softmax(fused);
    acc.loss.pred += -log_p[sample.label];
    std::vector<double> p(C);
    for (int c = 0; c < C; ++c) p[c] = std::exp(log_p[c]);

    // Cross-modal distillation toward the fused teacher.
    const double tau = hyper.tau;
    std::vector<double> q_teacher;
    std::vector<std::vector<double>> q_student(n_mod);
    std::vector<std::vector<double>> log_ratio(n_mod);  // clamped log q_t - log q_m
    std::vector<double> kl(n_mod, 0.0);
    const double log_floor = std::log(kProbFloor);
    if (n_mod >= 2) {
        std::vector<double> scaled(C);
        for (int c = 0; c < C; ++c) scaled[c] = fused[c] / tau;
        const auto log_q_teacher = log_softmax(scaled);
        q_teacher.resize(C);
        for (int c = 0; c < C; ++c) q_teacher[c] = std::exp(log_q_teacher[c]);

        double modal_sum = 0.0;
        for (std::size_t i = 0; i < n_mod; ++i) {
            for (int c = 0; c < C; ++c) scaled[c] = z[i][c] / tau;
            const auto log_q_student = log_softmax(scaled);
            q_student[i].resize(C);
            log_ratio[i].resize(C);
            double k = 0.0;
            for (int c = 0; c < C; ++c) {
                q_student[i][c] = std::exp(log_q_student[c]);
                log_ratio[i][c] = std::max(log_q_teacher[c], log_floor) -
                                  std::max(log_q_student[c], log_floor);
                k += q_teacher[c] * log_ratio[i][c];
            }
            kl[i] = k;
            modal_sum += k;
        }
        acc.loss.modal += tau * tau * inv_mod * modal_sum;
    }

    // Attribution output penalty.
    const double intp_denom = static_cast<double>(total_features) * C;
    double intp_sum = 0.0;
    for (std::size_t i = 0; i < n_mod; ++i) {
        for (const double a : contrib[i]) intp_sum += a * a;
    }
    acc.loss.intp += intp_sum / intp_denom;

    if (acc.grad == nullptr) return;

    // Backward. g_fused collects d(total)/d(fused).
    std::vector<double> g_fused(C);
    for (int c = 0; c < C; ++c) g_fused[c] = p[c] - (c == sample.label ? 1.0 : 0.0);
    if (n_mod >= 2 && hyper.lambda1 != 0.0) {
        // d(modal)/d(fused) through the teacher:
        //   (tau/n) * sum_m q_t .* (r_m - kl_m), r_m = log q_t - log q_m.
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < n_mod; ++i) {
                s += log_ratio[i][c] - kl[i];
            }
            g_fused[c] += hyper.lambda1 * tau * inv_mod * q_teacher[c] * s;
        }
    }

    NamParams& grad = *acc.grad;
    std::vector<double> g_z(C), g_contrib(C);
    for (std::size_t i = 0; i < n_mod; ++i) {
        const std::size_t m = available[i];
        const int dim = layout.modalities[m].dim;

        // d(total)/d(z_m): fused mean path plus the student side of the KL.
        for (int c = 0; c < C; ++c) g_z[c] = g_fused[c] * inv_mod;
        if (n_mod >= 2 && hyper.lambda1 != 0.0) {
            for (int c = 0; c < C; ++c) {
                g_z[c] += hyper.lambda1 * tau * inv_mod * (q_student[i][c] - q_teacher[c]);
            }
        }

        auto g_bias = grad.bias(m);
        for (int c = 0; c < C; ++c) g_bias[c] += g_z[c];

        for (int j = 0; j < dim; ++j) {
            const double x = sample.features[m][j];
            const auto w_out = params.w_out(m, j);
            auto g_w_in = grad.w_in(m, j);
            auto g_b_hid = grad.b_hidden(m, j);
            auto g_w_out = grad.w_out(m, j);

            for (int c = 0; c < C; ++c) {
                g_contrib[c] = g_z[c] +
                               hyper.lambda2 * 2.0 * contrib[i][j * C + c] / intp_denom;
            }
            for (int h = 0; h < H; ++h) {
                const double act = hidden_act[i][j * H + h];
                if (act == 0.0) continue;  // ReLU off: all paths through h are dead
                double g_act = 0.0;
                for (int c = 0; c < C; ++c) {
                    g_w_out[h * C + c] += act * g_contrib[c];
                    g_act += w_out[h * C + c] * g_contrib[c];
                }
                g_w_in[h] += g_act * x;
                g_b_hid[h] += g_act;
            }
        }
    }
}

}  // namespace

LossGrad loss_and_grad(const NamParams& params, std::span<const Sample> data,
                       std::span<const int> batch_indices, std::span<const int> available,
                       const Hyperparams& hyper) {
    hyper.validate();
    if (batch_indices.empty()) throw std::invalid_argument("loss_and_grad: empty batch");

    LossGrad result;
    result.grad = NamParams(params.layout());
    BatchAccumulator acc;
    acc.grad = &result.grad;
    for (const int idx : batch_indices) {
        accumulate_sample(params, data[idx], available, hyper, acc);
    }

    const double inv_batch = 1.0 / static_cast<double>(batch_indices.size());
    result.loss.pred = acc.loss.pred * inv_batch;
    result.loss.modal = acc.loss.modal * inv_batch;
    result.loss.intp = acc.loss.intp * inv_batch;
    result.loss.total =
        result.loss.pred + hyper.lambda1 * result.loss.modal + hyper.lambda2 * result.loss.intp;
    for (std::size_t m = 0; m < params.layout().modalities.size(); ++m) {
        for (auto& g : result.grad.segment(m)) g *= inv_batch;
    }
    return result;
}

LossBreakdown loss_only(const NamParams& params, std::span<const Sample> data,
                        std::span<const int> batch_indices, std::span<const int> available,
                        const Hyperparams& hyper) {
    hyper.validate();
    if (batch_indices.empty()) throw std::invalid_argument("loss_only: empty batch");
    BatchAccumulator acc;
    for (const int idx : batch_indices) {
        accumulate_sample(params, data[idx], available, hyper, acc);
    }
    const double inv_batch = 1.0 / static_cast<double>(batch_indices.size());
    LossBreakdown loss;
    loss.pred = acc.loss.pred * inv_batch;
    loss.modal = acc.loss.modal * inv_batch;
    loss.intp = acc.loss.intp * inv_batch;
    loss.total = loss.pred + hyper.lambda1 * loss.modal + hyper.lambda2 * loss.intp;
    return loss;
}

void sgd_step(NamParams& params, const NamParams& grads, double lr) {
    if (params.layout() != grads.layout())
        throw std::invalid_argument("sgd_step: layout mismatch");
    for (std::size_t m = 0; m < params.layout().modalities.size(); ++m) {
        auto p = params.segment(m);
        const auto g = grads.segment(m);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
}

void sgd_step(NamParams& params, const NamParams& grads, double lr,
              std::span<const int> modalities) {
    if (params.layout() != grads.layout())
        throw std::invalid_argument("sgd_step: layout mismatch");
    for (const int m : modalities) {
        auto p = params.segment(m);
        const auto g = grads.segment(m);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
}

}  // namespace fedmmx
