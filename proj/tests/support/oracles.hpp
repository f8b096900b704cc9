#pragma once

// Test-side oracles, written independently of the library paths they check.

#include <cstdint>
#include <span>
#include <vector>

#include "fedmmx/dataset.hpp"
#include "fedmmx/federation.hpp"
#include "fedmmx/nam.hpp"

namespace fedmmx::oracles {

// Central finite differences of the total three-term loss, flat layout.
std::vector<double> finite_difference_grad(const NamParams& params,
                                           std::span<const Sample> data,
                                           std::span<const int> batch_indices,
                                           std::span<const int> available,
                                           const Hyperparams& hyper, double step);

// Max relative error between two flat gradients with a small denominator floor.
double max_relative_error(std::span<const double> a, std::span<const double> b,
                          double denom_floor = 1e-6);

// Reference FedAvg trajectory: local SGD re-implemented over flat parameter
// vectors and aggregated with n_k-proportional weights. Requires participation
// 1.0 and full-modality clients. Returns the flattened global parameters after
// each round.
std::vector<std::vector<double>> fedavg_reference(const SimulationConfig& cfg,
                                                  std::uint64_t master_seed);

// Accuracy of the Bayes-style nearest-prototype classifier on the split's test
// set (squared distance summed over all modalities).
double nearest_prototype_accuracy(const FederatedSplit& split,
                                  const std::vector<std::vector<std::vector<double>>>& protos);

// Fused class probabilities when every input feature is replaced by
// mask_value (direct evaluation of the biases-only network output).
std::vector<double> masked_input_fused_probs(const NamParams& params,
                                             std::span<const int> available,
                                             double mask_value);

// Random model/batch builders for property tests.
NamParams random_params(const NamLayout& layout, std::uint64_t seed, double scale = 0.8);
std::vector<Sample> random_samples(const NamLayout& layout, int count, int label_classes,
                                   std::uint64_t seed);

}  // namespace fedmmx::oracles
