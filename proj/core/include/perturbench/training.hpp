#pragma once

#include <cstdint>
#include <vector>

#include "perturbench/dataset.hpp"
#include "perturbench/models.hpp"

namespace perturbench {

enum class Optimizer { Sgd, Adam };

std::string to_string(Optimizer opt);
Optimizer parse_optimizer(const std::string& text);

struct TrainConfig {
    Optimizer optimizer = Optimizer::Sgd;
    int epochs = 12;
    int batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    /// Heavy-ball momentum for SGD, beta1 for Adam.
    double momentum = 0.9;
    double adam_beta2 = 0.999;
    /// Cosine decay of the learning rate to zero over all steps.
    bool cosine_schedule = true;

    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> train_accuracy;  // running accuracy during the epoch's updates
    std::vector<double> test_accuracy;  // empty when no test set is given

    double final_test_accuracy() const { return test_accuracy.empty() ? 0.0 : test_accuracy.back(); }
};

/// Minibatch training on mean cross-entropy. Deterministic given the config seed.
TrainHistory train(TrainableClassifier& model, const LabeledSet& train_set, const LabeledSet* test_set,
                   const TrainConfig& config);

double accuracy(const Classifier& model, const LabeledSet& set);

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t coordinates_checked = 0;
};

/// Compares input_gradient with a fourth-order central-difference estimate of
/// d CE / dx on `trials` random (x, y) pairs, `coordinates_per_trial` random
/// coordinates each. The relative error is |g - fd| / max(|g|, |fd|) over
/// coordinates with |g| > 1e-6.
GradCheckReport grad_check(const Classifier& model, int trials, std::uint64_t seed = 0,
                           int coordinates_per_trial = 16, double step = 1e-3);

}  // namespace perturbench
