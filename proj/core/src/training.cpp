#include "perturbench/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "nn_ops.hpp"

namespace perturbench {

std::string to_string(Optimizer opt) { return opt == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer parse_optimizer(const std::string& text) {
    if (text == "sgd") return Optimizer::Sgd;
    if (text == "adam") return Optimizer::Adam;
    throw std::invalid_argument("unknown optimizer '" + text + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
    if (epochs <= 0 || batch_size <= 0) throw std::invalid_argument("TrainConfig: epochs and batch size must be positive");
    if (learning_rate < 0.0) throw std::invalid_argument("TrainConfig: negative learning rate");
    if (momentum < 0.0 || momentum >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
        throw std::invalid_argument("TrainConfig: momentum terms must lie in [0, 1)");
    }
}

double accuracy(const Classifier& model, const LabeledSet& set) {
    if (set.empty()) throw std::invalid_argument("accuracy: empty set");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (predict(model, set.images[i]) == set.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(set.size());
}

TrainHistory train(TrainableClassifier& model, const LabeledSet& train_set, const LabeledSet* test_set,
                   const TrainConfig& config) {
    config.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty dataset");

    const std::size_t n = train_set.size();
    const std::size_t batch = static_cast<std::size_t>(config.batch_size);
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;
    const double total_steps = static_cast<double>(steps_per_epoch * static_cast<std::size_t>(config.epochs));

    auto params = model.parameters();
    std::vector<Matrix> velocity = model.zero_gradients();
    std::vector<Matrix> second_moment = model.zero_gradients();
    TrainHistory history;
    std::vector<std::size_t> order(n);
    std::size_t step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(config.seed, 0x5EED0000ull + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.uniform_int(i)]);

        double epoch_loss = 0.0;
        std::size_t epoch_correct = 0;
        for (std::size_t start = 0; start < n; start += batch, ++step) {
            const std::size_t stop = std::min(n, start + batch);
            std::vector<Matrix> grads = model.zero_gradients();
            for (std::size_t j = start; j < stop; ++j) {
                const std::size_t idx = order[j];
                const SampleLoss sample = model.accumulate_gradients(train_set.images[idx], train_set.labels[idx], grads);
                epoch_loss += sample.loss;
                if (sample.predicted == train_set.labels[idx]) ++epoch_correct;
            }
            double lr = config.learning_rate;
            if (config.cosine_schedule) {
                lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps));
            }
            const double inv_batch = 1.0 / static_cast<double>(stop - start);
            if (config.optimizer == Optimizer::Sgd) {
                for (std::size_t p = 0; p < params.size(); ++p) {
                    velocity[p] = config.momentum * velocity[p] + grads[p] * inv_batch;
                    *params[p].second -= lr * velocity[p];
                    nn::round_to_float(*params[p].second);
                }
            } else {
                const double t = static_cast<double>(step + 1);
                const double b1 = config.momentum;
                const double b2 = config.adam_beta2;
                const double c1 = 1.0 - std::pow(b1, t);
                const double c2 = 1.0 - std::pow(b2, t);
                for (std::size_t p = 0; p < params.size(); ++p) {
                    const Matrix g = grads[p] * inv_batch;
                    velocity[p] = b1 * velocity[p] + (1.0 - b1) * g;
                    second_moment[p] = b2 * second_moment[p] + (1.0 - b2) * g.cwiseAbs2();
                    *params[p].second -= (lr / c1) * velocity[p].cwiseQuotient(
                                             ((second_moment[p] / c2).cwiseSqrt().array() + 1e-8).matrix());
                    nn::round_to_float(*params[p].second);
                }
            }
        }
        history.train_loss.push_back(epoch_loss / static_cast<double>(n));
        history.train_accuracy.push_back(static_cast<double>(epoch_correct) / static_cast<double>(n));
        if (test_set != nullptr && !test_set->empty()) history.test_accuracy.push_back(accuracy(model, *test_set));
    }
    return history;
}

GradCheckReport grad_check(const Classifier& model, int trials, std::uint64_t seed,
                           int coordinates_per_trial, double step) {
    GradCheckReport report;
    const Shape shape = model.input_shape();
    for (int trial = 0; trial < trials; ++trial) {
        Rng rng(seed, static_cast<std::uint64_t>(trial));
        Image x(shape);
        for (double& v : x.values()) v = rng.uniform();
        const int label = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(model.num_classes())));
        const Perturbation g = input_gradient(model, x, label);

        for (int k = 0; k < coordinates_per_trial; ++k) {
            const std::size_t i = rng.uniform_int(x.size());
            if (std::abs(g[i]) <= 1e-6) continue;
            auto loss_at = [&](double offset) {
                Image probe = x;
                probe[i] += offset;
                return loss(model, probe, label);
            };
            const double fd = (-loss_at(2 * step) + 8 * loss_at(step) - 8 * loss_at(-step) + loss_at(-2 * step)) /
                              (12 * step);
            const double rel = std::abs(g[i] - fd) / std::max(std::abs(g[i]), std::abs(fd));
            report.max_relative_error = std::max(report.max_relative_error, rel);
            ++report.coordinates_checked;
        }
    }
    return report;
}

}  // namespace perturbench
