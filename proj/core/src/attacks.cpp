#include "perturbench/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "perturbench/rng.hpp"

namespace perturbench {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

bool misclassified(std::span<const double> logits, int label) { return argmax(logits) != label; }

AttackResult finish(const Classifier& model, Image adversarial, const Image& x, int label, Norm norm,
                    std::size_t queries, std::size_t iterations) {
    AttackResult r;
    r.success = predict(model, adversarial) != label;
    r.final_lp = lp_norm(difference(adversarial, x), norm);
    r.adversarial = std::move(adversarial);
    r.queries_used = queries + 1;
    r.iterations_used = iterations;
    return r;
}

std::vector<double> one_hot(int classes, int label, double scale = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(classes), 0.0);
    v[static_cast<std::size_t>(label)] = scale;
    return v;
}

// Upstream vector for d(Z_y - Z_j*)/dlogits where j* is the best other class.
std::vector<double> margin_upstream(const Logits& logits, int label, double scale) {
    std::vector<double> up(logits.size(), 0.0);
    int best = -1;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (static_cast<int>(j) == label) continue;
        if (best < 0 || logits[j] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
    }
    up[static_cast<std::size_t>(label)] = scale;
    up[static_cast<std::size_t>(best)] = -scale;
    return up;
}

void require_epsilon(double epsilon) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("epsilon must be finite and >= 0");
}

}  // namespace

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::Fgsm: return "fgsm";
        case AttackKind::Pgd: return "pgd";
        case AttackKind::CwL2: return "cw_l2";
        case AttackKind::CwLinf: return "cw_linf";
        case AttackKind::Jsma: return "jsma";
        case AttackKind::Uap: return "uap";
        case AttackKind::Square: return "square";
        case AttackKind::Rays: return "rays";
        case AttackKind::Ccp: return "ccp";
    }
    return "unknown";
}

AttackKind parse_attack_kind(const std::string& text) {
    for (AttackKind k : {AttackKind::Fgsm, AttackKind::Pgd, AttackKind::CwL2, AttackKind::CwLinf, AttackKind::Jsma,
                         AttackKind::Uap, AttackKind::Square, AttackKind::Rays, AttackKind::Ccp}) {
        if (to_string(k) == text) return k;
    }
    throw std::invalid_argument("unknown attack kind '" + text + "'");
}

AttackSpec AttackSpec::defaults(AttackKind kind, double epsilon, Norm norm) {
    AttackSpec spec;
    spec.kind = kind;
    switch (kind) {
        case AttackKind::Fgsm:
            spec.ball = LpBall{Norm::Linf, epsilon};
            spec.max_iterations = 1;
            break;
        case AttackKind::Pgd:
        case AttackKind::Uap:
            spec.ball = LpBall{kind == AttackKind::Uap ? Norm::Linf : norm, epsilon};
            spec.max_iterations = 10;
            break;
        case AttackKind::CwL2:
            spec.max_iterations = 10;
            break;
        case AttackKind::CwLinf:
            spec.ball = LpBall{Norm::Linf, epsilon};
            spec.max_iterations = 50;
            break;
        case AttackKind::Jsma:
        case AttackKind::Ccp:
            break;
        case AttackKind::Square:
            spec.ball = LpBall{Norm::Linf, epsilon};
            spec.max_iterations = 300;
            break;
        case AttackKind::Rays:
            spec.ball = LpBall{Norm::Linf, epsilon};
            break;
    }
    return spec;
}

double AttackSpec::step_size() const {
    if (eps_step > 0.0) return eps_step;
    return ball ? ball->epsilon / 10.0 : 0.0;
}

void AttackSpec::validate() const {
    const bool needs_ball = kind == AttackKind::Fgsm || kind == AttackKind::Pgd || kind == AttackKind::CwLinf ||
                            kind == AttackKind::Uap || kind == AttackKind::Square || kind == AttackKind::Rays;
    if (needs_ball && !ball) throw std::invalid_argument(to_string(kind) + ": epsilon is required");
    if (ball) {
        require_epsilon(ball->epsilon);
        if (kind == AttackKind::Pgd && ball->p == Norm::L0) throw std::invalid_argument("pgd: L0 is not supported");
        if (kind != AttackKind::Pgd && ball->p != Norm::Linf) {
            throw std::invalid_argument(to_string(kind) + ": only the linf norm is supported");
        }
        if (kind == AttackKind::Rays && ball->epsilon <= 0.0) throw std::invalid_argument("rays: epsilon must be > 0");
    }
    if (max_iterations < 0 || binary_search_steps <= 0 || restarts <= 0 || query_budget <= 0) {
        throw std::invalid_argument(to_string(kind) + ": iteration counts must be positive");
    }
    if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("jsma: theta must lie in (0, 1]");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("jsma: gamma must lie in (0, 1]");
    if (!(p_init > 0.0 && p_init <= 1.0)) throw std::invalid_argument("square: p_init must lie in (0, 1]");
    if (learning_rate <= 0.0 || initial_const <= 0.0) {
        throw std::invalid_argument("cw: learning_rate and initial_const must be positive");
    }
    if (eps_step < 0.0) throw std::invalid_argument("eps_step must be >= 0");
}

std::string AttackSpec::label() const {
    if (kind == AttackKind::Pgd && ball) return "pgd_l" + to_string(ball->p);
    return to_string(kind);
}

double margin(std::span<const double> logits, int label) {
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.size(); ++j) {
        if (static_cast<int>(j) != label) other = std::max(other, logits[j]);
    }
    return logits[static_cast<std::size_t>(label)] - other;
}

// ---------------------------------------------------------------- CCP

CcpParams CcpParams::random(std::uint64_t seed, double s, double b) {
    Rng rng(seed, 0xCC9);
    CcpParams p;
    for (auto* w : {&p.alpha, &p.beta, &p.gamma}) {
        for (double& v : *w) v = rng.uniform();
    }
    p.s = s;
    p.b = b;
    return p;
}

Image ccp_transform(const Image& x, const CcpParams& params) {
    if (x.channels() != 3) throw ShapeError("ccp_transform needs a 3-channel image, got " + x.shape().to_string());
    Image out(x.shape());
    const std::array<const std::array<double, 3>*, 3> weights{&params.alpha, &params.beta, &params.gamma};
    for (int h = 0; h < x.height(); ++h) {
        for (int w = 0; w < x.width(); ++w) {
            const double r = x.at(h, w, 0);
            const double g = x.at(h, w, 1);
            const double b = x.at(h, w, 2);
            for (int c = 0; c < 3; ++c) {
                const auto& k = *weights[static_cast<std::size_t>(c)];
                const double v = params.s * ((k[0] * r + k[1] * g + k[2] * b) / 3.0) + params.b;
                out.at(h, w, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return out;
}

AttackResult ccp_attack(const Classifier& model, const Image& x, int label, const CcpParams& params) {
    require_valid_label(model, label);
    return finish(model, ccp_transform(x, params), x, label, Norm::Linf, 0, 1);
}

// ---------------------------------------------------------------- FGSM / PGD

AttackResult fgsm(const Classifier& model, const Image& x, int label, double epsilon) {
    require_epsilon(epsilon);
    const Perturbation g = input_gradient(model, x, label);
    Image adv(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) adv[i] = std::clamp(x[i] + epsilon * sgn(g[i]), 0.0, 1.0);
    return finish(model, std::move(adv), x, label, Norm::Linf, 1, 1);
}

Image pgd_iterate(const Image& x, const LpBall& ball, int steps, double eps_step, const GradientOracle& gradient) {
    require_epsilon(ball.epsilon);
    if (ball.p == Norm::L0) throw std::invalid_argument("pgd: L0 ball is not supported");
    if (steps < 0) throw std::invalid_argument("pgd: steps must be >= 0");
    const std::size_t n = x.size();
    Image cur = x;
    std::vector<double> delta(n, 0.0);
    std::vector<double> candidate(n);
    for (int k = 0; k < steps; ++k) {
        const Perturbation g = gradient(cur, k);
        require_same_shape(g.shape(), x.shape(), "pgd gradient");
        double scale = 1.0;
        if (ball.p == Norm::L2 || ball.p == Norm::L1) {
            const double norm = lp_norm(g, ball.p);
            scale = norm > 0.0 ? 1.0 / norm : 0.0;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double dir = ball.p == Norm::Linf ? sgn(g[i]) : g[i] * scale;
            candidate[i] = delta[i] + eps_step * dir;
        }
        const std::vector<double> projected = project_onto_ball(candidate, ball);
        for (std::size_t i = 0; i < n; ++i) {
            cur[i] = std::clamp(x[i] + projected[i], 0.0, 1.0);
            delta[i] = cur[i] - x[i];
        }
    }
    return cur;
}

AttackResult pgd(const Classifier& model, const Image& x, int label, const LpBall& ball, int steps,
                 double eps_step) {
    require_valid_label(model, label);
    Image adv = pgd_iterate(x, ball, steps, eps_step,
                            [&](const Image& cur, int) { return input_gradient(model, cur, label); });
    return finish(model, std::move(adv), x, label, ball.p, static_cast<std::size_t>(steps),
                  static_cast<std::size_t>(steps));
}

// ---------------------------------------------------------------- Carlini-Wagner

AttackResult cw_l2(const Classifier& model, const Image& x, int label, const AttackSpec& spec) {
    require_valid_label(model, label);
    const std::size_t n = x.size();
    std::size_t queries = 1;
    if (misclassified(model.forward(x), label)) {
        return AttackResult{x, true, queries, 0, 0.0};
    }

    std::vector<double> w0(n);
    for (std::size_t i = 0; i < n; ++i) w0[i] = std::atanh(std::clamp(2.0 * x[i] - 1.0, -1.0 + 1e-9, 1.0 - 1e-9));

    constexpr double kNoUpper = 1e10;
    double lower = 0.0;
    double upper = kNoUpper;
    double c = spec.initial_const;
    double best_l2 = std::numeric_limits<double>::infinity();
    Image best = x;
    Image last = x;
    std::size_t iterations = 0;

    auto consider = [&](const Image& candidate, const Logits& logits, bool& found) {
        if (margin(logits, label) >= -spec.confidence || !misclassified(logits, label)) return;
        found = true;
        const double l2 = lp_norm(difference(candidate, x), Norm::L2);
        if (l2 < best_l2) {
            best_l2 = l2;
            best = candidate;
        }
    };

    for (int step = 0; step < spec.binary_search_steps; ++step) {
        std::vector<double> w = w0;
        Image cur(x.shape());
        bool found = false;
        for (int it = 0; it < spec.max_iterations; ++it, ++iterations) {
            for (std::size_t i = 0; i < n; ++i) cur[i] = 0.5 * (std::tanh(w[i]) + 1.0);
            const GradientResult r = model.differentiate(cur, [&](const Logits& logits) {
                if (margin(logits, label) <= -spec.confidence) return std::vector<double>(logits.size(), 0.0);
                return margin_upstream(logits, label, c);
            });
            ++queries;
            consider(cur, r.logits, found);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = std::tanh(w[i]);
                const double gx = 2.0 * (cur[i] - x[i]) + r.gradient[i];
                w[i] -= spec.learning_rate * gx * 0.5 * (1.0 - t * t);
            }
        }
        for (std::size_t i = 0; i < n; ++i) cur[i] = 0.5 * (std::tanh(w[i]) + 1.0);
        consider(cur, model.forward(cur), found);
        ++queries;
        last = cur;

        if (found) {
            upper = std::min(upper, c);
            c = 0.5 * (lower + upper);
        } else {
            lower = std::max(lower, c);
            c = upper < kNoUpper ? 0.5 * (lower + upper) : c * 10.0;
        }
    }
    const bool success = std::isfinite(best_l2);
    Image adv = success ? best : last;
    AttackResult result = finish(model, std::move(adv), x, label, Norm::L2, queries, iterations);
    return result;
}

AttackResult cw_linf(const Classifier& model, const Image& x, int label, const AttackSpec& spec) {
    require_valid_label(model, label);
    if (!spec.ball) throw std::invalid_argument("cw_linf: epsilon is required");
    const double eps = spec.ball->epsilon;
    require_epsilon(eps);
    const std::size_t n = x.size();

    std::vector<double> delta(n, 0.0);
    Image cur = x;
    double tau = eps;
    double best_linf = std::numeric_limits<double>::infinity();
    Image best = x;
    std::size_t queries = 0;
    int it = 0;
    for (; it < spec.max_iterations; ++it) {
        const GradientResult r = model.differentiate(cur, [&](const Logits& logits) {
            if (margin(logits, label) <= -spec.confidence) return std::vector<double>(logits.size(), 0.0);
            return margin_upstream(logits, label, 1.0);
        });
        ++queries;
        if (misclassified(r.logits, label) && margin(r.logits, label) < -spec.confidence) {
            const double linf = lp_norm(difference(cur, x), Norm::Linf);
            if (linf < best_linf) {
                best_linf = linf;
                best = cur;
            }
        }
        double largest = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double penalty = std::abs(delta[i]) > tau ? sgn(delta[i]) : 0.0;
            const double d = std::clamp(delta[i] - spec.learning_rate * (r.gradient[i] + penalty), -eps, eps);
            cur[i] = std::clamp(x[i] + d, 0.0, 1.0);
            delta[i] = cur[i] - x[i];
            largest = std::max(largest, std::abs(delta[i]));
        }
        // Shrink the penalty threshold once every coordinate sits below it.
        if (largest < tau) tau *= 0.9;
    }
    const bool found = std::isfinite(best_linf);
    return finish(model, found ? best : cur, x, label, Norm::Linf, queries, static_cast<std::size_t>(it));
}

// ---------------------------------------------------------------- JSMA

AttackResult jsma(const Classifier& model, const Image& x, int label, double theta, double gamma) {
    require_valid_label(model, label);
    if (!(theta > 0.0)) throw std::invalid_argument("jsma: theta must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("jsma: gamma must lie in (0, 1]");
    const std::size_t n = x.size();
    const std::size_t budget = static_cast<std::size_t>(std::floor(gamma * static_cast<double>(n)));
    const std::size_t max_iterations = budget / 2;
    const int classes = model.num_classes();

    Image cur = x;
    std::vector<bool> modified(n, false);
    std::size_t modified_count = 0;
    std::size_t queries = 0;
    std::size_t iterations = 0;
    std::vector<double> others(static_cast<std::size_t>(classes), 1.0);
    others[static_cast<std::size_t>(label)] = 0.0;

    while (iterations < max_iterations) {
        const GradientResult ra = model.differentiate(cur, [&](const Logits&) { return one_hot(classes, label); });
        ++queries;
        if (misclassified(ra.logits, label)) break;
        const GradientResult rb = model.differentiate(cur, [&](const Logits&) { return others; });
        ++queries;
        const auto& alpha = ra.gradient;
        const auto& beta = rb.gradient;

        double best_score = 0.0;
        std::size_t best_p = n;
        std::size_t best_q = n;
        double best_dir = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            const bool p_up = cur[p] < 1.0;
            const bool p_down = cur[p] > 0.0;
            const int p_cost = modified[p] ? 0 : 1;
            for (std::size_t q = p + 1; q < n; ++q) {
                const double a = alpha[p] + alpha[q];
                const double b = beta[p] + beta[q];
                if (!(a * b < 0.0)) continue;
                const double score = -a * b;
                if (score <= best_score) continue;
                const bool up = a < 0.0;
                if (up ? !(p_up && cur[q] < 1.0) : !(p_down && cur[q] > 0.0)) continue;
                if (modified_count + static_cast<std::size_t>(p_cost + (modified[q] ? 0 : 1)) > budget) continue;
                best_score = score;
                best_p = p;
                best_q = q;
                best_dir = up ? 1.0 : -1.0;
            }
        }
        if (best_p == n) break;
        for (std::size_t i : {best_p, best_q}) {
            cur[i] = std::clamp(cur[i] + best_dir * theta, 0.0, 1.0);
            if (!modified[i]) {
                modified[i] = true;
                ++modified_count;
            }
        }
        ++iterations;
    }
    return finish(model, std::move(cur), x, label, Norm::L0, queries, iterations);
}

// ---------------------------------------------------------------- UAP

UapResult uap(const Classifier& model, const LabeledSet& set, const LpBall& ball, int steps, double eps_step) {
    if (set.empty()) throw std::invalid_argument("uap: empty crafting set");
    if (ball.p != Norm::Linf) throw std::invalid_argument("uap: only the linf norm is supported");
    require_epsilon(ball.epsilon);
    const Shape shape = set.images.front().shape();
    const std::size_t n = shape.size();

    auto fooling_rate = [&](const Perturbation& delta) {
        std::size_t fooled = 0;
        for (std::size_t k = 0; k < set.size(); ++k) {
            if (predict(model, clip_to_domain(add(set.images[k], delta))) != set.labels[k]) ++fooled;
        }
        return static_cast<double>(fooled) / static_cast<double>(set.size());
    };

    UapResult result{Perturbation(shape), fooling_rate(Perturbation(shape)), 0};
    Perturbation delta(shape);
    while (result.passes < kUapMaxPasses && result.fooling_rate < kUapTargetFoolingRate) {
        for (std::size_t k = 0; k < set.size(); ++k) {
            const Image& x = set.images[k];
            require_same_shape(x.shape(), shape, "uap");
            const int y = set.labels[k];
            Image cur = clip_to_domain(add(x, delta));
            if (predict(model, cur) != y) continue;
            // BIM from the current universal perturbation, kept inside the ball.
            for (int s = 0; s < steps; ++s) {
                const Perturbation g = input_gradient(model, cur, y);
                for (std::size_t i = 0; i < n; ++i) {
                    delta[i] = std::clamp(delta[i] + eps_step * sgn(g[i]), -ball.epsilon, ball.epsilon);
                }
                cur = clip_to_domain(add(x, delta));
                if (predict(model, cur) != y) break;
            }
        }
        ++result.passes;
        const double rate = fooling_rate(delta);
        if (rate >= result.fooling_rate) {
            result.fooling_rate = rate;
            result.delta = delta;
        } else {
            delta = result.delta;
        }
    }
    return result;
}

AttackResult apply_universal(const Classifier& model, const Image& x, int label, const Perturbation& delta) {
    require_valid_label(model, label);
    return finish(model, clip_to_domain(add(x, delta)), x, label, Norm::Linf, 0, 0);
}

// ---------------------------------------------------------------- Square Attack

namespace {

double square_p(double p_init, int it, int max_iterations) {
    const int scaled = static_cast<int>(static_cast<double>(it) / max_iterations * 10000.0);
    constexpr int kMilestones[] = {10, 50, 200, 500, 1000, 2000, 4000, 6000, 8000};
    double p = p_init;
    for (int m : kMilestones) {
        if (scaled > m) p /= 2.0;
    }
    return p;
}

}  // namespace

AttackResult square_attack(const Classifier& model, const Image& x, int label, const LpBall& ball, double p_init,
                           int max_iterations, std::uint64_t seed) {
    require_valid_label(model, label);
    if (ball.p != Norm::Linf) throw std::invalid_argument("square_attack: only the linf norm is supported");
    require_epsilon(ball.epsilon);
    if (max_iterations < 0) throw std::invalid_argument("square_attack: max_iterations must be >= 0");
    const double eps = ball.epsilon;
    const int H = x.height();
    const int W = x.width();
    const int C = x.channels();
    Rng rng(seed, 0x5A);

    // Every forward pass, the clean one included, is charged to max_iterations.
    const Logits clean = model.forward(x);
    if (misclassified(clean, label)) return AttackResult{x, true, 1, 0, 0.0};
    const std::size_t budget = static_cast<std::size_t>(max_iterations);
    if (budget < 2) return AttackResult{x, false, 1, 0, 0.0};

    Image best(x.shape());
    for (int c = 0; c < C; ++c) {
        for (int w = 0; w < W; ++w) {
            const double s = rng.sign() * eps;
            for (int h = 0; h < H; ++h) best.at(h, w, c) = std::clamp(x.at(h, w, c) + s, 0.0, 1.0);
        }
    }
    Logits best_logits = model.forward(best);
    std::size_t queries = 2;
    double best_margin = margin(best_logits, label);

    int it = 0;
    for (; queries < budget && !misclassified(best_logits, label); ++it) {
        const double p = square_p(p_init, it, max_iterations);
        const int side = std::clamp(static_cast<int>(std::lround(std::sqrt(p * H * W))), 1, std::min(H, W) - 1);
        const int top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(H - side + 1)));
        const int left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(W - side + 1)));

        Image candidate = best;
        for (int attempt = 0; attempt < 100; ++attempt) {
            bool changed = false;
            for (int c = 0; c < C; ++c) {
                const double s = rng.sign() * eps;
                for (int h = top; h < top + side; ++h) {
                    for (int w = left; w < left + side; ++w) {
                        const double v = std::clamp(x.at(h, w, c) + s, 0.0, 1.0);
                        candidate.at(h, w, c) = v;
                        if (std::abs(v - best.at(h, w, c)) >= 1e-7) changed = true;
                    }
                }
            }
            if (changed) break;
        }
        const Logits logits = model.forward(candidate);
        ++queries;
        const double m = margin(logits, label);
        if (m < best_margin) {
            best_margin = m;
            best = std::move(candidate);
            best_logits = logits;
        }
    }

    AttackResult r;
    r.success = misclassified(best_logits, label);
    r.final_lp = lp_norm(difference(best, x), Norm::Linf);
    r.adversarial = std::move(best);
    r.queries_used = queries;
    r.iterations_used = static_cast<std::size_t>(it);
    return r;
}

// ---------------------------------------------------------------- RayS

AttackResult rays(const Classifier& model, const Image& x, int label, double epsilon, int query_budget) {
    require_valid_label(model, label);
    if (!(epsilon > 0.0)) throw std::invalid_argument("rays: epsilon must be > 0");
    if (query_budget <= 0) throw std::invalid_argument("rays: query budget must be positive");
    const std::size_t budget = static_cast<std::size_t>(query_budget);
    const std::size_t n = x.size();
    const int H = x.height();
    const int W = x.width();
    const int C = x.channels();
    const std::size_t plane = static_cast<std::size_t>(H) * static_cast<std::size_t>(W);

    std::size_t queries = 1;
    if (predict(model, x) != label) return AttackResult{x, true, queries, 0, 0.0};

    // Directions are indexed channel-major so the first stage flips whole channels.
    std::vector<std::size_t> to_hwc(n);
    for (std::size_t j = 0; j < n; ++j) {
        const int c = static_cast<int>(j / plane);
        const int h = static_cast<int>((j % plane) / static_cast<std::size_t>(W));
        const int w = static_cast<int>(j % static_cast<std::size_t>(W));
        to_hwc[j] = x.index(h, w, c);
    }

    auto point = [&](double r, const std::vector<double>& d) {
        Image p(x.shape());
        for (std::size_t i = 0; i < n; ++i) p[i] = std::clamp(x[i] + r * d[i], 0.0, 1.0);
        return p;
    };
    auto is_adversarial = [&](double r, const std::vector<double>& d) {
        if (queries >= budget) return false;
        ++queries;
        return predict(model, point(r, d)) != label;
    };

    constexpr double kTolerance = 1e-3;
    constexpr double kLinearStep = 0.1;
    const double inf = std::numeric_limits<double>::infinity();

    // Smallest adversarial radius along d, searching only below `limit`.
    auto search = [&](const std::vector<double>& d, double limit) {
        double lo = 0.0;
        double hi = inf;
        if (std::isinf(limit)) {
            for (int k = 1; k <= 10; ++k) {
                const double r = kLinearStep * k;
                if (is_adversarial(r, d)) {
                    hi = r;
                    lo = r - kLinearStep;
                    break;
                }
            }
            if (std::isinf(hi)) return inf;
        } else {
            if (!is_adversarial(limit, d)) return inf;
            hi = limit;
        }
        while (hi - lo > kTolerance && queries < budget) {
            const double mid = 0.5 * (lo + hi);
            if (is_adversarial(mid, d)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return hi;
    };

    std::vector<double> dir(n, 1.0);
    double radius = search(dir, inf);
    std::size_t iterations = 0;
    int level = 0;
    while (queries < budget && radius > epsilon) {
        const std::size_t blocks = std::min(n, static_cast<std::size_t>(C) << level);
        const std::size_t block_size = (n + blocks - 1) / blocks;
        for (std::size_t start = 0; start < n && queries < budget && radius > epsilon; start += block_size) {
            std::vector<double> trial = dir;
            for (std::size_t j = start; j < std::min(n, start + block_size); ++j) trial[to_hwc[j]] = -trial[to_hwc[j]];
            const double r = search(trial, radius);
            ++iterations;
            if (r < radius) {
                radius = r;
                dir = std::move(trial);
            }
        }
        level = block_size <= 1 ? 0 : level + 1;
    }

    AttackResult result;
    const double used = std::isinf(radius) ? epsilon : std::min(radius, epsilon);
    result.adversarial = point(used, dir);
    result.success = radius <= epsilon;
    result.final_lp = lp_norm(difference(result.adversarial, x), Norm::Linf);
    result.queries_used = queries;
    result.iterations_used = iterations;
    return result;
}

// ---------------------------------------------------------------- dispatch

AttackResult run_attack(const Classifier& model, const Image& x, int label, const AttackSpec& spec,
                        std::uint64_t seed) {
    spec.validate();
    switch (spec.kind) {
        case AttackKind::Fgsm: return fgsm(model, x, label, spec.ball->epsilon);
        case AttackKind::Pgd: return pgd(model, x, label, *spec.ball, spec.max_iterations, spec.step_size());
        case AttackKind::CwL2: return cw_l2(model, x, label, spec);
        case AttackKind::CwLinf: return cw_linf(model, x, label, spec);
        case AttackKind::Jsma: return jsma(model, x, label, spec.theta, spec.gamma);
        case AttackKind::Square: {
            AttackResult best;
            std::size_t queries = 0;
            for (int r = 0; r < spec.restarts; ++r) {
                best = square_attack(model, x, label, *spec.ball, spec.p_init, spec.max_iterations,
                                     hash_combine(seed, static_cast<std::uint64_t>(r)));
                queries += best.queries_used;
                if (best.success) break;
            }
            best.queries_used = queries;
            return best;
        }
        case AttackKind::Rays: return rays(model, x, label, spec.ball->epsilon, spec.query_budget);
        case AttackKind::Ccp: return ccp_attack(model, x, label, CcpParams::random(spec.seed, spec.s, spec.b));
        case AttackKind::Uap: throw std::invalid_argument("uap needs a crafting set; use uap() and apply_universal()");
    }
    throw std::invalid_argument("unknown attack kind");
}

}  // namespace perturbench
