// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "perturbench/eot.hpp"
#include "perturbench/harness.hpp"
#include "perturbench/parallel.hpp"
#include "perturbench/training.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace perturbench;
using namespace perturbench::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

struct Context {
    fs::path config_path;
    fs::path grid_config_path;
    fs::path cache_dir;
    fs::path work_dir;
    fs::path cli;
    ExperimentConfig config;
    ExperimentData data;
    std::vector<PreparedModel> models;
    SampleSet samples;
    double prepare_seconds = 0.0;
    // PGD-Linf results shared between criteria, keyed by model then epsilon*255.
    std::map<std::string, std::map<int, CellReport>> pgd_cells;
    std::map<std::string, std::map<int, std::vector<AttackResult>>> pgd_results;
};

// Feasibility of one attack output against its ball and the image domain.
bool feasible(const Image& x, const AttackResult& r, const LpBall& ball, std::string* why) {
    if (!in_unit_range(r.adversarial)) {
        *why = "outside [0,1]";
        return false;
    }
    const double n = lp_norm(difference(r.adversarial, x), ball.p);
    if (n > ball.epsilon * (1.0 + 1e-6)) {
        *why = "norm " + fmt("%.9g", n) + " > eps " + fmt("%.9g", ball.epsilon);
        return false;
    }
    return true;
}

std::vector<AttackResult> attack_all(const Classifier& model, const AttackSpec& spec, const LabeledSet& set,
                                     std::size_t count, std::uint64_t master_seed, const std::vector<std::size_t>& idx) {
    std::vector<AttackResult> out(count);
    parallel_for(count, [&](std::size_t i) {
        out[i] = run_attack(model, set.images[i], set.labels[i], spec,
                            hash_combine(sample_seed(master_seed, idx[i]), spec.seed));
    });
    return out;
}

// ---------------------------------------------------------------------------

Outcome criterion1(Context& ctx) {
    Outcome o;
    const auto t0 = Clock::now();
    for (const auto& m : ctx.models) {
        const auto r = grad_check(*m.model, 50, 11);
        o.require(r.max_relative_error <= 1e-3, m.name + " rel err " + fmt("%.3g", r.max_relative_error));
        o.note(m.name + " " + fmt("%.2e", r.max_relative_error));
    }
    for (ModelKind k : {ModelKind::TinyCnn, ModelKind::TinyVit}) {
        const auto m = make_model(k, 21);
        const auto r = grad_check(*m, 50, 12);
        o.require(r.max_relative_error <= 1e-3, "untrained " + to_string(k));
        o.note("untrained " + to_string(k) + " " + fmt("%.2e", r.max_relative_error));
    }
    const LinearSoftmax lin(Shape{32, 32, 3}, 10, 3);
    const auto r = grad_check(lin, 50, 13);
    o.require(r.max_relative_error <= 1e-6, "linear rel err " + fmt("%.3g", r.max_relative_error));
    o.note("linear " + fmt("%.2e", r.max_relative_error));
    const double secs = seconds_since(t0);
    o.require(secs < 120.0, "runtime " + fmt("%.1f", secs) + " s");
    o.note(fmt("%.1f s", secs));
    return o;
}

std::vector<double> l1_bisection(const std::vector<double>& v, double eps) {
    double l1 = 0.0, hi = 0.0;
    for (double x : v) {
        l1 += std::abs(x);
        hi = std::max(hi, std::abs(x));
    }
    if (l1 <= eps) return v;
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        double s = 0.0;
        for (double x : v) s += std::max(std::abs(x) - mid, 0.0);
        (s > eps ? lo : hi) = mid;
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::copysign(std::max(std::abs(v[i]) - hi, 0.0), v[i]);
    return out;
}

Outcome criterion2(Context&) {
    Outcome o;
    Rng rng(2024);
    for (Norm p : {Norm::L1, Norm::L2, Norm::Linf}) {
        int bad_idem = 0, bad_feas = 0, bad_fix = 0;
        for (int t = 0; t < 10000; ++t) {
            const std::size_t n = 1 + rng.uniform_int(200);
            const double scale = rng.uniform(0.001, 3.0);
            std::vector<double> v(n);
            for (double& x : v) x = scale * rng.normal();
            const LpBall ball{p, rng.uniform(0.01, 2.0)};
            const auto once = project_onto_ball(v, ball);
            const auto twice = project_onto_ball(once, ball);
            bad_idem += max_abs_diff(once, twice) > 1e-12 * std::max(1.0, ball.epsilon);
            bad_feas += lp_norm(once, p) > ball.epsilon * (1.0 + 1e-9);
            if (lp_norm(v, p) <= ball.epsilon) bad_fix += once != v;
            // An explicitly interior point must come back unchanged.
            std::vector<double> inner = v;
            const double nv = lp_norm(v, p);
            if (nv > 0.0) {
                for (double& x : inner) x *= 0.5 * ball.epsilon / nv;
                bad_fix += project_onto_ball(inner, ball) != inner;
            }
        }
        o.require(bad_idem == 0, to_string(p) + " idempotence x" + std::to_string(bad_idem));
        o.require(bad_feas == 0, to_string(p) + " feasibility x" + std::to_string(bad_feas));
        o.require(bad_fix == 0, to_string(p) + " interior x" + std::to_string(bad_fix));
    }
    double worst = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const std::size_t n = 1 + rng.uniform_int(5);
        std::vector<double> v(n);
        for (double& x : v) x = rng.normal();
        const double eps = rng.uniform(0.01, 2.0);
        worst = std::max(worst, max_abs_diff(project_onto_ball(v, LpBall{Norm::L1, eps}), l1_bisection(v, eps)));
    }
    o.require(worst <= 1e-6, "L1 oracle diff " + fmt("%.3g", worst));
    o.note("3 x 10^4 vectors; L1 oracle max diff " + fmt("%.2e", worst));
    return o;
}

Outcome criterion3(Context& ctx) {
    Outcome o;
    const double e8 = 8.0 / 255.0, e4 = 4.0 / 255.0;
    struct Entry {
        AttackSpec spec;
        std::size_t count;
    };
    std::vector<Entry> grid;
    grid.push_back({AttackSpec::defaults(AttackKind::Fgsm, e8), 200});
    grid.push_back({AttackSpec::defaults(AttackKind::Pgd, e8, Norm::L2), 200});
    grid.back().spec.ball->epsilon = 0.5;
    grid.push_back({AttackSpec::defaults(AttackKind::Pgd, 8.0, Norm::L1), 200});
    grid.push_back({AttackSpec::defaults(AttackKind::CwLinf, e8), 50});
    grid.push_back({AttackSpec::defaults(AttackKind::Square, e8), 50});
    grid.push_back({AttackSpec::defaults(AttackKind::Rays, e8), 50});
    std::size_t checked = 0;
    const auto& set = ctx.samples.samples;
    for (const auto& m : ctx.models) {
        const Classifier& net = *m.model;
        // PGD-Linf at both radii from the shared cells.
        for (int e : {4, 8}) {
            const auto& rs = ctx.pgd_results[m.name][e];
            const LpBall ball{Norm::Linf, e / 255.0};
            for (std::size_t i = 0; i < rs.size(); ++i, ++checked) {
                std::string why;
                if (!feasible(set.images[i], rs[i], ball, &why)) o.require(false, m.name + " pgd_linf: " + why);
            }
        }
        for (const auto& g : grid) {
            const std::size_t n = std::min(g.count, set.size());
            const auto rs = attack_all(net, g.spec, set, n, ctx.config.master_seed, ctx.samples.test_indices);
            for (std::size_t i = 0; i < n; ++i, ++checked) {
                std::string why;
                if (!feasible(set.images[i], rs[i], *g.spec.ball, &why)) {
                    o.require(false, m.name + " " + g.spec.label() + ": " + why);
                    break;
                }
            }
        }
        LabeledSet craft;
        for (std::size_t i = 0; i < 50; ++i) craft.push_back(set.images[i], set.labels[i]);
        const LpBall ball{Norm::Linf, e8};
        const UapResult u = uap(net, craft, ball, 10, e8 / 10);
        o.require(lp_norm(u.delta, Norm::Linf) <= e8 * (1 + 1e-6), m.name + " uap delta outside ball");
        for (std::size_t i = 0; i < set.size(); ++i, ++checked) {
            std::string why;
            const auto r = apply_universal(net, set.images[i], set.labels[i], u.delta);
            if (!feasible(set.images[i], r, ball, &why)) o.require(false, m.name + " uap: " + why);
        }
        const auto dist = TransformDistribution::of({DefenseKind::Ss, DefenseKind::Nlm, DefenseKind::Tvm,
                                                     DefenseKind::Jpeg, DefenseKind::Cr}, 8);
        for (std::size_t i = 0; i < 20; ++i, ++checked) {
            std::string why;
            const auto r = eot_pgd(net, set.images[i], set.labels[i], LpBall{Norm::Linf, e4}, 10, e4 / 10, dist, i);
            if (!feasible(set.images[i], r, LpBall{Norm::Linf, e4}, &why)) o.require(false, m.name + " eot: " + why);
        }
    }
    o.note(std::to_string(checked) + " outputs checked");
    return o;
}

Outcome criterion4(Context& ctx) {
    Outcome o;
    Rng rng(404);
    int equal = 0;
    for (int t = 0; t < 100; ++t) {
        const Classifier& net = *ctx.models[static_cast<std::size_t>(t) % ctx.models.size()].model;
        Image x = t % 2 == 0 ? ctx.data.test.images[rng.uniform_int(ctx.data.test.size())] : random_image(rng, net.input_shape());
        const int label = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(net.num_classes())));
        const double eps = rng.uniform(0.5, 16.0) / 255.0;
        const auto a = pgd(net, x, label, LpBall{Norm::Linf, eps}, 1, eps);
        const auto b = fgsm(net, x, label, eps);
        equal += a.adversarial == b.adversarial;
    }
    o.require(equal == 100, std::to_string(100 - equal) + " cases differ");
    o.note(std::to_string(equal) + "/100 bitwise equal");
    return o;
}

Outcome criterion5(Context& ctx) {
    Outcome o;
    for (const auto& m : ctx.models) {
        o.require(m.test_accuracy >= 0.90, m.name + " accuracy " + fmt("%.3f", m.test_accuracy));
        const auto& cell = ctx.pgd_cells[m.name][8];
        o.require(cell.asr >= 0.90, m.name + " asr " + fmt("%.3f", cell.asr));
        o.note(m.name + " acc " + fmt("%.3f", m.test_accuracy) + " asr " + fmt("%.3f", cell.asr) + " in " +
               fmt("%.1f s", cell.attack_seconds));
    }
    double secs = 0.0;
    for (const auto& m : ctx.models) secs += ctx.pgd_cells[m.name][8].attack_seconds;
    o.require(secs < 600.0, "attack runtime " + fmt("%.1f", secs));
    o.note("model preparation " + fmt("%.1f s", ctx.prepare_seconds));
    return o;
}

Outcome criterion6(Context&) {
    Outcome o;
    Rng rng(606);
    double worst = 0.0;
    int failures = 0;
    for (int t = 0; t < 20; ++t) {
        const auto inst = linear_binary_instance(rng, Shape{4, 4, 3}, rng.uniform(0.05, 0.25));
        const auto r = cw_l2(inst.model, inst.x, 0, AttackSpec::defaults(AttackKind::CwL2));
        const double n = lp_norm(difference(r.adversarial, inst.x), Norm::L2);
        const double rel = std::abs(n - inst.l2_distance) / inst.l2_distance;
        worst = std::max(worst, rel);
        failures += !r.success || rel > 0.10;
    }
    o.require(failures == 0, std::to_string(failures) + " instances off");
    o.note("worst relative gap " + fmt("%.4f", worst));
    return o;
}

Outcome criterion7(Context& ctx) {
    Outcome o;
    const double e8 = 8.0 / 255.0;
    const auto& set = ctx.samples.samples;
    std::size_t runs = 0;
    for (const auto& m : ctx.models) {
        for (AttackKind k : {AttackKind::Square, AttackKind::Rays}) {
            const AttackSpec spec = AttackSpec::defaults(k, e8);
            const std::size_t budget = k == AttackKind::Square ? static_cast<std::size_t>(spec.max_iterations)
                                                                : static_cast<std::size_t>(spec.query_budget);
            const std::size_t n = std::min<std::size_t>(50, set.size());
            for (std::size_t i = 0; i < n; ++i, ++runs) {
                const CountingClassifier counter(*m.model);
                const auto r = run_attack(counter, set.images[i], set.labels[i], spec,
                                          sample_seed(ctx.config.master_seed, ctx.samples.test_indices[i]));
                if (counter.gradient_calls() != 0) o.require(false, m.name + " " + spec.label() + " used gradients");
                if (r.queries_used > budget || counter.forward_calls() > budget) {
                    o.require(false, m.name + " " + spec.label() + " " + std::to_string(counter.forward_calls()) +
                                         " queries > " + std::to_string(budget));
                    break;
                }
            }
        }
    }
    o.note(std::to_string(runs) + " runs, zero gradient calls");
    return o;
}

double ssim_scalar(const Image& x, const Image& y) {
    const int n = 11;
    double g[11], z = 0.0;
    for (int i = 0; i < n; ++i) z += (g[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (1.5 * 1.5)));
    for (double& v : g) v /= z;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    for (int c = 0; c < x.channels(); ++c) {
        double sum = 0.0;
        long count = 0;
        for (int r0 = 0; r0 + n <= x.height(); ++r0) {
            for (int q0 = 0; q0 + n <= x.width(); ++q0) {
                double mx = 0, my = 0;
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b) {
                        mx += g[a] * g[b] * x.at(r0 + a, q0 + b, c);
                        my += g[a] * g[b] * y.at(r0 + a, q0 + b, c);
                    }
                double vx = 0, vy = 0, cv = 0;
                for (int a = 0; a < n; ++a)
                    for (int b = 0; b < n; ++b) {
                        const double dx = x.at(r0 + a, q0 + b, c) - mx, dy = y.at(r0 + a, q0 + b, c) - my;
                        vx += g[a] * g[b] * dx * dx;
                        vy += g[a] * g[b] * dy * dy;
                        cv += g[a] * g[b] * dx * dy;
                    }
                sum += (2 * mx * my + c1) * (2 * cv + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
        total += sum / static_cast<double>(count);
    }
    return total / x.channels();
}

Outcome criterion8(Context&) {
    Outcome o;
    Rng rng(808);
    double psnr_err = 0.0, ssim_err = 0.0, self = 0.0, parseval = 0.0, spread = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Image x = random_image(rng, Shape{32, 32, 3});
        Image y = x;
        const double sigma = rng.uniform(0.01, 0.2);
        for (double& v : y.values()) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
        double mse = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) mse += (x[i] - y[i]) * (x[i] - y[i]);
        mse /= static_cast<double>(x.size());
        psnr_err = std::max(psnr_err, std::abs(psnr(x, y) - 10.0 * std::log10(1.0 / mse)));
        ssim_err = std::max(ssim_err, std::abs(ssim(x, y) - ssim_scalar(x, y)));
        self = std::max(self, std::abs(ssim(x, x) - 1.0));

        const Perturbation d = difference(y, x);
        const auto s = dct_spectrum(d);
        double e = 0.0;
        for (double v : d.values()) e += v * v;
        parseval = std::max(parseval, std::abs(s.total_energy - e) / e);
        Perturbation d2 = d;
        const double k = rng.uniform(0.1, 10.0);
        for (double& v : d2.values()) v *= k;
        spread = std::max(spread, std::abs(dct_spectrum(d2).spread_radius - s.spread_radius));
    }
    o.require(psnr_err <= 1e-6, "psnr " + fmt("%.3g", psnr_err));
    o.require(ssim_err <= 1e-6, "ssim " + fmt("%.3g", ssim_err));
    o.require(self <= 1e-12, "ssim(x,x) " + fmt("%.3g", self));
    o.require(parseval <= 1e-6, "parseval " + fmt("%.3g", parseval));
    o.require(spread <= 1e-9, "spread " + fmt("%.3g", spread));
    o.note("psnr " + fmt("%.1e", psnr_err) + " ssim " + fmt("%.1e", ssim_err) + " parseval " + fmt("%.1e", parseval) +
           " spread " + fmt("%.1e", spread));
    return o;
}

Outcome criterion9(Context& ctx) {
    Outcome o;
    Rng rng(909);
    for (int t = 0; t < 20; ++t) {
        const Image x = t < 10 ? ctx.data.test.images[static_cast<std::size_t>(t)] : random_image(rng, Shape{32, 32, 3});
        for (DefenseKind k : all_defenses()) {
            const Image y = apply_defense(k, x);
            o.require(y.shape() == x.shape() && in_unit_range(y), to_string(k) + " shape/range");
        }
        o.require(psnr(x, jpeg_roundtrip(x, 100)) >= 40.0, "jpeg q100 psnr " + fmt("%.2f", psnr(x, jpeg_roundtrip(x, 100))));
        std::vector<double> trace;
        tv_minimize(x, 0.1, 2e-4, 200, &trace);
        for (std::size_t i = 1; i < trace.size(); ++i) {
            if (trace[i] > trace[i - 1]) {
                o.require(false, "tv objective rose at iteration " + std::to_string(i));
                break;
            }
        }
    }
    // CCP recolors, so a constant image is not a fixed point of it by design.
    for (double level : {0.0, 0.2, 0.5, 0.73, 1.0}) {
        const Image c(Shape{32, 32, 3}, level);
        for (DefenseKind k : {DefenseKind::Ss, DefenseKind::Nlm, DefenseKind::Tvm, DefenseKind::Cr}) {
            o.require(max_abs_diff(apply_defense(k, c), c) <= 1e-9, to_string(k) + " constant " + fmt("%g", level));
        }
        o.require(max_abs_diff(apply_defense(DefenseKind::Jpeg, c), c) <= 1.0 / 255.0, "jpeg constant " + fmt("%g", level));
    }
    o.note("20 images x 6 defenses");
    return o;
}

Outcome criterion10(Context& ctx) {
    Outcome o;
    for (const auto& m : ctx.models) {
        const auto& cell = ctx.pgd_cells[m.name][4];
        const double none = cell.top1_error[0];
        int effective = 0;
        std::string row = m.name + " none " + fmt("%.3f", none);
        for (std::size_t d = 1; d < cell.top1_error.size(); ++d) {
            effective += none - cell.top1_error[d] >= 0.10;
            row += " " + to_string(ctx.config.defenses[d - 1].kind) + " " + fmt("%.3f", cell.top1_error[d]);
        }
        o.require(effective >= 4, m.name + " only " + std::to_string(effective) + " effective defenses");
        o.note(row + " (" + std::to_string(effective) + "/6)");
    }
    return o;
}

Outcome criterion11(Context& ctx) {
    Outcome o;
    int equal = 0;
    const auto identity = TransformDistribution::of({DefenseKind::Identity}, 1);
    for (std::size_t t = 0; t < 20; ++t) {
        const Classifier& net = *ctx.models[t % ctx.models.size()].model;
        const auto& x = ctx.samples.samples.images[t];
        const int label = ctx.samples.samples.labels[t];
        const LpBall ball{Norm::Linf, 4.0 / 255.0};
        equal += pgd(net, x, label, ball, 10, ball.epsilon / 10).adversarial ==
                 eot_pgd(net, x, label, ball, 10, ball.epsilon / 10, identity, t).adversarial;
    }
    o.require(equal == 20, "identity EOT differs from PGD in " + std::to_string(20 - equal) + " cases");
    if (!ctx.config.eot) {
        o.require(false, "config has no eot section");
        return o;
    }
    const auto t0 = Clock::now();
    const EotReport rep = run_eot_experiment(*ctx.config.eot, ctx.models, ctx.samples, ctx.config.master_seed);
    for (const auto& m : rep.models) {
        o.require(m.eot_mean > m.plain_mean, m.model + " eot " + fmt("%.3f", m.eot_mean) + " <= plain " + fmt("%.3f", m.plain_mean));
        o.note(m.model + " plain " + fmt("%.3f", m.plain_mean) + " eot " + fmt("%.3f", m.eot_mean));
    }
    o.note(fmt("%.0f s", seconds_since(t0)));
    return o;
}

Outcome criterion12(Context& ctx) {
    Outcome o;
    const AttackEntry fgsm8{AttackSpec::defaults(AttackKind::Fgsm, 8.0 / 255.0), std::nullopt};
    const auto t = transfer_matrix(ctx.models, fgsm8.spec, ctx.samples, ctx.config.master_seed);
    for (std::size_t i = 0; i < ctx.models.size(); ++i) {
        const CellReport cell = run_cell(ctx.models[i], fgsm8, ctx.samples, {}, ctx.config.master_seed, {}, -1);
        o.require(t.asr[i][i] == cell.asr, t.models[i] + " diagonal " + fmt("%.4f", t.asr[i][i]) + " vs " + fmt("%.4f", cell.asr));
    }
    for (std::size_t i = 0; i < ctx.models.size(); ++i) {
        for (std::size_t j = 0; j < ctx.models.size(); ++j) {
            if (i == j) continue;
            o.require(t.asr[i][j] < t.asr[i][i] && t.asr[i][j] < t.asr[j][j],
                      t.models[i] + "->" + t.models[j] + " " + fmt("%.3f", t.asr[i][j]));
        }
    }
    std::string m;
    for (std::size_t i = 0; i < t.asr.size(); ++i) {
        m += (i ? " | " : "");
        for (std::size_t j = 0; j < t.asr.size(); ++j) m += (j ? " " : "") + fmt("%.3f", t.asr[i][j]);
    }
    o.note("asr rows " + m);
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome criterion13(Context& ctx) {
    Outcome o;
    if (ctx.cli.empty()) {
        o.require(false, "no CLI path given");
        return o;
    }
    std::vector<std::string> reports;
    for (const char* run : {"grid_a", "grid_b"}) {
        const fs::path out = ctx.work_dir / run;
        fs::remove_all(out);
        const std::string cmd = "\"" + ctx.cli.string() + "\" grid --config \"" + ctx.grid_config_path.string() +
                                "\" --out \"" + out.string() + "\" --model-cache \"" + ctx.cache_dir.string() +
                                "\" > \"" + (ctx.work_dir / (std::string(run) + ".log")).string() + "\" 2>&1";
        const int rc = std::system(cmd.c_str());
        o.require(rc == 0, std::string(run) + " exited with " + std::to_string(rc));
        reports.push_back(slurp(out / "report.csv"));
    }
    o.require(!reports[0].empty(), "empty report.csv");
    o.require(reports[0] == reports[1], "report.csv differs between runs");
    o.note(std::to_string(reports[0].size()) + " bytes identical");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    Context ctx;
    std::string only;
    app.add_option("--config", ctx.config_path, "Experiment config for the toy models")->required()->check(CLI::ExistingFile);
    app.add_option("--grid-config", ctx.grid_config_path, "Config for the determinism check")->required()->check(CLI::ExistingFile);
    app.add_option("--cache", ctx.cache_dir, "Trained-model cache")->required();
    app.add_option("--work", ctx.work_dir, "Scratch directory")->required();
    app.add_option("--cli", ctx.cli, "perturbench executable");
    app.add_option("--only", only, "Comma-separated criterion numbers");
    CLI11_PARSE(app, argc, argv);

    std::set<int> selected;
    for (std::stringstream ss(only); ss.good();) {
        std::string tok;
        std::getline(ss, tok, ',');
        if (!tok.empty()) selected.insert(std::stoi(tok));
    }
    const auto want = [&](int c) { return selected.empty() || selected.count(c) > 0; };

    fs::create_directories(ctx.work_dir);
    ctx.config = load_experiment_config(ctx.config_path);
    ctx.data = load_experiment_data(ctx.config.dataset);
    const auto t0 = Clock::now();
    PrepareOptions prep;
    prep.cache_dir = ctx.cache_dir;
    prep.log = &std::cerr;
    ctx.models = prepare_models(ctx.config, ctx.data, prep);
    ctx.prepare_seconds = seconds_since(t0);
    std::vector<const Classifier*> nets;
    for (const auto& m : ctx.models) nets.push_back(m.model.get());
    ctx.samples = select_clean_correct(nets, ctx.data.test, ctx.config.sample_count);

    if (want(3) || want(5) || want(10)) {
        for (const auto& m : ctx.models) {
            for (int e : {4, 8}) {
                AttackEntry entry{AttackSpec::defaults(AttackKind::Pgd, e / 255.0), std::nullopt};
                ctx.pgd_cells[m.name][e] = run_cell(m, entry, ctx.samples, ctx.config.defenses, ctx.config.master_seed, {}, -1);
                if (want(3)) {
                    ctx.pgd_results[m.name][e] = attack_all(*m.model, entry.spec, ctx.samples.samples,
                                                            ctx.samples.samples.size(), ctx.config.master_seed,
                                                            ctx.samples.test_indices);
                }
            }
        }
    }

    const std::vector<std::pair<int, std::function<Outcome(Context&)>>> criteria{
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},   {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9},   {10, criterion10},
        {11, criterion11}, {12, criterion12}, {13, criterion13}};
    int failed = 0;
    for (const auto& [id, fn] : criteria) {
        if (!want(id)) continue;
        const auto c0 = Clock::now();
        Outcome out;
        try {
            out = fn(ctx);
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        failed += !out.pass;
        std::printf("%s criterion %d: %s [%.1f s]\n", out.pass ? "PASS" : "FAIL", id, out.detail.c_str(), seconds_since(c0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
