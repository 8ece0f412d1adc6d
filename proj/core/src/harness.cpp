#include "perturbench/harness.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "perturbench/checkpoint.hpp"
#include "perturbench/eot.hpp"
#include "perturbench/parallel.hpp"
#include "perturbench/rng.hpp"
#include "perturbench/training.hpp"

namespace perturbench {

using nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

void log_line(std::ostream* log, const std::string& line) {
    if (log) *log << line << std::endl;
}

std::vector<std::uint64_t> sample_seeds(std::uint64_t master_seed, const SampleSet& samples, std::size_t count) {
    std::vector<std::uint64_t> seeds(count);
    for (std::size_t i = 0; i < count; ++i) seeds[i] = sample_seed(master_seed, samples.test_indices[i]);
    return seeds;
}

LabeledSet first_k(const LabeledSet& set, std::size_t k) {
    LabeledSet out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(set.images[i], set.labels[i]);
    return out;
}

/// Adversarials for the first `count` samples. UAP is crafted on those samples.
std::vector<AttackResult> generate_adversarials(const Classifier& model, const AttackSpec& spec,
                                                const SampleSet& samples, std::size_t count,
                                                std::uint64_t master_seed, std::optional<double>* fooling_rate) {
    std::vector<AttackResult> results(count);
    if (spec.kind == AttackKind::Uap) {
        const LabeledSet craft = first_k(samples.samples, count);
        const UapResult u = uap(model, craft, *spec.ball, spec.max_iterations, spec.step_size());
        if (fooling_rate) *fooling_rate = u.fooling_rate;
        parallel_for(count, [&](std::size_t i) {
            results[i] = apply_universal(model, craft.images[i], craft.labels[i], u.delta);
        });
        return results;
    }
    const auto seeds = sample_seeds(master_seed, samples, count);
    parallel_for(count, [&](std::size_t i) {
        results[i] = run_attack(model, samples.samples.images[i], samples.samples.labels[i], spec,
                                hash_combine(seeds[i], spec.seed));
    });
    return results;
}

std::string eps_text(double eps) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", eps * 255.0);
    return buf;
}

ordered_json number_json(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return nullptr;
    return v;
}

void write_saliency(const std::filesystem::path& dir, const std::string& stem, const Classifier& model,
                    const Image& clean, const Image& adv, int label, int feature_channel) {
    write_pgm(dir / (stem + "_gradcam_clean.pgm"), grad_cam(model, clean, label));
    write_pgm(dir / (stem + "_gradcam_adv.pgm"), grad_cam(model, adv, label));
    if (model.has_attention()) {
        write_pgm(dir / (stem + "_rollout_clean.pgm"), attention_rollout(model, clean));
        write_pgm(dir / (stem + "_rollout_adv.pgm"), attention_rollout(model, adv));
    }
    write_pgm(dir / (stem + "_featdiff.pgm"), feature_map_diff(model, clean, adv, feature_channel));
}

}  // namespace

ExperimentData load_experiment_data(const DatasetConfig& config) {
    if (config.labels_csv) return {LabeledSet{}, load_labeled_directory(*config.labels_csv)};
    ToyDataset toy = generate_toy_dataset(config.seed, config.n_train, config.n_test);
    return {std::move(toy.train), std::move(toy.test)};
}

std::string model_cache_name(const ModelConfig& model, const DatasetConfig& dataset) {
    const TrainConfig& t = model.train;
    std::uint64_t h = hash_combine(static_cast<std::uint64_t>(model.kind), model.init_seed);
    for (std::uint64_t v : {static_cast<std::uint64_t>(t.optimizer), static_cast<std::uint64_t>(t.epochs),
                            static_cast<std::uint64_t>(t.batch_size), bits(t.learning_rate), t.seed, bits(t.momentum),
                            bits(t.adam_beta2), static_cast<std::uint64_t>(t.cosine_schedule), dataset.seed,
                            static_cast<std::uint64_t>(dataset.n_train), static_cast<std::uint64_t>(kToyRenderVersion)}) {
        h = hash_combine(h, v);
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return to_string(model.kind) + "_" + buf + ".pbck";
}

PreparedModel prepare_model(const ModelConfig& config, const DatasetConfig& dataset, const ExperimentData& data,
                            const PrepareOptions& options) {
    PreparedModel out;
    out.name = config.name;
    std::optional<std::filesystem::path> store;
    if (config.checkpoint) {
        store = config.checkpoint;
    } else if (options.cache_dir && !dataset.labels_csv) {
        store = *options.cache_dir / model_cache_name(config, dataset);
    }

    if (store && std::filesystem::exists(*store)) {
        out.model = load_checkpoint(*store);
        if (out.model->kind() != config.kind) {
            throw CheckpointError(store->string() + " holds a " + to_string(out.model->kind()) + ", expected " +
                                  to_string(config.kind));
        }
        out.origin = config.checkpoint ? "checkpoint" : "cache";
        log_line(options.log, config.name + ": loaded " + store->string());
    } else {
        if (data.train.empty()) {
            throw std::invalid_argument(config.name + ": no checkpoint and no training data");
        }
        auto model = make_model(config.kind, config.init_seed);
        const auto start = Clock::now();
        train(*model, data.train, nullptr, config.train);
        // The round trip pins the weights to their stored float values, so a
        // fresh model and a cached one behave identically.
        out.model = deserialize_checkpoint(serialize_checkpoint(*model));
        out.origin = "trained";
        log_line(options.log, config.name + ": trained in " + format_number(seconds_since(start)) + " s");
        if (store) {
            if (store->has_parent_path()) std::filesystem::create_directories(store->parent_path());
            save_checkpoint(*out.model, *store);
        }
    }
    out.test_accuracy = accuracy(*out.model, data.test);
    log_line(options.log, config.name + ": test accuracy " + format_number(out.test_accuracy));
    return out;
}

std::vector<PreparedModel> prepare_models(const ExperimentConfig& config, const ExperimentData& data,
                                          const PrepareOptions& options) {
    std::vector<PreparedModel> out;
    for (const auto& m : config.models) out.push_back(prepare_model(m, config.dataset, data, options));
    return out;
}

SampleSet select_clean_correct(const std::vector<const Classifier*>& models, const LabeledSet& test, int n) {
    if (n <= 0) throw std::invalid_argument("select_clean_correct: n must be positive");
    if (models.empty()) throw std::invalid_argument("select_clean_correct: no models");
    std::vector<char> correct(test.size(), 0);
    parallel_for(test.size(), [&](std::size_t i) {
        bool ok = true;
        for (const Classifier* m : models) ok = ok && predict(*m, test.images[i]) == test.labels[i];
        correct[i] = ok ? 1 : 0;
    });
    SampleSet out;
    for (std::size_t i = 0; i < test.size() && out.samples.size() < static_cast<std::size_t>(n); ++i) {
        if (!correct[i]) continue;
        out.samples.push_back(test.images[i], test.labels[i]);
        out.test_indices.push_back(i);
    }
    if (out.samples.size() < static_cast<std::size_t>(n)) {
        throw std::runtime_error("only " + std::to_string(out.samples.size()) + " of " +
                                 std::to_string(test.size()) + " test images are classified correctly by every model; " +
                                 std::to_string(n) + " requested");
    }
    return out;
}

std::uint64_t sample_seed(std::uint64_t master_seed, std::size_t index) {
    return hash_combine(master_seed, static_cast<std::uint64_t>(index));
}

std::vector<std::string> defense_column_names(const std::vector<DefenseSpec>& defenses) {
    std::vector<std::string> names;
    std::map<std::string, int> seen;
    for (const auto& d : defenses) {
        const std::string base = to_string(d.kind);
        const int n = ++seen[base];
        names.push_back(n == 1 ? base : base + "_" + std::to_string(n));
    }
    return names;
}

std::string attack_tag(const AttackSpec& spec) {
    std::string tag = spec.label();
    if (spec.ball) tag += "_e" + eps_text(spec.ball->epsilon);
    return tag;
}

CellReport run_cell(const PreparedModel& model, const AttackEntry& attack, const SampleSet& samples,
                    const std::vector<DefenseSpec>& defenses, std::uint64_t master_seed, const GridOptions& options,
                    int feature_channel) {
    const AttackSpec& spec = attack.spec;
    const std::size_t count = attack.sample_count
                                  ? std::min<std::size_t>(static_cast<std::size_t>(*attack.sample_count),
                                                          samples.samples.size())
                                  : samples.samples.size();
    if (count == 0) throw std::invalid_argument("run_cell: no samples");
    const Classifier& net = *model.model;

    CellReport cell;
    cell.model = model.name;
    cell.attack = spec.label();
    if (spec.ball) cell.epsilon = spec.ball->epsilon;
    cell.samples = static_cast<int>(count);

    const auto attack_start = Clock::now();
    const std::vector<AttackResult> results =
        generate_adversarials(net, spec, samples, count, master_seed, &cell.uap_fooling_rate);
    cell.attack_seconds = seconds_since(attack_start);

    std::vector<QualityReport> q(count);
    std::vector<SpectrumHeatmap> spectra(count);
    // wrong[i][d]: defended prediction of sample i under column d differs from the label.
    std::vector<std::vector<char>> wrong(count, std::vector<char>(defenses.size() + 1, 0));
    const auto defense_start = Clock::now();
    parallel_for(count, [&](std::size_t i) {
        const Image& clean = samples.samples.images[i];
        const Image& adv = results[i].adversarial;
        const int label = samples.samples.labels[i];
        q[i] = quality(clean, adv);
        spectra[i] = dct_spectrum(difference(adv, clean));
        wrong[i][0] = predict(net, adv) != label;
        for (std::size_t d = 0; d < defenses.size(); ++d) {
            wrong[i][d + 1] = predict(net, apply_defense(defenses[d], adv)) != label;
        }
    });
    cell.defense_seconds = seconds_since(defense_start);

    const double n = static_cast<double>(count);
    double psnr_sum = 0.0;
    std::size_t psnr_finite = 0;
    double queries = 0.0;
    cell.top1_error.assign(defenses.size() + 1, 0.0);
    SpectrumHeatmap& mean = cell.mean_spectrum;
    mean.rows = spectra.front().rows;
    mean.cols = spectra.front().cols;
    mean.coefficients.assign(spectra.front().coefficients.size(), 0.0);
    for (std::size_t i = 0; i < count; ++i) {
        if (std::isfinite(q[i].psnr)) {
            psnr_sum += q[i].psnr;
            ++psnr_finite;
        }
        cell.quality.ssim += q[i].ssim;
        cell.quality.l0_fraction += q[i].l0_fraction;
        cell.quality.l1 += q[i].l1;
        cell.quality.l2 += q[i].l2;
        cell.quality.linf += q[i].linf;
        cell.spread_radius += spectra[i].spread_radius;
        queries += static_cast<double>(results[i].queries_used);
        for (std::size_t d = 0; d < cell.top1_error.size(); ++d) cell.top1_error[d] += wrong[i][d];
        for (std::size_t k = 0; k < mean.coefficients.size(); ++k) mean.coefficients[k] += spectra[i].coefficients[k];
    }
    cell.quality.psnr = psnr_finite ? psnr_sum / static_cast<double>(psnr_finite) : kPsnrIdentical;
    cell.quality.ssim /= n;
    cell.quality.l0_fraction /= n;
    cell.quality.l1 /= n;
    cell.quality.l2 /= n;
    cell.quality.linf /= n;
    cell.spread_radius /= n;
    cell.mean_queries = queries / n;
    for (double& e : cell.top1_error) e /= n;
    // Success is read off the prediction, so ASR and the undefended error agree by construction.
    cell.asr = cell.top1_error[0];

    const double max_radius = std::hypot(mean.rows - 1, mean.cols - 1);
    double weighted = 0.0;
    for (int u = 0; u < mean.rows; ++u) {
        for (int v = 0; v < mean.cols; ++v) {
            double& e = mean.coefficients[static_cast<std::size_t>(u * mean.cols + v)];
            e /= n;
            mean.total_energy += e;
            weighted += e * std::hypot(u, v);
        }
    }
    mean.spread_radius = mean.total_energy > 0.0 && max_radius > 0.0 ? weighted / mean.total_energy / max_radius : 0.0;

    if (options.heatmap_dir) {
        const auto& dir = *options.heatmap_dir;
        std::filesystem::create_directories(dir);
        const std::string stem = model.name + "_" + attack_tag(spec);
        write_spectrum_pgm(dir / (stem + "_spectrum.pgm"), mean);
        write_spectrum_csv(dir / (stem + "_spectrum.csv"), mean);
        if (feature_channel >= 0) {
            write_saliency(dir, stem, net, samples.samples.images[0], results[0].adversarial,
                           samples.samples.labels[0], feature_channel);
        }
    }
    return cell;
}

EvalReport run_grid(const ExperimentConfig& config, const std::vector<PreparedModel>& models,
                    const SampleSet& samples, const GridOptions& options) {
    config.validate();
    EvalReport report;
    report.master_seed = config.master_seed;
    report.sample_count = static_cast<int>(samples.samples.size());
    report.defense_names = {"none"};
    for (const auto& name : defense_column_names(config.defenses)) report.defense_names.push_back(name);
    for (const auto& m : models) report.model_accuracy.emplace_back(m.name, m.test_accuracy);

    for (const auto& m : models) {
        // Models without spatial taps (linear) get spectra but no saliency maps.
        int channel = -1;
        try {
            const int channels = m.model->first_block_features(samples.samples.images.front()).channels;
            channel = feature_channel_for_seed(config.master_seed, channels);
        } catch (const TapUnavailable&) {
        }
        if (&m == &models.front()) report.feature_channel = channel;
        for (const auto& a : config.attacks) {
            log_line(options.log, m.name + " / " + attack_tag(a.spec));
            report.cells.push_back(run_cell(m, a, samples, config.defenses, config.master_seed, options,
                                            config.saliency_maps ? channel : -1));
            if (options.on_cell) options.on_cell(report);
        }
    }
    return report;
}

TransferMatrix transfer_matrix(const std::vector<PreparedModel>& models, const AttackSpec& spec,
                               const SampleSet& samples, std::uint64_t master_seed) {
    if (models.empty()) throw std::invalid_argument("transfer_matrix: no models");
    TransferMatrix out;
    out.attack = spec.label();
    const std::size_t count = samples.samples.size();
    for (const auto& m : models) out.models.push_back(m.name);
    out.asr.assign(models.size(), std::vector<double>(models.size(), 0.0));
    for (std::size_t s = 0; s < models.size(); ++s) {
        const auto adv = generate_adversarials(*models[s].model, spec, samples, count, master_seed, nullptr);
        std::vector<std::vector<char>> fooled(count, std::vector<char>(models.size(), 0));
        parallel_for(count, [&](std::size_t i) {
            for (std::size_t t = 0; t < models.size(); ++t) {
                fooled[i][t] = predict(*models[t].model, adv[i].adversarial) != samples.samples.labels[i];
            }
        });
        for (std::size_t t = 0; t < models.size(); ++t) {
            std::size_t k = 0;
            for (std::size_t i = 0; i < count; ++i) k += fooled[i][t];
            out.asr[s][t] = static_cast<double>(k) / static_cast<double>(count);
        }
    }
    return out;
}

EotReport run_eot_experiment(const EotConfig& config, const std::vector<PreparedModel>& models,
                             const SampleSet& samples, std::uint64_t master_seed) {
    const TransformDistribution dist = TransformDistribution::of(config.members, config.mc_samples);
    const LpBall ball{Norm::Linf, config.epsilon};
    const double step = config.eps_step > 0.0 ? config.eps_step : config.epsilon / 10.0;
    const std::size_t count = samples.samples.size();
    const auto seeds = sample_seeds(master_seed, samples, count);

    EotReport report;
    for (DefenseKind k : config.members) report.members.push_back(to_string(k));
    report.mc_samples = config.mc_samples;
    report.epsilon = config.epsilon;
    report.steps = config.steps;
    report.samples = static_cast<int>(count);

    for (const auto& m : models) {
        const Classifier& net = *m.model;
        const std::size_t k = dist.members.size();
        std::vector<std::vector<char>> plain_wrong(count, std::vector<char>(k, 0));
        std::vector<std::vector<char>> eot_wrong(count, std::vector<char>(k, 0));
        parallel_for(count, [&](std::size_t i) {
            const Image& x = samples.samples.images[i];
            const int label = samples.samples.labels[i];
            const Image plain = pgd(net, x, label, ball, config.steps, step).adversarial;
            const Image adaptive = eot_pgd(net, x, label, ball, config.steps, step, dist, seeds[i]).adversarial;
            for (std::size_t d = 0; d < k; ++d) {
                plain_wrong[i][d] = predict(net, apply_defense(dist.members[d], plain)) != label;
                eot_wrong[i][d] = predict(net, apply_defense(dist.members[d], adaptive)) != label;
            }
        });
        EotModelReport r;
        r.model = m.name;
        r.plain_error.assign(k, 0.0);
        r.eot_error.assign(k, 0.0);
        for (std::size_t i = 0; i < count; ++i) {
            for (std::size_t d = 0; d < k; ++d) {
                r.plain_error[d] += plain_wrong[i][d];
                r.eot_error[d] += eot_wrong[i][d];
            }
        }
        for (std::size_t d = 0; d < k; ++d) {
            r.plain_error[d] /= static_cast<double>(count);
            r.eot_error[d] /= static_cast<double>(count);
            r.plain_mean += r.plain_error[d] / static_cast<double>(k);
            r.eot_mean += r.eot_error[d] / static_cast<double>(k);
        }
        report.models.push_back(std::move(r));
    }
    return report;
}

std::string format_number(double value) {
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    if (std::isnan(value)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return buf;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << text;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "model,attack,epsilon,asr,psnr_db,ssim,l0_frac,l1,l2,linf,spread_radius";
    for (const auto& d : report.defense_names) out << ",top1_err_" << d;
    out << '\n';
    for (const auto& c : report.cells) {
        out << c.model << ',' << c.attack << ',' << (c.epsilon ? format_number(*c.epsilon) : "") << ','
            << format_number(c.asr) << ',' << format_number(c.quality.psnr) << ',' << format_number(c.quality.ssim)
            << ',' << format_number(c.quality.l0_fraction) << ',' << format_number(c.quality.l1) << ','
            << format_number(c.quality.l2) << ',' << format_number(c.quality.linf) << ','
            << format_number(c.spread_radius);
        for (double e : c.top1_error) out << ',' << format_number(e);
        out << '\n';
    }
    write_text_atomic(path, out.str());
}

void write_report_json(const EvalReport& report, const std::filesystem::path& path) {
    ordered_json j;
    j["master_seed"] = report.master_seed;
    j["sample_count"] = report.sample_count;
    j["feature_channel"] = report.feature_channel;
    j["defenses"] = report.defense_names;
    ordered_json acc = ordered_json::object();
    for (const auto& [name, a] : report.model_accuracy) acc[name] = a;
    j["model_test_accuracy"] = acc;
    ordered_json cells = ordered_json::array();
    for (const auto& c : report.cells) {
        ordered_json cell;
        cell["model"] = c.model;
        cell["attack"] = c.attack;
        cell["epsilon"] = c.epsilon ? ordered_json(*c.epsilon) : ordered_json(nullptr);
        cell["samples"] = c.samples;
        cell["asr"] = c.asr;
        cell["quality"] = {{"psnr_db", number_json(c.quality.psnr)}, {"ssim", c.quality.ssim},
                           {"l0_frac", c.quality.l0_fraction}, {"l1", c.quality.l1},
                           {"l2", c.quality.l2}, {"linf", c.quality.linf}};
        cell["spread_radius"] = c.spread_radius;
        ordered_json top1 = ordered_json::object();
        for (std::size_t d = 0; d < c.top1_error.size(); ++d) top1[report.defense_names[d]] = c.top1_error[d];
        cell["top1_error"] = top1;
        cell["mean_queries"] = c.mean_queries;
        if (c.uap_fooling_rate) cell["uap_fooling_rate"] = *c.uap_fooling_rate;
        cell["runtime_seconds"] = {{"attack", c.attack_seconds}, {"defenses", c.defense_seconds}};
        cells.push_back(cell);
    }
    j["cells"] = cells;
    write_text_atomic(path, j.dump(2) + "\n");
}

void write_transfer_csv(const TransferMatrix& matrix, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "source";
    for (const auto& m : matrix.models) out << ',' << m;
    out << '\n';
    for (std::size_t s = 0; s < matrix.models.size(); ++s) {
        out << matrix.models[s];
        for (double v : matrix.asr[s]) out << ',' << format_number(v);
        out << '\n';
    }
    write_text_atomic(path, out.str());
}

void write_transfer_json(const TransferMatrix& matrix, const std::filesystem::path& path) {
    ordered_json j;
    j["attack"] = matrix.attack;
    j["models"] = matrix.models;
    j["asr"] = matrix.asr;
    write_text_atomic(path, j.dump(2) + "\n");
}

void write_eot_csv(const EotReport& report, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "model,attack";
    for (const auto& m : report.members) out << ",top1_err_" << m;
    out << ",mean\n";
    for (const auto& r : report.models) {
        out << r.model << ",pgd";
        for (double v : r.plain_error) out << ',' << format_number(v);
        out << ',' << format_number(r.plain_mean) << '\n';
        out << r.model << ",eot_pgd";
        for (double v : r.eot_error) out << ',' << format_number(v);
        out << ',' << format_number(r.eot_mean) << '\n';
    }
    write_text_atomic(path, out.str());
}

void write_eot_json(const EotReport& report, const std::filesystem::path& path) {
    ordered_json j;
    j["members"] = report.members;
    j["mc_samples"] = report.mc_samples;
    j["epsilon"] = report.epsilon;
    j["steps"] = report.steps;
    j["samples"] = report.samples;
    ordered_json models = ordered_json::array();
    for (const auto& r : report.models) {
        models.push_back({{"model", r.model},
                          {"pgd", {{"per_defense", r.plain_error}, {"mean", r.plain_mean}}},
                          {"eot_pgd", {{"per_defense", r.eot_error}, {"mean", r.eot_mean}}}});
    }
    j["models"] = models;
    write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace perturbench
