// perturbench: train toy models, run attacks and defenses, and produce reports.

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "perturbench/analysis.hpp"
#include "perturbench/checkpoint.hpp"
#include "perturbench/config.hpp"
#include "perturbench/harness.hpp"
#include "perturbench/image_io.hpp"
#include "perturbench/metrics.hpp"

namespace fs = std::filesystem;
using namespace perturbench;

namespace {

constexpr int kUsageExit = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Inline JSON, or @path to read it from a file.
std::string json_argument(const std::string& value) {
    return !value.empty() && value.front() == '@' ? read_file(value.substr(1)) : value;
}

struct Run {
    ExperimentConfig config;
    ExperimentData data;
    std::vector<PreparedModel> models;
};

Run prepare_run(const fs::path& config_path, const fs::path& out_dir, const std::string& cache) {
    if (!fs::exists(config_path)) throw UsageError("config file not found: " + config_path.string());
    Run run{load_experiment_config(config_path), {}, {}};
    run.data = load_experiment_data(run.config.dataset);
    PrepareOptions opts;
    opts.cache_dir = cache.empty() ? out_dir / "models" : fs::path(cache);
    opts.log = &std::cerr;
    run.models = prepare_models(run.config, run.data, opts);
    return run;
}

std::vector<const Classifier*> model_pointers(const std::vector<PreparedModel>& models) {
    std::vector<const Classifier*> out;
    for (const auto& m : models) out.push_back(m.model.get());
    return out;
}

int sample_need(const ExperimentConfig& cfg) {
    int n = cfg.sample_count;
    for (const auto& a : cfg.attacks) {
        if (a.sample_count) n = std::max(n, *a.sample_count);
    }
    return n;
}

void print_table(const fs::path& csv) {
    std::ifstream in(csv);
    if (!in) throw UsageError("cannot open " + csv.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(std::move(cells));
    }
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        if (width.size() < r.size()) width.resize(r.size(), 0);
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            std::cout << std::left << std::setw(static_cast<int>(width[c]) + 2) << r[c];
        }
        std::cout << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial robustness toolkit for small image classifiers"};
    app.require_subcommand(1);

    std::string config_path, out_dir, cache_dir;
    auto add_run_options = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
        sub->add_option("--out", out_dir, "Run directory")->required();
        sub->add_option("--model-cache", cache_dir, "Directory for trained weights (default <out>/models)");
    };

    auto* train_cmd = app.add_subcommand("train", "Train or load the configured models and save checkpoints");
    add_run_options(train_cmd);

    auto* grid_cmd = app.add_subcommand("grid", "Run every attack on every model; write report.csv/json and heatmaps");
    add_run_options(grid_cmd);

    auto* transfer_cmd = app.add_subcommand("transfer", "Source x target ASR matrix for one configured attack");
    add_run_options(transfer_cmd);
    int transfer_index = 0;
    transfer_cmd->add_option("--attack", transfer_index, "Index into the config's attack list")->check(CLI::NonNegativeNumber);

    auto* eot_cmd = app.add_subcommand("eot", "Defended top-1 error of plain PGD versus EOT-PGD");
    add_run_options(eot_cmd);

    std::string model_path, image_path, adv_path, spec_text, output_path, defense_text;
    int label = -1;
    std::uint64_t seed = 0;

    auto* attack_cmd = app.add_subcommand("attack", "Attack a single image");
    attack_cmd->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
    attack_cmd->add_option("--image", image_path, "PNG or PPM input")->required()->check(CLI::ExistingFile);
    attack_cmd->add_option("--label", label, "True class")->required();
    attack_cmd->add_option("--spec", spec_text, "Attack JSON, or @file")->required();
    attack_cmd->add_option("--out", output_path, "Adversarial image path")->required();
    attack_cmd->add_option("--seed", seed, "Seed for randomized attacks");

    auto* defend_cmd = app.add_subcommand("defend", "Apply one preprocessing defense to an image");
    defend_cmd->add_option("--defense", defense_text, "Defense name or JSON object")->required();
    defend_cmd->add_option("--image", image_path, "PNG or PPM input")->required()->check(CLI::ExistingFile);
    defend_cmd->add_option("--out", output_path, "Output image path")->required();

    auto* analyze_cmd = app.add_subcommand("analyze", "Spectrum and saliency maps for a clean/adversarial pair");
    analyze_cmd->add_option("--model", model_path, "Checkpoint")->required()->check(CLI::ExistingFile);
    analyze_cmd->add_option("--image", image_path, "Clean image")->required()->check(CLI::ExistingFile);
    analyze_cmd->add_option("--adv", adv_path, "Adversarial image")->required()->check(CLI::ExistingFile);
    analyze_cmd->add_option("--label", label, "Class for Grad-CAM")->required();
    analyze_cmd->add_option("--out", out_dir, "Output directory")->required();
    analyze_cmd->add_option("--seed", seed, "Seed that picks the feature channel");

    std::string run_dir;
    auto* report_cmd = app.add_subcommand("report", "Print a run directory's report as a table");
    report_cmd->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageExit;
    }

    try {
        if (train_cmd->parsed()) {
            Run run = prepare_run(config_path, out_dir, cache_dir);
            fs::create_directories(out_dir);
            for (const auto& m : run.models) {
                const fs::path path = fs::path(out_dir) / (m.name + ".pbck");
                save_checkpoint(*m.model, path);
                std::cout << m.name << " (" << m.origin << ") test_accuracy=" << format_number(m.test_accuracy)
                          << " -> " << path.string() << '\n';
            }
        } else if (grid_cmd->parsed()) {
            Run run = prepare_run(config_path, out_dir, cache_dir);
            const SampleSet samples =
                select_clean_correct(model_pointers(run.models), run.data.test, sample_need(run.config));
            const fs::path out(out_dir);
            GridOptions opts;
            opts.heatmap_dir = out / "heatmaps";
            opts.log = &std::cerr;
            EvalReport partial;
            opts.on_cell = [&](const EvalReport& r) {
                partial = r;
                write_report_csv(r, out / "report.csv");
                write_report_json(r, out / "report.json");
            };
            const EvalReport report = run_grid(run.config, run.models, samples, opts);
            write_report_csv(report, out / "report.csv");
            write_report_json(report, out / "report.json");
            if (run.config.eot) {
                const EotReport eot = run_eot_experiment(*run.config.eot, run.models, samples, run.config.master_seed);
                write_eot_csv(eot, out / "eot.csv");
                write_eot_json(eot, out / "eot.json");
            }
            std::cout << (out / "report.csv").string() << '\n';
        } else if (transfer_cmd->parsed()) {
            Run run = prepare_run(config_path, out_dir, cache_dir);
            if (transfer_index >= static_cast<int>(run.config.attacks.size())) {
                throw UsageError("--attack " + std::to_string(transfer_index) + " is out of range");
            }
            const AttackEntry& entry = run.config.attacks[static_cast<std::size_t>(transfer_index)];
            const SampleSet samples = select_clean_correct(model_pointers(run.models), run.data.test,
                                                           entry.sample_count.value_or(run.config.sample_count));
            const TransferMatrix m = transfer_matrix(run.models, entry.spec, samples, run.config.master_seed);
            write_transfer_csv(m, fs::path(out_dir) / "transfer.csv");
            write_transfer_json(m, fs::path(out_dir) / "transfer.json");
            print_table(fs::path(out_dir) / "transfer.csv");
        } else if (eot_cmd->parsed()) {
            Run run = prepare_run(config_path, out_dir, cache_dir);
            if (!run.config.eot) throw ConfigError("config has no 'eot' section");
            const SampleSet samples =
                select_clean_correct(model_pointers(run.models), run.data.test, run.config.sample_count);
            const EotReport eot = run_eot_experiment(*run.config.eot, run.models, samples, run.config.master_seed);
            write_eot_csv(eot, fs::path(out_dir) / "eot.csv");
            write_eot_json(eot, fs::path(out_dir) / "eot.json");
            print_table(fs::path(out_dir) / "eot.csv");
        } else if (attack_cmd->parsed()) {
            const auto model = load_checkpoint(model_path);
            const Image x = load_image(image_path);
            const AttackSpec spec = parse_attack_json(json_argument(spec_text)).spec;
            if (spec.kind == AttackKind::Uap) throw UsageError("uap needs a crafting set; run it through grid");
            const AttackResult r = run_attack(*model, x, label, spec, seed);
            save_image(r.adversarial, output_path);
            const QualityReport q = quality(x, r.adversarial);
            nlohmann::ordered_json j;
            j["attack"] = spec.label();
            j["success"] = r.success;
            j["prediction"] = predict(*model, r.adversarial);
            j["queries"] = r.queries_used;
            j["iterations"] = r.iterations_used;
            j["final_lp"] = r.final_lp;
            j["psnr_db"] = std::isfinite(q.psnr) ? nlohmann::ordered_json(q.psnr) : nlohmann::ordered_json("inf");
            j["ssim"] = q.ssim;
            j["linf"] = q.linf;
            std::cout << j.dump() << '\n';
        } else if (defend_cmd->parsed()) {
            DefenseSpec spec;
            if (!defense_text.empty() && defense_text.front() == '{') {
                ExperimentConfig probe = parse_experiment_config(
                    R"({"models":[{"kind":"tiny_cnn"}],"attacks":[{"kind":"fgsm"}],"defenses":[)" + defense_text + "]}");
                spec = probe.defenses.front();
            } else {
                spec = DefenseSpec::defaults(parse_defense_kind(defense_text));
            }
            save_image(apply_defense(spec, load_image(image_path)), output_path);
        } else if (analyze_cmd->parsed()) {
            const auto model = load_checkpoint(model_path);
            const Image x = load_image(image_path);
            const Image adv = load_image(adv_path);
            const fs::path out(out_dir);
            fs::create_directories(out);
            const SpectrumHeatmap spectrum = dct_spectrum(difference(adv, x));
            write_spectrum_pgm(out / "spectrum.pgm", spectrum);
            write_spectrum_csv(out / "spectrum.csv", spectrum);
            write_pgm(out / "gradcam_clean.pgm", grad_cam(*model, x, label));
            write_pgm(out / "gradcam_adv.pgm", grad_cam(*model, adv, label));
            if (model->has_attention()) {
                write_pgm(out / "rollout_clean.pgm", attention_rollout(*model, x));
                write_pgm(out / "rollout_adv.pgm", attention_rollout(*model, adv));
            }
            const int channels = model->first_block_features(x).channels;
            const int channel = feature_channel_for_seed(seed, channels);
            write_pgm(out / "featdiff.pgm", feature_map_diff(*model, x, adv, channel));
            std::cout << "spread_radius=" << format_number(spectrum.spread_radius)
                      << " total_energy=" << format_number(spectrum.total_energy) << " feature_channel=" << channel
                      << '\n';
        } else if (report_cmd->parsed()) {
            const fs::path dir(run_dir);
            bool any = false;
            for (const char* name : {"report.csv", "transfer.csv", "eot.csv"}) {
                if (!fs::exists(dir / name)) continue;
                if (any) std::cout << '\n';
                std::cout << "# " << name << '\n';
                print_table(dir / name);
                any = true;
            }
            if (!any) throw UsageError("no report files in " + dir.string());
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageExit;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsageExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
