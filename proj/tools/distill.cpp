// SPDX-License-Identifier: Apache-2.0
// Command-line front end: data generation, training, SL ablation, evaluation
// and attention analysis.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "distill/analysis.hpp"
#include "distill/errors.hpp"
#include "distill/synthetic.hpp"
#include "distill/training.hpp"

namespace fs = std::filesystem;
using namespace distill;

namespace {

fs::path output_root(const fs::path& p) {
    const char* root = std::getenv(kOutputRootEnv);
    if (root != nullptr && *root != '\0' && p.is_relative()) return fs::path(root) / p;
    return p;
}

// Loads either a bare model checkpoint or a student checkpoint; both are model containers.
std::unique_ptr<ToyTransformer> load_model(const fs::path& path) { return load_checkpoint(path).model; }

std::vector<CoTExample> load_corpus(const fs::path& path, CriticalMode mode, int limit) {
    auto data = load_examples(path, mode);
    if (limit > 0 && static_cast<int>(data.size()) > limit) data.resize(static_cast<std::size_t>(limit));
    return data;
}

void write_text(const fs::path& path, const std::string& s) {
    fs::create_directories(path.parent_path());
    std::ofstream(path) << s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chain-of-thought distillation with stepwise attention alignment"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace|debug|info|warn|error");

    // generate
    auto* gen = app.add_subcommand("generate", "Write a synthetic arithmetic dataset (JSON lines)");
    SyntheticOptions gen_opts;
    std::string gen_out;
    gen->add_option("--count", gen_opts.count)->check(CLI::PositiveNumber);
    gen->add_option("--max-operand", gen_opts.max_operand)->check(CLI::Range(2, 1000000));
    gen->add_option("--operations", gen_opts.operations)->check(CLI::Range(1, 2));
    gen->add_option("--seed", gen_opts.seed);
    gen->add_option("--out", gen_out)->required();

    // train
    auto* train = app.add_subcommand("train", "Run distillation from a config file");
    std::string train_config;
    train->add_option("--config", train_config)->required()->check(CLI::ExistingFile);

    // ablate-sl
    auto* ablate = app.add_subcommand("ablate-sl", "Fixed single-layer mappings against MoL");
    std::string ablate_config;
    std::string ablate_pairs;
    ablate->add_option("--config", ablate_config)->required()->check(CLI::ExistingFile);
    ablate->add_option("--pairs", ablate_pairs, "teacher:student pairs, 0-based, comma separated")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a saved student");
    std::string eval_ckpt;
    std::string eval_config;
    std::vector<std::string> eval_data;
    eval->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
    eval->add_option("--config", eval_config, "run config (teacher, eval files, loss settings)")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--data", eval_data, "eval files overriding the config");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Attention diagnostics");
    analyze->require_subcommand(1);
    std::string an_ckpt, an_data, an_out = "analysis", an_mode = "math", an_run, an_csv;
    int an_layer = -1, an_index = 0, an_limit = 100;
    bool an_drop_first = false, an_mailman = false;

    auto* hm = analyze->add_subcommand("heatmap", "Steps x critical-words matrices");
    hm->add_option("--checkpoint", an_ckpt)->required()->check(CLI::ExistingFile);
    hm->add_option("--data", an_data)->check(CLI::ExistingFile);
    hm->add_flag("--mailman", an_mailman, "use the built-in mailman example");
    hm->add_option("--index", an_index, "example index in --data");
    hm->add_option("--layer", an_layer, "0-based layer; omit for all layers");
    hm->add_flag("--drop-first-token", an_drop_first);
    hm->add_option("--mode", an_mode);
    hm->add_option("--out", an_out);

    auto* gp = analyze->add_subcommand("gradient-profile", "Per-layer mean column gradient");
    gp->add_option("--checkpoint", an_ckpt)->required()->check(CLI::ExistingFile);
    gp->add_option("--data", an_data)->required()->check(CLI::ExistingFile);
    gp->add_option("--limit", an_limit);
    gp->add_option("--mode", an_mode);
    gp->add_option("--out", an_out);

    auto* pr = analyze->add_subcommand("proportions", "Numeric vs non-numeric attention shares");
    pr->add_option("--checkpoint", an_ckpt)->required()->check(CLI::ExistingFile);
    pr->add_option("--data", an_data)->required()->check(CLI::ExistingFile);
    pr->add_option("--limit", an_limit);
    pr->add_option("--out", an_out);

    auto* lw = analyze->add_subcommand("layer-weights", "Teacher/student layer weights of a run");
    lw->add_option("--run", an_run, "run directory written by train")->required()->check(CLI::ExistingDirectory);
    lw->add_option("--out", an_out);

    auto* plot = analyze->add_subcommand("plot", "Render a matrix CSV as a PPM heatmap");
    plot->add_option("--csv", an_csv)->required()->check(CLI::ExistingFile);
    plot->add_option("--out", an_out);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*gen) {
            write_dataset(gen_out, generate_arithmetic(gen_opts));
            fmt::print("wrote {} examples to {}\n", gen_opts.count, gen_out);
        } else if (*train) {
            const auto config = RunConfig::load(train_config);
            const auto result = run_distillation(config);
            for (const auto& r : result.reports) {
                fmt::print("{}: accuracy {:.4f}  mean L_att {:.6f}  ({} examples)\n", r.dataset,
                           r.exact_match_accuracy, r.mean_l_att_on_eval, r.n_examples);
            }
            fmt::print("outputs in {}\n", result.output_dir.string());
        } else if (*ablate) {
            const auto config = RunConfig::load(ablate_config);
            const auto table = run_sl_ablation(config, parse_layer_pairs(ablate_pairs));
            fmt::print("{}", table.to_markdown());
        } else if (*eval) {
            auto config = RunConfig::load(eval_config);
            if (!eval_data.empty()) config.eval_paths.assign(eval_data.begin(), eval_data.end());
            const auto student = load_student(eval_ckpt);
            if (config.teacher_checkpoint.empty() || !fs::exists(config.teacher_checkpoint)) {
                throw DistillError(ErrorCode::ConfigInvalid, "eval needs an existing teacher_checkpoint");
            }
            const auto teacher = load_model(config.teacher_checkpoint);
            nlohmann::json out = nlohmann::json::array();
            for (const auto& p : config.eval_paths) {
                const auto data = load_examples(p, config.mode);
                out.push_back(evaluate(*student.model, student.router, *teacher, data, config, p.stem().string()).to_json());
            }
            fmt::print("{}\n", out.dump(2));
        } else if (*analyze) {
            const fs::path out_dir = output_root(an_out);
            fs::create_directories(out_dir);
            const auto mode = parse_critical_mode(an_mode);
            if (*hm) {
                Manifest manifest(out_dir, "heatmap");
                const auto model = load_model(an_ckpt);
                CoTExample example = mailman_example();
                if (!an_mailman) {
                    if (an_data.empty()) throw DistillError(ErrorCode::ConfigInvalid, "heatmap needs --data or --mailman");
                    const auto data = load_examples(an_data, mode);
                    if (an_index < 0 || an_index >= static_cast<int>(data.size())) {
                        throw DistillError(ErrorCode::ConfigInvalid, "--index out of range");
                    }
                    example = data[static_cast<std::size_t>(an_index)];
                }
                std::vector<HeatmapExport> maps;
                if (an_layer >= 0) maps.push_back(heatmap(example, *model, an_layer, an_drop_first, mode));
                else maps = heatmap_all_layers(example, *model, an_drop_first, mode);
                for (const auto& h : maps) {
                    const auto stem = fmt::format("{}_layer{:02d}", model->model_id(), h.layer);
                    const auto files = write_heatmap(out_dir, stem, h);
                    manifest.add("matrix_csv", files[0]);
                    manifest.add("labels_json", files[1]);
                    manifest.add("image_ppm", files[2]);
                }
                manifest.set("shape", {maps.front().matrix.rows(), maps.front().matrix.cols()});
                fmt::print("{} heatmap(s) of shape {}x{} in {}\n", maps.size(), maps.front().matrix.rows(),
                           maps.front().matrix.cols(), manifest.write().string());
            } else if (*gp) {
                Manifest manifest(out_dir, "gradient-profile");
                const auto model = load_model(an_ckpt);
                const auto profile = gradient_profile(load_corpus(an_data, mode, an_limit), *model, mode);
                std::string csv = "layer,mean_column_gradient\n";
                for (std::size_t l = 0; l < profile.size(); ++l) csv += fmt::format("{},{:.17g}\n", l, profile[l]);
                write_text(out_dir / "gradient_profile.csv", csv);
                write_bar_chart_ppm(out_dir / "gradient_profile.ppm", {profile});
                const auto peak = std::max_element(profile.begin(), profile.end()) - profile.begin();
                manifest.add("profile_csv", out_dir / "gradient_profile.csv");
                manifest.add("image_ppm", out_dir / "gradient_profile.ppm");
                manifest.set("peak_layer", peak);
                manifest.write();
                fmt::print("{}peak layer {}\n", csv, peak);
            } else if (*pr) {
                Manifest manifest(out_dir, "proportions");
                const auto model = load_model(an_ckpt);
                const auto report = proportion_report(load_corpus(an_data, CriticalMode::Math, an_limit), *model);
                write_text(out_dir / "proportions.json", report.to_json().dump(2));
                std::vector<double> num, other;
                for (const auto& [a, b] : report.per_step) {
                    num.push_back(a);
                    other.push_back(b);
                }
                write_bar_chart_ppm(out_dir / "proportions.ppm", {num, other});
                manifest.add("report_json", out_dir / "proportions.json");
                manifest.add("image_ppm", out_dir / "proportions.ppm");
                manifest.write();
                fmt::print("{}\n", report.to_json().dump(2));
            } else if (*lw) {
                Manifest manifest(out_dir, "layer-weights");
                std::string csv = "seed,dataset,model,layer,weight\n";
                std::vector<double> teacher_mean, student_mean;
                int runs = 0;
                for (const auto& entry : fs::directory_iterator(an_run)) {
                    const auto file = entry.path() / "layer_weights.json";
                    if (!entry.is_directory() || !fs::exists(file)) continue;
                    const auto j = nlohmann::json::parse(std::ifstream(file));
                    for (const auto& d : j) {
                        for (const char* who : {"teacher", "student"}) {
                            const auto w = d.at(who).get<std::vector<double>>();
                            auto& mean = std::string(who) == "teacher" ? teacher_mean : student_mean;
                            if (mean.size() < w.size()) mean.resize(w.size(), 0.0);
                            for (std::size_t l = 0; l < w.size(); ++l) {
                                csv += fmt::format("{},{},{},{},{:.17g}\n", entry.path().filename().string(),
                                                   d.at("dataset").get<std::string>(), who, l, w[l]);
                                mean[l] += w[l];
                            }
                        }
                        ++runs;
                    }
                }
                if (runs == 0) throw DistillError(ErrorCode::IoError, "no layer_weights.json under " + an_run);
                for (auto& v : teacher_mean) v /= runs;
                for (auto& v : student_mean) v /= runs;
                write_text(out_dir / "layer_weights.csv", csv);
                write_bar_chart_ppm(out_dir / "teacher_weights.ppm", {teacher_mean});
                write_bar_chart_ppm(out_dir / "student_weights.ppm", {student_mean});
                manifest.add("weights_csv", out_dir / "layer_weights.csv");
                manifest.add("image_ppm", out_dir / "teacher_weights.ppm");
                manifest.add("image_ppm", out_dir / "student_weights.ppm");
                manifest.set("teacher_mean", teacher_mean);
                manifest.set("student_mean", student_mean);
                manifest.write();
                fmt::print("teacher {}\nstudent {}\n", nlohmann::json(teacher_mean).dump(),
                           nlohmann::json(student_mean).dump());
            } else if (*plot) {
                Manifest manifest(out_dir, "plot");
                const auto image = out_dir / (fs::path(an_csv).stem().string() + ".ppm");
                write_heatmap_ppm(image, read_matrix_csv(an_csv));
                manifest.add("image_ppm", image);
                manifest.write();
                fmt::print("wrote {}\n", image.string());
            }
        }
    } catch (const DistillError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
