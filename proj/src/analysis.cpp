// SPDX-License-Identifier: Apache-2.0
#include "distill/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "distill/alignment.hpp"
#include "distill/errors.hpp"
#include "distill/losses.hpp"
#include "distill/mol_router.hpp"
#include "distill/segmentation.hpp"
#include "distill/text_util.hpp"
#include "distill/tokenizer.hpp"

namespace distill {

namespace fs = std::filesystem;

namespace {

// Body block (question+rationale tokens) of every layer's attention for the explain pass.
struct BodyAttention {
    std::vector<ag::Matrix> layers;
    TokenAlignment alignment;
};

BodyAttention body_attention(const CoTExample& example, const WhiteBoxModel& model, CriticalMode mode) {
    ag::NoGradGuard no_grad;
    BodyAttention out;
    out.alignment = build_alignment(example, mode, model.tokenizer(), model.model_id());
    const auto seq = explain_sequence(model.tokenizer(), example);
    const auto stack = extract_stack(model, seq.input_ids);
    const Eigen::Index off = seq.body_offset;
    for (const auto& a : stack.attention) {
        const Eigen::Index n = a.rows() - off;
        out.layers.push_back(a.value().block(off, off, n, n));
    }
    return out;
}

std::vector<std::string> step_labels(const CoTExample& example) {
    const auto body = cot_text(example);
    std::vector<std::string> out;
    for (const auto& s : segment_steps(body).steps) out.push_back(body.substr(s.begin, s.size()));
    return out;
}

std::vector<std::string> critical_labels(const CoTExample& example, CriticalMode mode) {
    std::vector<std::string> out;
    for (const auto& o : find_critical_words(example, mode).occurrences) out.push_back(o.surface);
    return out;
}

HeatmapExport make_export(const CoTExample& example, const WhiteBoxModel& model, const BodyAttention& body,
                          int layer, bool drop_first, CriticalMode mode) {
    HeatmapExport out;
    const auto& attn = body.layers[static_cast<std::size_t>(layer)];
    out.matrix = aggregate_stepwise(drop_first ? drop_first_token(attn) : attn, body.alignment);
    out.step_labels = step_labels(example);
    out.critical_labels = critical_labels(example, mode);
    out.layer = layer;
    out.dropped_first_token = drop_first;
    out.model_id = model.model_id();
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DistillError(ErrorCode::IoError, "cannot write " + path.string());
    out << content;
}

struct Rgb {
    unsigned char r, g, b;
};

// White to dark blue ramp.
Rgb ramp(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const auto mix = [&](double a, double b) { return static_cast<unsigned char>(std::lround(a + (b - a) * t)); };
    return {mix(255, 8), mix(255, 48), mix(255, 107)};
}

void write_ppm(const fs::path& path, int w, int h, const std::vector<Rgb>& pixels) {
    std::string data = fmt::format("P6\n{} {}\n255\n", w, h);
    data.reserve(data.size() + pixels.size() * 3);
    for (const auto& p : pixels) {
        data.push_back(static_cast<char>(p.r));
        data.push_back(static_cast<char>(p.g));
        data.push_back(static_cast<char>(p.b));
    }
    write_file(path, data);
}

}  // namespace

HeatmapExport heatmap(const CoTExample& example, const WhiteBoxModel& model, int layer, bool drop_first_token,
                      CriticalMode mode) {
    if (layer < 0 || layer >= model.layer_count()) {
        throw DistillError(ErrorCode::ConfigInvalid, fmt::format("layer {} outside [0, {})", layer, model.layer_count()));
    }
    const auto body = body_attention(example, model, mode);
    return make_export(example, model, body, layer, drop_first_token, mode);
}

std::vector<HeatmapExport> heatmap_all_layers(const CoTExample& example, const WhiteBoxModel& model,
                                              bool drop_first_token, CriticalMode mode) {
    const auto body = body_attention(example, model, mode);
    std::vector<HeatmapExport> out;
    for (int l = 0; l < model.layer_count(); ++l) out.push_back(make_export(example, model, body, l, drop_first_token, mode));
    return out;
}

void write_matrix_csv(const fs::path& path, const ag::Matrix& m) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out += fmt::format("{}{:.17g}", j ? "," : "", m(i, j));
        out += "\n";
    }
    write_file(path, out);
}

ag::Matrix read_matrix_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DistillError(ErrorCode::IoError, "cannot read " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw DistillError(ErrorCode::DataParseError, path.string() + ": ragged matrix");
        }
        rows.push_back(std::move(row));
    }
    ag::Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

std::vector<fs::path> write_heatmap(const fs::path& dir, const std::string& stem, const HeatmapExport& h) {
    const fs::path csv = dir / (stem + ".csv");
    const fs::path json = dir / (stem + ".json");
    const fs::path ppm = dir / (stem + ".ppm");
    write_matrix_csv(csv, h.matrix);
    const nlohmann::json labels{{"model_id", h.model_id},
                                {"layer", h.layer},
                                {"drop_first_token", h.dropped_first_token},
                                {"rows", h.matrix.rows()},
                                {"cols", h.matrix.cols()},
                                {"step_labels", h.step_labels},
                                {"critical_labels", h.critical_labels},
                                {"column_gradient", column_gradient(h.matrix)}};
    write_file(json, labels.dump(2));
    write_heatmap_ppm(ppm, h.matrix);
    return {csv, json, ppm};
}

std::vector<double> gradient_profile(const std::vector<CoTExample>& corpus, const WhiteBoxModel& model,
                                     CriticalMode mode) {
    std::vector<double> profile(static_cast<std::size_t>(model.layer_count()), 0.0);
    if (corpus.empty()) return profile;
    for (const auto& e : corpus) {
        try {
            const auto body = body_attention(e, model, mode);
            for (std::size_t l = 0; l < body.layers.size(); ++l) {
                profile[l] += column_gradient(aggregate_stepwise(body.layers[l], body.alignment));
            }
        } catch (const DistillError& err) {
            spdlog::warn("gradient profile: example counted as 0 ({})", err.what());
        }
    }
    for (auto& v : profile) v /= static_cast<double>(corpus.size());
    return profile;
}

double ProportionReport::numeric_majority_fraction() const {
    if (per_step.empty()) return 0.0;
    const auto n = std::count_if(per_step.begin(), per_step.end(), [](const auto& p) { return p.first > 0.5; });
    return static_cast<double>(n) / static_cast<double>(per_step.size());
}

nlohmann::json ProportionReport::to_json() const {
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t i = 0; i < per_step.size(); ++i) {
        steps.push_back({{"step", i + 1},
                         {"numeric_share", per_step[i].first},
                         {"non_numeric_share", per_step[i].second},
                         {"raw_numeric_mass_share", raw_mass_share[i].first},
                         {"raw_non_numeric_mass_share", raw_mass_share[i].second},
                         {"examples", examples_per_step[i]}});
    }
    return {{"per_step", steps},
            {"examples_used", examples_used},
            {"examples_skipped", examples_skipped},
            {"numeric_majority_fraction", numeric_majority_fraction()}};
}

ProportionReport proportion_report(const std::vector<CoTExample>& corpus, const WhiteBoxModel& model) {
    ag::NoGradGuard no_grad;
    ProportionReport report;
    std::vector<std::pair<double, double>> soft_sum;
    std::vector<std::pair<double, double>> raw_sum;
    for (const auto& e : corpus) {
        const std::string body = cot_text(e);
        const std::size_t question_end = text::trim(e.question).size();
        const auto numbers = find_numbers(body);
        const auto tokens = model.tokenizer().encode(body);
        std::vector<int> numeric_cols;
        std::vector<int> other_cols;
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            if (tokens[t].begin >= question_end) break;
            if (text::is_space(body[tokens[t].begin])) continue;
            const bool numeric = std::any_of(numbers.begin(), numbers.end(), [&](const CriticalOccurrence& o) {
                return o.span.overlaps(tokens[t].begin, tokens[t].end);
            });
            (numeric ? numeric_cols : other_cols).push_back(static_cast<int>(t));
        }
        if (numeric_cols.empty()) {
            spdlog::info("proportion report: question without numbers skipped");
            ++report.examples_skipped;
            continue;
        }
        if (other_cols.empty()) {
            ++report.examples_skipped;
            continue;
        }
        const auto seg = segment_steps(body);
        const auto seq = explain_sequence(model.tokenizer(), e);
        const auto stack = extract_stack(model, seq.input_ids);
        const Eigen::Index off = seq.body_offset;
        const Eigen::Index n = static_cast<Eigen::Index>(tokens.size());
        ag::Matrix mean_attn = ag::Matrix::Zero(n, n);
        for (const auto& a : stack.attention) mean_attn += a.value().block(off, off, n, n);
        mean_attn /= static_cast<double>(stack.layer_count());

        std::vector<std::vector<int>> step_rows(seg.step_count());
        for (std::size_t t = 0; t < tokens.size(); ++t) step_rows[seg.step_of(tokens[t].begin)].push_back(static_cast<int>(t));
        for (std::size_t s = 0; s < step_rows.size(); ++s) {
            // Causal pairs only: a row can see columns at or before it.
            double num_mass = 0.0, other_mass = 0.0;
            int num_pairs = 0, other_pairs = 0;
            for (int r : step_rows[s]) {
                for (int c : numeric_cols) {
                    if (c > r) continue;
                    num_mass += mean_attn(r, c);
                    ++num_pairs;
                }
                for (int c : other_cols) {
                    if (c > r) continue;
                    other_mass += mean_attn(r, c);
                    ++other_pairs;
                }
            }
            if (num_pairs == 0 || other_pairs == 0) continue;
            const double a = num_mass / num_pairs;
            const double b = other_mass / other_pairs;
            const double m = std::max(a, b);
            const double ea = std::exp(a - m);
            const double eb = std::exp(b - m);
            if (soft_sum.size() <= s) {
                soft_sum.resize(s + 1, {0.0, 0.0});
                raw_sum.resize(s + 1, {0.0, 0.0});
                report.examples_per_step.resize(s + 1, 0);
            }
            soft_sum[s].first += ea / (ea + eb);
            soft_sum[s].second += eb / (ea + eb);
            const double total = num_mass + other_mass;
            raw_sum[s].first += total > 0.0 ? num_mass / total : 0.5;
            raw_sum[s].second += total > 0.0 ? other_mass / total : 0.5;
            ++report.examples_per_step[s];
        }
        ++report.examples_used;
    }
    // Step indices no example reached keep a zero count and are dropped from the tail.
    while (!report.examples_per_step.empty() && report.examples_per_step.back() == 0) {
        report.examples_per_step.pop_back();
        soft_sum.pop_back();
        raw_sum.pop_back();
    }
    for (std::size_t s = 0; s < soft_sum.size(); ++s) {
        const double k = std::max(1, report.examples_per_step[s]);
        report.per_step.emplace_back(soft_sum[s].first / k, soft_sum[s].second / k);
        report.raw_mass_share.emplace_back(raw_sum[s].first / k, raw_sum[s].second / k);
        if (report.examples_per_step[s] == 0) {
            report.per_step.back() = {0.5, 0.5};
            report.raw_mass_share.back() = {0.5, 0.5};
        }
    }
    return report;
}

void write_heatmap_ppm(const fs::path& path, const ag::Matrix& m, int cell) {
    const int w = std::max<int>(1, static_cast<int>(m.cols()) * cell);
    const int h = std::max<int>(1, static_cast<int>(m.rows()) * cell);
    const double lo = m.size() ? m.minCoeff() : 0.0;
    const double hi = m.size() ? m.maxCoeff() : 1.0;
    const double span = hi > lo ? hi - lo : 1.0;
    std::vector<Rgb> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), Rgb{255, 255, 255});
    for (int y = 0; y < h && m.size(); ++y) {
        for (int x = 0; x < w; ++x) px[static_cast<std::size_t>(y * w + x)] = ramp((m(y / cell, x / cell) - lo) / span);
    }
    write_ppm(path, w, h, px);
}

void write_bar_chart_ppm(const fs::path& path, const std::vector<std::vector<double>>& series, int bar_width,
                         int height) {
    static constexpr Rgb kColors[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}};
    std::size_t groups = 0;
    double top = 0.0;
    for (const auto& s : series) {
        groups = std::max(groups, s.size());
        for (double v : s) top = std::max(top, v);
    }
    if (top <= 0.0) top = 1.0;
    const int per_group = static_cast<int>(series.size()) * bar_width + bar_width;
    const int w = std::max(1, static_cast<int>(groups) * per_group);
    std::vector<Rgb> px(static_cast<std::size_t>(w) * static_cast<std::size_t>(height), Rgb{255, 255, 255});
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t s = 0; s < series.size(); ++s) {
            if (g >= series[s].size()) continue;
            const int bar_h = static_cast<int>(std::lround(series[s][g] / top * (height - 4)));
            const int x0 = static_cast<int>(g) * per_group + static_cast<int>(s) * bar_width + bar_width / 2;
            for (int y = height - bar_h; y < height; ++y) {
                for (int x = x0; x < x0 + bar_width - 2 && x < w; ++x) {
                    px[static_cast<std::size_t>(y * w + x)] = kColors[s % std::size(kColors)];
                }
            }
        }
    }
    write_ppm(path, w, height, px);
}

Manifest::Manifest(fs::path dir, std::string command) : dir_(std::move(dir)) {
    doc_ = {{"command", std::move(command)}, {"files", nlohmann::json::array()}};
}

void Manifest::add(const std::string& kind, const fs::path& path) {
    doc_["files"].push_back({{"kind", kind}, {"path", fs::relative(path, dir_).generic_string()}});
}

void Manifest::set(const std::string& key, nlohmann::json value) { doc_[key] = std::move(value); }

fs::path Manifest::write() const {
    const auto path = dir_ / "manifest.json";
    write_file(path, doc_.dump(2));
    return path;
}

}  // namespace distill
