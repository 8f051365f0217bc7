// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "distill/attention.hpp"
#include "distill/cot_example.hpp"

namespace distill {

/// One layer's steps x critical-words matrix with its row and column labels.
struct HeatmapExport {
    ag::Matrix matrix;
    std::vector<std::string> step_labels;
    std::vector<std::string> critical_labels;
    int layer = 0;
    bool dropped_first_token = false;
    std::string model_id;
};

/// Stepwise attention of `example` at `layer`, read from the explain pass.
/// With drop_first_token the first body token's row and column are zeroed
/// before aggregation. Throws ConfigInvalid for a bad layer and propagates
/// NoCriticalTokens.
HeatmapExport heatmap(const CoTExample& example, const WhiteBoxModel& model, int layer, bool drop_first_token,
                      CriticalMode mode = CriticalMode::Math);

/// One export per layer from a single forward pass.
std::vector<HeatmapExport> heatmap_all_layers(const CoTExample& example, const WhiteBoxModel& model,
                                              bool drop_first_token, CriticalMode mode = CriticalMode::Math);

/// Writes <stem>.csv (matrix, %.17g), <stem>.json (labels) and <stem>.ppm (image). Returns the paths.
std::vector<std::filesystem::path> write_heatmap(const std::filesystem::path& dir, const std::string& stem,
                                                 const HeatmapExport& heatmap);

ag::Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const ag::Matrix& m);

/// Per-layer mean column gradient over the corpus. Examples without a usable
/// alignment count as 0.
std::vector<double> gradient_profile(const std::vector<CoTExample>& corpus, const WhiteBoxModel& model,
                                     CriticalMode mode = CriticalMode::Math);

/// Two-way attention shares per step index (step 1, 2, ...), averaged over
/// the examples that have that step.
struct ProportionReport {
    std::vector<std::pair<double, double>> per_step;        // softmax of class means (numeric, other)
    std::vector<std::pair<double, double>> raw_mass_share;  // plain mass ratio (numeric, other)
    std::vector<int> examples_per_step;
    int examples_used = 0;
    int examples_skipped = 0;

    /// Fraction of steps whose numeric share exceeds 0.5.
    double numeric_majority_fraction() const;
    nlohmann::json to_json() const;
};

/// Layer-averaged attention from each step's tokens onto the question's
/// numeric versus non-numeric tokens. Questions without numbers are skipped.
ProportionReport proportion_report(const std::vector<CoTExample>& corpus, const WhiteBoxModel& model);

/// Binary PPM writers used for the static images.
void write_heatmap_ppm(const std::filesystem::path& path, const ag::Matrix& m, int cell = 24);
void write_bar_chart_ppm(const std::filesystem::path& path, const std::vector<std::vector<double>>& series,
                         int bar_width = 16, int height = 160);

/// Collects the files an analysis command writes and dumps manifest.json.
class Manifest {
public:
    explicit Manifest(std::filesystem::path dir, std::string command);
    void add(const std::string& kind, const std::filesystem::path& path);
    void set(const std::string& key, nlohmann::json value);
    std::filesystem::path write() const;

private:
    std::filesystem::path dir_;
    nlohmann::json doc_;
};

}  // namespace distill
