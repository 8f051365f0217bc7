// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "distill/cot_example.hpp"
#include "distill/losses.hpp"
#include "distill/mol_router.hpp"
#include "distill/toy_model.hpp"

namespace distill {

/// Environment variable that re-roots relative output directories.
inline constexpr const char* kOutputRootEnv = "DISTILL_OUTPUT_ROOT";

struct RunConfig {
    LossConfig loss;
    double learning_rate = 2e-3;
    // The router sees sequence-summed features, so Adam steps the size of
    // learning_rate saturate its softmax within a few updates.
    double router_learning_rate = 1e-5;
    int batch_size = 8;
    int max_steps = 200;
    std::uint64_t seed = 0;
    int num_seeds = 1;  // seeds seed, seed+1, ... are run and averaged
    std::filesystem::path train_path;
    std::vector<std::filesystem::path> eval_paths;
    std::filesystem::path output_dir = "runs/default";
    CriticalMode mode = CriticalMode::Math;
    int max_answer_tokens = 8;

    // Teacher: loaded from teacher_checkpoint when the file exists, otherwise
    // pretrained on the training file and written there.
    std::filesystem::path teacher_checkpoint;
    int teacher_steps = 1500;
    double teacher_learning_rate = 3e-3;
    int teacher_batch_size = 8;
    double teacher_target_accuracy = 0.95;

    /// Flat "key = value" text; '#' starts a comment. Throws ConfigInvalid.
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    std::string to_text() const;
    void validate() const;
    /// output_dir, re-rooted under $DISTILL_OUTPUT_ROOT when that is set and the path is relative.
    std::filesystem::path resolved_output_dir() const;
};

/// Lowercase, trim, drop a trailing period, canonicalize plain numbers ("07" -> "7", "3.50" -> "3.5", "1,000" -> "1000").
std::string normalize_answer(const std::string& answer);

struct EvalReport {
    std::string dataset;
    double exact_match_accuracy = 0.0;
    double mean_l_att_on_eval = 0.0;
    Eigen::VectorXd teacher_weights;  // mean p^t over eval examples
    Eigen::VectorXd student_weights;  // mean p^s over eval examples
    int n_examples = 0;
    int n_correct = 0;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

/// Mean of reports over seeds (same dataset); n_examples and n_correct are pooled.
EvalReport average_reports(const std::vector<EvalReport>& reports);

std::vector<CoTExample> load_examples(const std::filesystem::path& path, CriticalMode mode);

/// Texts a fixture tokenizer is built from: every cot_text and answer.
std::vector<std::string> tokenizer_corpus(const std::vector<CoTExample>& examples);

std::unique_ptr<ToyTransformer> make_fixture_model(const ToyTransformerConfig& config,
                                                   const std::vector<CoTExample>& corpus);

struct PretrainReport {
    int steps_run = 0;
    double final_loss = 0.0;
    double heldout_accuracy = 0.0;
    bool converged = false;
};

/// Trains on predict + explain cross-entropy until the held-out accuracy
/// reaches target_accuracy or the step budget runs out, then freezes the
/// model. Missing the target is logged as DidNotConverge and reported, not
/// thrown. steps = 0 only freezes. Throws ConfigInvalid on a frozen model.
PretrainReport pretrain_teacher(ToyTransformer& model, const std::vector<CoTExample>& train,
                                const std::vector<CoTExample>& heldout, int steps, double learning_rate,
                                int batch_size, std::uint64_t seed, double target_accuracy = 0.95,
                                int max_answer_tokens = 8);

/// Fraction of examples whose greedy [predict] answer matches after normalization.
double answer_accuracy(const ToyTransformer& model, const std::vector<CoTExample>& examples, int max_answer_tokens,
                       int* correct = nullptr);

/// Loads the teacher from config.teacher_checkpoint or pretrains and caches it.
std::unique_ptr<ToyTransformer> load_or_pretrain_teacher(const RunConfig& config,
                                                         const std::vector<CoTExample>& train);

/// Frozen-teacher stepwise attention of one example, computed once and reused.
struct TeacherTarget {
    bool valid = false;
    std::vector<ag::Matrix> per_layer;  // steps x critical words
    LayerWeights weights;               // p^t
};

TeacherTarget teacher_target(const ToyTransformer& teacher, const CoTExample& example, CriticalMode mode,
                             double tau1);

/// Student-side data of one example.
struct StudentExample {
    TaskSequence predict;
    TaskSequence explain;
    std::optional<TokenAlignment> alignment;
};

StudentExample prepare_student_example(const Tokenizer& tokenizer, const CoTExample& example, CriticalMode mode);

/// The three loss terms of one example as graph nodes. l_att is left
/// undefined when the method does not use it or the example has no usable
/// alignment.
struct ExampleLosses {
    ag::Tensor l_pre, l_exp, l_att, total;
};

ExampleLosses example_losses(const ToyTransformer& student, const StudentRouterParams& router,
                             const StudentExample& data, const TeacherTarget& target, const LossConfig& config);

/// Attention loss of one example with no gradient, plus the weights used.
struct AttentionProbe {
    bool valid = false;
    double l_att = 0.0;
    Eigen::VectorXd teacher_weights;
    Eigen::VectorXd student_weights;
};

AttentionProbe probe_attention(const ToyTransformer& student, const StudentRouterParams& router,
                               const StudentExample& data, const TeacherTarget& target, const LossConfig& config);

/// Accuracy plus mean attention loss on a dataset. Methods without attention
/// are probed with the MoL weighting and their (untrained) router so every
/// method is measured the same way; SL runs are probed on their fixed pair.
EvalReport evaluate(const ToyTransformer& student, const StudentRouterParams& router, const ToyTransformer& teacher,
                    const std::vector<CoTExample>& examples, const RunConfig& config, const std::string& dataset);

struct TrainedStudent {
    std::unique_ptr<ToyTransformer> model;
    StudentRouterParams router;
    std::vector<LossBreakdown> history;  // one entry per step, batch means
};

/// One seeded training run. Does not touch the file system.
TrainedStudent train_student(const RunConfig& config, std::uint64_t seed, const ToyTransformer& teacher,
                             const std::vector<CoTExample>& train);

/// loss.csv with header step,l_pre,l_exp,l_att,total,method,seed.
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossBreakdown>& history, Method method,
                    std::uint64_t seed);

/// Saves the student with its router as extra tensors "router.weight" and "router.bias".
void save_student(const std::filesystem::path& path, const TrainedStudent& run, const RunConfig& config,
                  std::uint64_t seed);

struct LoadedStudent {
    std::unique_ptr<ToyTransformer> model;
    StudentRouterParams router;
    nlohmann::json metadata;
};

LoadedStudent load_student(const std::filesystem::path& path);

struct DistillationResult {
    std::vector<EvalReport> reports;                 // per eval dataset, averaged over seeds
    std::vector<std::vector<EvalReport>> per_seed;   // [seed][dataset]
    std::vector<std::vector<LossBreakdown>> losses;  // [seed][step]
    std::filesystem::path output_dir;

    /// Mean accuracy over datasets.
    double average_accuracy() const;
};

/// Full run: data, teacher, num_seeds student runs, evaluation and outputs
/// (per seed: loss.csv, layer_weights.json, student.ckpt, eval_report.json;
/// plus summary.json). Throws ConfigInvalid, DataParseError.
DistillationResult run_distillation(const RunConfig& config);

struct AblationRow {
    std::string label;  // "T7 -> S3" or "MoL"
    std::optional<LayerPair> pair;
    std::vector<double> accuracy;  // per dataset, seed-averaged
    double average = 0.0;
    DistillationResult result;
};

struct AblationTable {
    std::vector<std::string> datasets;
    std::vector<AblationRow> rows;

    std::string to_markdown() const;
    std::string to_csv() const;
};

/// One molsaki_sl run per pair plus one MoL run, written under
/// output_dir/sl_T{t}_S{s} and output_dir/mol, with table.csv and table.md.
AblationTable run_sl_ablation(const RunConfig& config, const std::vector<LayerPair>& pairs);

/// "t:s,t:s" (0-based). Throws ConfigInvalid.
std::vector<LayerPair> parse_layer_pairs(const std::string& text);

}  // namespace distill
