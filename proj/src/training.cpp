// SPDX-License-Identifier: Apache-2.0
#include "distill/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "distill/alignment.hpp"
#include "distill/errors.hpp"
#include "distill/optimizer.hpp"
#include "distill/text_util.hpp"

namespace distill {

namespace fs = std::filesystem;

namespace {

DistillError config_error(const std::string& msg) { return DistillError(ErrorCode::ConfigInvalid, msg); }

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw config_error("'" + key + "' expects a number, got '" + v + "'");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw config_error("'" + key + "' expects an integer, got '" + v + "'");
    }
    return out;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = std::string(text::trim(item));
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

void write_text_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DistillError(ErrorCode::IoError, "cannot write " + tmp.string());
        out << content;
        if (!out) throw DistillError(ErrorCode::IoError, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vector(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::string pair_label(const LayerPair& p) {
    return fmt::format("T{} -> S{}", p.teacher_layer, p.student_layer);
}

std::string dataset_name(const fs::path& p) { return p.stem().string(); }

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig c;
    std::optional<int> sl_teacher;
    std::optional<int> sl_student;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto trimmed = std::string(text::trim(line));
        if (trimmed.empty()) continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos) throw config_error(fmt::format("line {}: expected key = value", line_no));
        const auto key = std::string(text::trim(std::string_view(trimmed).substr(0, eq)));
        const auto value = std::string(text::trim(std::string_view(trimmed).substr(eq + 1)));
        if (key == "method") c.loss.method = parse_method(value);
        else if (key == "alpha") c.loss.alpha = parse_double(key, value);
        else if (key == "beta") c.loss.beta = parse_double(key, value);
        else if (key == "tau1") c.loss.tau1 = parse_double(key, value);
        else if (key == "tau2") c.loss.tau2 = parse_double(key, value);
        else if (key == "sl_teacher_layer") sl_teacher = static_cast<int>(parse_int(key, value));
        else if (key == "sl_student_layer") sl_student = static_cast<int>(parse_int(key, value));
        else if (key == "learning_rate") c.learning_rate = parse_double(key, value);
        else if (key == "router_learning_rate") c.router_learning_rate = parse_double(key, value);
        else if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(key, value));
        else if (key == "max_steps") c.max_steps = static_cast<int>(parse_int(key, value));
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
        else if (key == "num_seeds") c.num_seeds = static_cast<int>(parse_int(key, value));
        else if (key == "train_path") c.train_path = value;
        else if (key == "eval_paths") {
            c.eval_paths.clear();
            for (const auto& p : split_list(value)) c.eval_paths.emplace_back(p);
        } else if (key == "output_dir") c.output_dir = value;
        else if (key == "mode") c.mode = parse_critical_mode(value);
        else if (key == "max_answer_tokens") c.max_answer_tokens = static_cast<int>(parse_int(key, value));
        else if (key == "teacher_checkpoint") c.teacher_checkpoint = value;
        else if (key == "teacher_steps") c.teacher_steps = static_cast<int>(parse_int(key, value));
        else if (key == "teacher_learning_rate") c.teacher_learning_rate = parse_double(key, value);
        else if (key == "teacher_batch_size") c.teacher_batch_size = static_cast<int>(parse_int(key, value));
        else if (key == "teacher_target_accuracy") c.teacher_target_accuracy = parse_double(key, value);
        else throw config_error(fmt::format("line {}: unknown key '{}'", line_no, key));
    }
    if (sl_teacher || sl_student) {
        if (!sl_teacher || !sl_student) throw config_error("sl_teacher_layer and sl_student_layer go together");
        c.loss.sl_pair = LayerPair{*sl_teacher, *sl_student};
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto config = parse(ss.str());
    // Relative data paths are taken relative to the config file.
    const auto base = path.parent_path();
    const auto rebase = [&](fs::path& p) {
        if (!p.empty() && p.is_relative() && !fs::exists(p)) p = base / p;
    };
    rebase(config.train_path);
    for (auto& p : config.eval_paths) rebase(p);
    return config;
}

std::string RunConfig::to_text() const {
    std::string out;
    const auto put = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
    put("method", std::string(to_string(loss.method)));
    put("alpha", fmt::format("{}", loss.alpha));
    put("beta", fmt::format("{}", loss.beta));
    put("tau1", fmt::format("{}", loss.tau1));
    put("tau2", fmt::format("{}", loss.tau2));
    if (loss.sl_pair) {
        put("sl_teacher_layer", std::to_string(loss.sl_pair->teacher_layer));
        put("sl_student_layer", std::to_string(loss.sl_pair->student_layer));
    }
    put("learning_rate", fmt::format("{}", learning_rate));
    put("router_learning_rate", fmt::format("{}", router_learning_rate));
    put("batch_size", std::to_string(batch_size));
    put("max_steps", std::to_string(max_steps));
    put("seed", std::to_string(seed));
    put("num_seeds", std::to_string(num_seeds));
    put("train_path", train_path.string());
    std::string evals;
    for (std::size_t i = 0; i < eval_paths.size(); ++i) evals += (i ? "," : "") + eval_paths[i].string();
    put("eval_paths", evals);
    put("output_dir", output_dir.string());
    put("mode", std::string(to_string(mode)));
    put("max_answer_tokens", std::to_string(max_answer_tokens));
    if (!teacher_checkpoint.empty()) put("teacher_checkpoint", teacher_checkpoint.string());
    put("teacher_steps", std::to_string(teacher_steps));
    put("teacher_learning_rate", fmt::format("{}", teacher_learning_rate));
    put("teacher_batch_size", std::to_string(teacher_batch_size));
    put("teacher_target_accuracy", fmt::format("{}", teacher_target_accuracy));
    return out;
}

void RunConfig::validate() const {
    loss.validate();
    if (!(learning_rate > 0.0)) throw config_error("learning_rate must be positive");
    if (!(router_learning_rate > 0.0)) throw config_error("router_learning_rate must be positive");
    if (batch_size < 1) throw config_error("batch_size must be at least 1");
    if (max_steps < 0) throw config_error("max_steps must be non-negative");
    if (num_seeds < 1) throw config_error("num_seeds must be at least 1");
    if (max_answer_tokens < 1) throw config_error("max_answer_tokens must be at least 1");
    if (teacher_steps < 0) throw config_error("teacher_steps must be non-negative");
    if (!(teacher_learning_rate > 0.0)) throw config_error("teacher_learning_rate must be positive");
    if (teacher_batch_size < 1) throw config_error("teacher_batch_size must be at least 1");
}

fs::path RunConfig::resolved_output_dir() const {
    const char* root = std::getenv(kOutputRootEnv);
    if (root != nullptr && *root != '\0' && output_dir.is_relative()) return fs::path(root) / output_dir;
    return output_dir;
}

// ---------------------------------------------------------------------------
// Answers and reports

std::string normalize_answer(const std::string& answer) {
    std::string s = text::to_lower(text::trim(answer));
    while (!s.empty() && s.back() == '.') {
        s.pop_back();
        s = std::string(text::trim(s));
    }
    // Plain numbers: optional sign, digits with optional thousands commas, optional fraction.
    std::string digits;
    bool numeric = !s.empty();
    bool seen_point = false;
    for (std::size_t i = 0; i < s.size() && numeric; ++i) {
        const char c = s[i];
        if (text::is_digit(c)) digits += c;
        else if (c == ',' && !seen_point && !digits.empty()) continue;
        else if (c == '.' && !seen_point) {
            seen_point = true;
            digits += c;
        } else if (c == '-' && i == 0) digits += c;
        else numeric = false;
    }
    if (!numeric || digits == "-" || digits == "." || digits == "-.") return s;
    std::string sign;
    if (digits[0] == '-') {
        sign = "-";
        digits.erase(0, 1);
    }
    std::string whole = digits;
    std::string frac;
    if (const auto dot = digits.find('.'); dot != std::string::npos) {
        whole = digits.substr(0, dot);
        frac = digits.substr(dot + 1);
    }
    while (!frac.empty() && frac.back() == '0') frac.pop_back();
    const auto first = whole.find_first_not_of('0');
    whole = first == std::string::npos ? "0" : whole.substr(first);
    if (whole == "0" && frac.empty()) sign.clear();
    return sign + whole + (frac.empty() ? "" : "." + frac);
}

nlohmann::json EvalReport::to_json() const {
    return {{"dataset", dataset},
            {"exact_match_accuracy", exact_match_accuracy},
            {"mean_l_att_on_eval", mean_l_att_on_eval},
            {"teacher_weights", vector_json(teacher_weights)},
            {"student_weights", vector_json(student_weights)},
            {"n_examples", n_examples},
            {"n_correct", n_correct}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.exact_match_accuracy = j.at("exact_match_accuracy").get<double>();
    r.mean_l_att_on_eval = j.at("mean_l_att_on_eval").get<double>();
    r.teacher_weights = json_vector(j.at("teacher_weights"));
    r.student_weights = json_vector(j.at("student_weights"));
    r.n_examples = j.at("n_examples").get<int>();
    r.n_correct = j.at("n_correct").get<int>();
    return r;
}

EvalReport average_reports(const std::vector<EvalReport>& reports) {
    if (reports.empty()) return {};
    EvalReport out = reports.front();
    const double n = static_cast<double>(reports.size());
    for (std::size_t i = 1; i < reports.size(); ++i) {
        out.exact_match_accuracy += reports[i].exact_match_accuracy;
        out.mean_l_att_on_eval += reports[i].mean_l_att_on_eval;
        out.teacher_weights += reports[i].teacher_weights;
        out.student_weights += reports[i].student_weights;
        out.n_correct += reports[i].n_correct;
        out.n_examples += reports[i].n_examples;
    }
    out.exact_match_accuracy /= n;
    out.mean_l_att_on_eval /= n;
    out.teacher_weights /= n;
    out.student_weights /= n;
    return out;
}

double DistillationResult::average_accuracy() const {
    if (reports.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : reports) s += r.exact_match_accuracy;
    return s / static_cast<double>(reports.size());
}

// ---------------------------------------------------------------------------
// Data and models

std::vector<CoTExample> load_examples(const fs::path& path, CriticalMode mode) {
    if (!fs::exists(path)) throw config_error("dataset not found: " + path.string());
    auto examples = read_dataset(path);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        try {
            validate(examples[i], mode);
        } catch (const DistillError& e) {
            throw DistillError(ErrorCode::DataParseError,
                               fmt::format("{} line {}: {}", path.string(), i + 1, e.what()));
        }
    }
    if (examples.empty()) throw DistillError(ErrorCode::DataParseError, path.string() + " holds no examples");
    return examples;
}

std::vector<std::string> tokenizer_corpus(const std::vector<CoTExample>& examples) {
    std::vector<std::string> out;
    out.reserve(examples.size() * 2);
    for (const auto& e : examples) {
        out.push_back(cot_text(e));
        out.push_back(std::string(text::trim(e.answer)));
    }
    return out;
}

std::unique_ptr<ToyTransformer> make_fixture_model(const ToyTransformerConfig& config,
                                                   const std::vector<CoTExample>& corpus) {
    const auto texts = tokenizer_corpus(corpus);
    std::shared_ptr<const Tokenizer> tok = build_tokenizer(config.tokenizer_kind, texts);
    auto c = config;
    c.vocab_size = tok->vocab_size();
    return std::make_unique<ToyTransformer>(c, std::move(tok));
}

double answer_accuracy(const ToyTransformer& model, const std::vector<CoTExample>& examples, int max_answer_tokens,
                       int* correct) {
    int hits = 0;
    for (const auto& e : examples) {
        const auto prompt = predict_prompt(model.tokenizer(), e);
        const auto ids = model.generate_greedy(prompt, max_answer_tokens);
        if (normalize_answer(model.tokenizer().decode(ids)) == normalize_answer(e.gold_answer)) ++hits;
    }
    if (correct != nullptr) *correct = hits;
    return examples.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(examples.size());
}

namespace {

constexpr double kPretrainClipNorm = 1.0;

// Linear warmup over the first 5% of steps, then cosine decay to 10% of the peak.
double pretrain_schedule(int step, int steps) {
    const int warm = std::max(1, steps / 20);
    if (step < warm) return static_cast<double>(step + 1) / warm;
    const double t = static_cast<double>(step - warm) / std::max(1, steps - warm);
    return 0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace

PretrainReport pretrain_teacher(ToyTransformer& model, const std::vector<CoTExample>& train,
                                const std::vector<CoTExample>& heldout, int steps, double learning_rate,
                                int batch_size, std::uint64_t seed, double target_accuracy, int max_answer_tokens) {
    if (model.frozen()) throw config_error("pretrain_teacher needs an unfrozen model");
    if (steps < 0 || batch_size < 1) throw config_error("pretrain_teacher: bad step budget or batch size");
    PretrainReport report;
    if (steps == 0) {
        model.freeze();
        return report;
    }
    if (train.empty()) throw config_error("pretrain_teacher: empty corpus");

    std::vector<TaskSequence> pre;
    std::vector<TaskSequence> exp;
    for (const auto& e : train) {
        pre.push_back(predict_sequence(model.tokenizer(), e));
        exp.push_back(explain_sequence(model.tokenizer(), e));
    }
    std::vector<ag::Tensor> params;
    for (const auto& p : model.parameters()) params.push_back(p.tensor);
    AdamOptimizer opt(params, learning_rate);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    const int check_every = std::max(50, steps / 10);

    for (int step = 0; step < steps; ++step) {
        opt.zero_grad();
        std::vector<ag::Tensor> losses;
        for (int b = 0; b < batch_size; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const auto i = order[cursor++];
            const auto lp = sequence_loss(model.forward_with_internals(pre[i].input_ids).logits, pre[i]);
            const auto le = sequence_loss(model.forward_with_internals(exp[i].input_ids).logits, exp[i]);
            losses.push_back(ag::add(ag::scale(lp, 0.5), ag::scale(le, 0.5)));
        }
        const auto loss = ag::mean_of(losses);
        loss.backward();
        opt.set_learning_rate(learning_rate * pretrain_schedule(step, steps));
        opt.clip_grad_norm(kPretrainClipNorm);
        opt.step();
        report.steps_run = step + 1;
        report.final_loss = loss.item();
        const bool last = step + 1 == steps;
        if (!heldout.empty() && ((step + 1) % check_every == 0 || last)) {
            report.heldout_accuracy = answer_accuracy(model, heldout, max_answer_tokens);
            spdlog::info("teacher step {} loss {:.4f} held-out accuracy {:.3f}", step + 1, report.final_loss,
                         report.heldout_accuracy);
            if (report.heldout_accuracy >= target_accuracy) {
                report.converged = true;
                break;
            }
        }
    }
    if (!report.converged) {
        spdlog::warn("{}: teacher held-out accuracy {:.3f} below target {:.3f} after {} steps",
                     to_string(ErrorCode::DidNotConverge), report.heldout_accuracy, target_accuracy,
                     report.steps_run);
    }
    model.freeze();
    return report;
}

std::unique_ptr<ToyTransformer> load_or_pretrain_teacher(const RunConfig& config,
                                                         const std::vector<CoTExample>& train) {
    if (!config.teacher_checkpoint.empty() && fs::exists(config.teacher_checkpoint)) {
        auto ckpt = load_checkpoint(config.teacher_checkpoint);
        if (!ckpt.model->frozen()) ckpt.model->freeze();
        return std::move(ckpt.model);
    }
    auto teacher = make_fixture_model(ToyTransformerConfig::teacher_fixture(), train);
    // Last tenth of the training file is held out for the convergence check.
    const std::size_t cut = train.size() - std::max<std::size_t>(1, train.size() / 10);
    const std::vector<CoTExample> fit(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(cut));
    const std::vector<CoTExample> held(train.begin() + static_cast<std::ptrdiff_t>(cut), train.end());
    const auto report = pretrain_teacher(*teacher, fit, held, config.teacher_steps, config.teacher_learning_rate,
                                         config.teacher_batch_size, teacher->config().seed,
                                         config.teacher_target_accuracy, config.max_answer_tokens);
    if (!config.teacher_checkpoint.empty()) {
        save_checkpoint(config.teacher_checkpoint, *teacher, {},
                        {{"role", "teacher"},
                         {"steps_run", report.steps_run},
                         {"final_loss", report.final_loss},
                         {"heldout_accuracy", report.heldout_accuracy},
                         {"converged", report.converged}});
    }
    return teacher;
}

// ---------------------------------------------------------------------------
// Per-example losses

TeacherTarget teacher_target(const ToyTransformer& teacher, const CoTExample& example, CriticalMode mode,
                             double tau1) {
    TeacherTarget out;
    try {
        const auto alignment = build_alignment(example, mode, teacher.tokenizer(), teacher.model_id());
        const auto seq = explain_sequence(teacher.tokenizer(), example);
        const auto stack = extract_stack(teacher, seq.input_ids);
        for (const auto& s : stepwise_per_layer(stack, alignment, seq.body_offset)) {
            out.per_layer.push_back(s.matrix.value());
        }
        out.weights = teacher_layer_weights(out.per_layer, tau1);
        out.valid = true;
    } catch (const DistillError& e) {
        spdlog::warn("no teacher attention target: {}", e.what());
    }
    return out;
}

StudentExample prepare_student_example(const Tokenizer& tokenizer, const CoTExample& example, CriticalMode mode) {
    StudentExample out{predict_sequence(tokenizer, example), explain_sequence(tokenizer, example), std::nullopt};
    try {
        out.alignment = build_alignment(example, mode, tokenizer, "student");
    } catch (const DistillError& e) {
        spdlog::warn("no student alignment: {}", e.what());
    }
    return out;
}

namespace {

struct AttentionTerms {
    ag::Tensor l_att;
    ag::Tensor student_weights;
    Eigen::VectorXd teacher_weights;
};

// Attention loss from an explain-pass stack; undefined l_att when not computable.
AttentionTerms attention_terms(const SelfAttentionStack& stack, const StudentRouterParams& router,
                               const StudentExample& data, const TeacherTarget& target, const LossConfig& config,
                               bool force_mol) {
    AttentionTerms out;
    if (!target.valid || !data.alignment) return out;
    const auto student = stepwise_per_layer(stack, *data.alignment, data.explain.body_offset);
    if (student.front().matrix.rows() != target.per_layer.front().rows() ||
        student.front().matrix.cols() != target.per_layer.front().cols()) {
        spdlog::warn("teacher and student stepwise shapes differ; attention loss skipped");
        return out;
    }
    const bool single = config.method == Method::MolsakiSl && !force_mol;
    std::vector<ag::Tensor> t;
    std::vector<ag::Tensor> s;
    if (single) {
        t.push_back(ag::constant(target.per_layer[static_cast<std::size_t>(config.sl_pair->teacher_layer)]));
        s.push_back(student[static_cast<std::size_t>(config.sl_pair->student_layer)].matrix);
        out.teacher_weights = Eigen::VectorXd::Ones(1);
        out.student_weights = ag::constant(ag::Matrix::Ones(1, 1));
    } else {
        for (const auto& m : target.per_layer) t.push_back(ag::constant(m));
        for (const auto& m : student) s.push_back(m.matrix);
        out.teacher_weights = target.weights.weights;
        out.student_weights = student_layer_weight_tensor(stack.values, router);
    }
    out.l_att = attention_loss(t, s, ag::constant(out.teacher_weights), out.student_weights);
    return out;
}

}  // namespace

ExampleLosses example_losses(const ToyTransformer& student, const StudentRouterParams& router,
                             const StudentExample& data, const TeacherTarget& target, const LossConfig& config) {
    ExampleLosses out;
    out.l_pre = sequence_loss(student.forward_with_internals(data.predict.input_ids).logits, data.predict);
    if (config.uses_rationale()) {
        const auto fwd = student.forward_with_internals(data.explain.input_ids);
        out.l_exp = sequence_loss(fwd.logits, data.explain);
        if (config.uses_attention()) out.l_att = attention_terms(fwd.stack, router, data, target, config, false).l_att;
    }
    out.total = total_loss(config, out.l_pre, out.l_exp, out.l_att);
    return out;
}

AttentionProbe probe_attention(const ToyTransformer& student, const StudentRouterParams& router,
                               const StudentExample& data, const TeacherTarget& target, const LossConfig& config) {
    ag::NoGradGuard no_grad;
    AttentionProbe out;
    if (!target.valid || !data.alignment || target.per_layer.front().cols() < 2) return out;
    const auto fwd = student.forward_with_internals(data.explain.input_ids);
    const auto terms = attention_terms(fwd.stack, router, data, target, config, false);
    if (!terms.l_att.defined()) return out;
    out.valid = true;
    out.l_att = terms.l_att.item();
    out.teacher_weights = terms.teacher_weights;
    out.student_weights = terms.student_weights.value().col(0);
    return out;
}

EvalReport evaluate(const ToyTransformer& student, const StudentRouterParams& router, const ToyTransformer& teacher,
                    const std::vector<CoTExample>& examples, const RunConfig& config, const std::string& dataset) {
    EvalReport report;
    report.dataset = dataset;
    report.n_examples = static_cast<int>(examples.size());
    report.exact_match_accuracy = answer_accuracy(student, examples, config.max_answer_tokens, &report.n_correct);
    double total = 0.0;
    int counted = 0;
    for (const auto& e : examples) {
        const auto target = teacher_target(teacher, e, config.mode, config.loss.tau1);
        const auto data = prepare_student_example(student.tokenizer(), e, config.mode);
        const auto probe = probe_attention(student, router, data, target, config.loss);
        if (!probe.valid) continue;
        total += probe.l_att;
        if (counted == 0) {
            report.teacher_weights = probe.teacher_weights;
            report.student_weights = probe.student_weights;
        } else {
            report.teacher_weights += probe.teacher_weights;
            report.student_weights += probe.student_weights;
        }
        ++counted;
    }
    if (counted > 0) {
        report.mean_l_att_on_eval = total / counted;
        report.teacher_weights /= counted;
        report.student_weights /= counted;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Training

TrainedStudent train_student(const RunConfig& config, std::uint64_t seed, const ToyTransformer& teacher,
                             const std::vector<CoTExample>& train) {
    config.validate();
    config.loss.validate(teacher.layer_count(), ToyTransformerConfig::student_fixture().n_layers);
    auto fixture = ToyTransformerConfig::student_fixture();
    fixture.seed = seed;
    TrainedStudent run;
    run.model = make_fixture_model(fixture, train);
    run.router = StudentRouterParams::zeros(fixture.d_model, config.loss.tau2);

    std::vector<StudentExample> data;
    std::vector<TeacherTarget> targets(train.size());
    data.reserve(train.size());
    for (const auto& e : train) data.push_back(prepare_student_example(run.model->tokenizer(), e, config.mode));

    std::vector<ag::Tensor> params;
    for (const auto& p : run.model->parameters()) params.push_back(p.tensor);
    AdamOptimizer opt(params, config.learning_rate);
    AdamOptimizer router_opt({run.router.weight, run.router.bias}, config.router_learning_rate);
    const bool train_router = config.loss.uses_attention();
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    std::vector<bool> have_target(train.size(), false);

    for (int step = 0; step < config.max_steps; ++step) {
        opt.zero_grad();
        router_opt.zero_grad();
        std::vector<ag::Tensor> pre, exp, att;
        for (int b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const auto i = order[cursor++];
            if (config.loss.uses_attention() && !have_target[i]) {
                targets[i] = teacher_target(teacher, train[i], config.mode, config.loss.tau1);
                have_target[i] = true;
            }
            const auto l = example_losses(*run.model, run.router, data[i], targets[i], config.loss);
            pre.push_back(l.l_pre);
            if (l.l_exp.defined()) exp.push_back(l.l_exp);
            // Examples with fewer than two critical columns carry no attention signal and
            // stay out of the L_att denominator.
            if (l.l_att.defined() && targets[i].per_layer.front().cols() >= 2) att.push_back(l.l_att);
        }
        const auto l_pre = ag::mean_of(pre);
        const auto l_exp = exp.empty() ? ag::Tensor() : ag::mean_of(exp);
        const auto l_att = att.empty() ? ag::Tensor() : ag::mean_of(att);
        const auto loss = total_loss(config.loss, l_pre, l_exp, l_att);
        LossBreakdown mean;
        mean.l_pre = l_pre.item();
        mean.l_exp = l_exp.defined() ? l_exp.item() : 0.0;
        mean.l_att = l_att.defined() ? l_att.item() : 0.0;
        mean.total = loss.item();
        run.history.push_back(mean);
        loss.backward();
        opt.step();
        if (train_router) router_opt.step();
    }
    return run;
}

void write_loss_csv(const fs::path& path, const std::vector<LossBreakdown>& history, Method method,
                    std::uint64_t seed) {
    std::string out = "step,l_pre,l_exp,l_att,total,method,seed\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& h = history[i];
        out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", i, h.l_pre, h.l_exp, h.l_att, h.total,
                           to_string(method), seed);
    }
    write_text_atomic(path, out);
}

void save_student(const fs::path& path, const TrainedStudent& run, const RunConfig& config, std::uint64_t seed) {
    save_checkpoint(path, *run.model,
                    {{"router.weight", run.router.weight}, {"router.bias", run.router.bias}},
                    {{"role", "student"},
                     {"seed", seed},
                     {"router_temperature", run.router.temperature},
                     {"run_config", config.to_text()}});
}

LoadedStudent load_student(const fs::path& path) {
    auto ckpt = load_checkpoint(path);
    LoadedStudent out;
    out.metadata = ckpt.metadata;
    const double tau = ckpt.metadata.value("router_temperature", kDefaultStudentTemperature);
    const auto d = ckpt.model->config().d_model;
    out.router = StudentRouterParams::zeros(d, tau);
    if (const auto it = ckpt.extra.find("router.weight"); it != ckpt.extra.end()) {
        out.router.weight.mutable_value() = it->second;
    }
    if (const auto it = ckpt.extra.find("router.bias"); it != ckpt.extra.end()) {
        out.router.bias.mutable_value() = it->second;
    }
    out.model = std::move(ckpt.model);
    return out;
}

namespace {

nlohmann::json layer_weights_json(const std::vector<EvalReport>& reports) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : reports) {
        j.push_back({{"dataset", r.dataset},
                     {"teacher", vector_json(r.teacher_weights)},
                     {"student", vector_json(r.student_weights)}});
    }
    return j;
}

}  // namespace

DistillationResult run_distillation(const RunConfig& config) {
    config.validate();
    if (config.train_path.empty()) throw config_error("train_path is required");
    if (config.eval_paths.empty()) throw config_error("eval_paths needs at least one file");
    const auto train = load_examples(config.train_path, config.mode);
    std::vector<std::vector<CoTExample>> evals;
    for (const auto& p : config.eval_paths) evals.push_back(load_examples(p, config.mode));

    const auto teacher = load_or_pretrain_teacher(config, train);
    config.loss.validate(teacher->layer_count(), ToyTransformerConfig::student_fixture().n_layers);

    DistillationResult result;
    result.output_dir = config.resolved_output_dir();
    fs::create_directories(result.output_dir);
    write_text_atomic(result.output_dir / "config.txt", config.to_text());

    for (int k = 0; k < config.num_seeds; ++k) {
        const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(k);
        spdlog::info("{} seed {}: {} steps", to_string(config.loss.method), seed, config.max_steps);
        auto run = train_student(config, seed, *teacher, train);
        const auto dir = result.output_dir / fmt::format("seed_{}", seed);
        fs::create_directories(dir);
        write_loss_csv(dir / "loss.csv", run.history, config.loss.method, seed);
        save_student(dir / "student.ckpt", run, config, seed);

        std::vector<EvalReport> reports;
        for (std::size_t d = 0; d < evals.size(); ++d) {
            reports.push_back(evaluate(*run.model, run.router, *teacher, evals[d], config,
                                       dataset_name(config.eval_paths[d])));
            spdlog::info("  {} accuracy {:.3f} l_att {:.5f}", reports.back().dataset,
                         reports.back().exact_match_accuracy, reports.back().mean_l_att_on_eval);
        }
        nlohmann::json rj = nlohmann::json::array();
        for (const auto& r : reports) rj.push_back(r.to_json());
        write_text_atomic(dir / "eval_report.json", rj.dump(2));
        write_text_atomic(dir / "layer_weights.json", layer_weights_json(reports).dump(2));
        result.per_seed.push_back(std::move(reports));
        result.losses.push_back(std::move(run.history));
    }

    for (std::size_t d = 0; d < evals.size(); ++d) {
        std::vector<EvalReport> across;
        for (const auto& seed_reports : result.per_seed) across.push_back(seed_reports[d]);
        result.reports.push_back(average_reports(across));
    }
    nlohmann::json summary{{"method", to_string(config.loss.method)},
                           {"num_seeds", config.num_seeds},
                           {"average_accuracy", result.average_accuracy()},
                           {"reports", nlohmann::json::array()}};
    for (const auto& r : result.reports) summary["reports"].push_back(r.to_json());
    write_text_atomic(result.output_dir / "summary.json", summary.dump(2));
    return result;
}

// ---------------------------------------------------------------------------
// SL ablation

std::string AblationTable::to_markdown() const {
    std::string out = "| T -> S |";
    for (const auto& d : datasets) out += " " + d + " |";
    out += " AVG |\n|---|";
    for (std::size_t i = 0; i <= datasets.size(); ++i) out += "---|";
    out += "\n";
    for (const auto& r : rows) {
        out += "| " + r.label + " |";
        for (double a : r.accuracy) out += fmt::format(" {:.1f} |", 100.0 * a);
        out += fmt::format(" {:.1f} |\n", 100.0 * r.average);
    }
    return out;
}

std::string AblationTable::to_csv() const {
    std::string out = "mapping";
    for (const auto& d : datasets) out += "," + d;
    out += ",avg\n";
    for (const auto& r : rows) {
        out += r.label;
        for (double a : r.accuracy) out += fmt::format(",{:.17g}", a);
        out += fmt::format(",{:.17g}\n", r.average);
    }
    return out;
}

std::vector<LayerPair> parse_layer_pairs(const std::string& text) {
    std::vector<LayerPair> out;
    for (const auto& item : split_list(text)) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw config_error("layer pair '" + item + "' is not t:s");
        LayerPair p;
        p.teacher_layer = static_cast<int>(parse_int("pairs", std::string(text::trim(item.substr(0, colon)))));
        p.student_layer = static_cast<int>(parse_int("pairs", std::string(text::trim(item.substr(colon + 1)))));
        out.push_back(p);
    }
    if (out.empty()) throw config_error("no layer pairs given");
    return out;
}

AblationTable run_sl_ablation(const RunConfig& config, const std::vector<LayerPair>& pairs) {
    if (pairs.empty()) throw config_error("ablation needs at least one layer pair");
    const auto root = fs::absolute(config.resolved_output_dir());
    AblationTable table;
    for (const auto& p : config.eval_paths) table.datasets.push_back(dataset_name(p));

    const auto add_row = [&](const std::string& label, std::optional<LayerPair> pair, RunConfig run_config) {
        AblationRow row;
        row.label = label;
        row.pair = pair;
        row.result = run_distillation(run_config);
        for (const auto& r : row.result.reports) row.accuracy.push_back(r.exact_match_accuracy);
        row.average = row.result.average_accuracy();
        table.rows.push_back(std::move(row));
    };
    for (const auto& p : pairs) {
        RunConfig c = config;
        c.loss.method = Method::MolsakiSl;
        c.loss.sl_pair = p;
        c.output_dir = root / fmt::format("sl_T{}_S{}", p.teacher_layer, p.student_layer);
        add_row(pair_label(p), p, c);
    }
    RunConfig mol = config;
    mol.loss.method = Method::Molsaki;
    mol.loss.sl_pair.reset();
    mol.output_dir = root / "mol";
    add_row("MoL", std::nullopt, mol);

    write_text_atomic(root / "table.csv", table.to_csv());
    write_text_atomic(root / "table.md", table.to_markdown());
    return table;
}

}  // namespace distill
