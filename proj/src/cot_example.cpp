// SPDX-License-Identifier: Apache-2.0
#include "distill/cot_example.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "distill/errors.hpp"
#include "distill/text_util.hpp"

namespace distill {

using nlohmann::json;

std::string_view to_string(CriticalMode mode) noexcept {
    return mode == CriticalMode::Math ? "math" : "commonsense";
}

CriticalMode parse_critical_mode(std::string_view text) {
    if (text == "math") return CriticalMode::Math;
    if (text == "commonsense") return CriticalMode::Commonsense;
    throw DistillError(ErrorCode::ConfigInvalid, "unknown critical mode '" + std::string(text) + "'");
}

void validate(const CoTExample& example, CriticalMode mode) {
    if (text::trim(example.question).empty()) {
        throw DistillError(ErrorCode::InvalidExample, "question is empty");
    }
    if (text::trim(example.rationale).empty()) {
        throw DistillError(ErrorCode::InvalidExample, "rationale is empty");
    }
    if (mode != CriticalMode::Commonsense) return;

    if (!example.keywords) {
        throw DistillError(ErrorCode::InvalidExample, "commonsense mode requires keywords");
    }
    const auto& kws = *example.keywords;
    if (kws.size() < 3 || kws.size() > 8) {
        throw DistillError(ErrorCode::InvalidExample,
                           "expected 3-8 keywords, got " + std::to_string(kws.size()));
    }
    const std::string haystack = text::to_lower(example.question + "\n" + example.rationale);
    for (const auto& kw : kws) {
        const std::string needle = text::to_lower(text::trim(kw));
        if (needle.empty() || haystack.find(needle) == std::string::npos) {
            throw DistillError(ErrorCode::InvalidExample, "keyword '" + kw + "' not found in text");
        }
    }
}

std::string cot_text(const CoTExample& example) {
    return std::string(text::trim(example.question)) + " " + std::string(text::trim(example.rationale));
}

std::size_t rationale_offset(const CoTExample& example) {
    return text::trim(example.question).size() + 1;
}

CoTExample parse_example_line(std::string_view line, std::size_t line_number) {
    const auto fail = [&](const std::string& why) {
        return DistillError(ErrorCode::DataParseError,
                            "line " + std::to_string(line_number) + ": " + why);
    };
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw fail(e.what());
    }
    if (!j.is_object()) throw fail("expected a JSON object");

    const auto required_string = [&](const char* key) -> std::string {
        if (!j.contains(key) || !j[key].is_string()) {
            throw fail(std::string("missing string field '") + key + "'");
        }
        return j[key].get<std::string>();
    };

    CoTExample ex;
    ex.question = required_string("question");
    ex.rationale = required_string("rationale");
    ex.answer = required_string("answer");
    ex.gold_answer = j.contains("gold_answer") && j["gold_answer"].is_string()
                         ? j["gold_answer"].get<std::string>()
                         : ex.answer;
    if (j.contains("keywords") && !j["keywords"].is_null()) {
        if (!j["keywords"].is_array()) throw fail("keywords must be an array or null");
        std::vector<std::string> kws;
        for (const auto& k : j["keywords"]) {
            if (!k.is_string()) throw fail("keywords must hold strings");
            kws.push_back(k.get<std::string>());
        }
        ex.keywords = std::move(kws);
    }
    return ex;
}

std::string format_example_line(const CoTExample& example) {
    json j;
    j["question"] = example.question;
    j["rationale"] = example.rationale;
    j["answer"] = example.answer;
    j["keywords"] = example.keywords ? json(*example.keywords) : json(nullptr);
    j["gold_answer"] = example.gold_answer;
    return j.dump();
}

std::vector<CoTExample> read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DistillError(ErrorCode::IoError, "cannot open dataset " + path.string());
    std::vector<CoTExample> out;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (text::trim(line).empty()) continue;
        out.push_back(parse_example_line(line, line_number));
    }
    return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<CoTExample>& examples) {
    std::ofstream out(path);
    if (!out) throw DistillError(ErrorCode::IoError, "cannot write dataset " + path.string());
    for (const auto& ex : examples) out << format_example_line(ex) << '\n';
}

}  // namespace distill
