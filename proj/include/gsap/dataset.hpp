#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "gsap/core/error.hpp"

namespace gsap {

inline constexpr int kMinChoices = 2;
inline constexpr int kMaxChoices = 5;

struct QAInstance {
  std::string id;
  std::string question;
  std::vector<std::string> choices;
  int answer_index = 0;

  bool operator==(const QAInstance&) const = default;
};

inline void validate(const QAInstance& qa) {
  const int b = static_cast<int>(qa.choices.size());
  if (b < kMinChoices || b > kMaxChoices) {
    throw Error(ErrorCode::kInvalidArgument, "instance " + qa.id + ": choice count " + std::to_string(b) +
                                                 " outside [2, 5]");
  }
  if (qa.answer_index < 0 || qa.answer_index >= b) {
    throw Error(ErrorCode::kInvalidArgument, "instance " + qa.id + ": answer index out of range");
  }
  if (qa.question.empty()) throw Error(ErrorCode::kInvalidArgument, "instance " + qa.id + ": empty question");
}

inline nlohmann::json to_json(const QAInstance& qa) {
  return {{"id", qa.id}, {"question", qa.question}, {"choices", qa.choices}, {"answer", qa.answer_index}};
}

inline QAInstance instance_from_json(const nlohmann::json& j) {
  QAInstance qa;
  qa.id = j.at("id").get<std::string>();
  qa.question = j.at("question").get<std::string>();
  qa.choices = j.at("choices").get<std::vector<std::string>>();
  qa.answer_index = j.at("answer").get<int>();
  validate(qa);
  return qa;
}

struct LoadReport {
  std::size_t valid = 0;
  std::size_t invalid = 0;
  std::vector<std::string> problems;  // "line N: reason"
};

/// Reads JSONL `{"id","question","choices":[...],"answer":int}`. Invalid
/// lines are skipped and reported; zero valid lines is an error.
inline std::vector<QAInstance> read_dataset(std::istream& in, const std::string& source,
                                            LoadReport* report = nullptr) {
  std::vector<QAInstance> out;
  LoadReport local;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(instance_from_json(nlohmann::json::parse(line)));
      ++local.valid;
    } catch (const std::exception& e) {
      ++local.invalid;
      local.problems.push_back("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (report) *report = local;
  if (out.empty()) {
    throw Error(ErrorCode::kEmptyDataset, source + ": no valid instances (" + std::to_string(local.invalid) +
                                              " invalid lines)");
  }
  return out;
}

inline std::vector<QAInstance> load_dataset(const std::filesystem::path& path, LoadReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return read_dataset(in, path.string(), report);
}

inline void write_dataset(std::ostream& out, const std::vector<QAInstance>& data) {
  for (const auto& qa : data) out << to_json(qa).dump() << '\n';
}

inline void dump_dataset(const std::filesystem::path& path, const std::vector<QAInstance>& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  write_dataset(out, data);
}

}  // namespace gsap
