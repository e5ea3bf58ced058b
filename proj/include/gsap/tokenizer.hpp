#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gsap/core/error.hpp"
#include "gsap/core/text.hpp"

namespace gsap {

/// Word-level vocabulary with BERT-style specials at fixed ids.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  Vocab() {
    for (const char* s : {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) add(s);
  }

  int add(std::string_view token) {
    auto it = index_.find(std::string(token));
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.emplace_back(token);
    index_.emplace(tokens_.back(), id);
    return id;
  }

  void add_text(std::string_view s) {
    for (const auto& w : text::words(s)) add(w);
  }

  int id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }

  std::vector<int> encode(std::string_view s) const {
    std::vector<int> ids;
    for (const auto& w : text::words(s)) ids.push_back(id(w));
    return ids;
  }

  /// One token per line; the line number is the id.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocab load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    Vocab v;
    v.tokens_.clear();
    v.index_.clear();
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const int id = static_cast<int>(v.tokens_.size());
      v.tokens_.push_back(line);
      v.index_.emplace(line, id);
    }
    if (v.tokens_.size() < 4 || v.tokens_[kCls] != "[CLS]" || v.tokens_[kSep] != "[SEP]") {
      throw Error(ErrorCode::kParse, path.string() + ": vocab must start with [PAD] [UNK] [CLS] [SEP]");
    }
    return v;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace gsap
