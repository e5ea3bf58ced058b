#pragma once

// JSON checkpoint manifest: one entry per named tensor with its group, shape
// and row-major values.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "gsap/core/error.hpp"
#include "gsap/core/nn.hpp"

namespace gsap {

inline nlohmann::json checkpoint_json(const nn::ParamStore& store) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : store.all()) {
    const auto& m = p.var.value();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    params.push_back({{"name", p.name},
                      {"group", std::string(nn::to_string(p.group))},
                      {"shape", {m.rows(), m.cols()}},
                      {"data", std::move(data)}});
  }
  return {{"format", "gsap-checkpoint-1"}, {"params", std::move(params)}};
}

/// Loads values into an already-constructed store. Names and shapes must match.
inline void load_checkpoint_json(nn::ParamStore& store, const nlohmann::json& j) {
  for (const auto& e : j.at("params")) {
    const auto name = e.at("name").get<std::string>();
    auto* p = store.find(name);
    if (!p) throw Error(ErrorCode::kParse, "checkpoint has unknown parameter " + name);
    const auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
    const auto data = e.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != p->var.rows() || shape[1] != p->var.cols() ||
        static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1]) {
      throw Error(ErrorCode::kDimensionMismatch, "checkpoint shape mismatch for " + name);
    }
    auto& m = p->var.mutable_value();
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[i++];
    }
  }
}

inline void save_checkpoint(const nn::ParamStore& store, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << checkpoint_json(store).dump();
}

inline void load_checkpoint(nn::ParamStore& store, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  load_checkpoint_json(store, nlohmann::json::parse(in));
}

}  // namespace gsap
