#pragma once

#include <string>
#include <vector>

#include "mupm/io.hpp"
#include "mupm/linalg.hpp"
#include "mupm/model.hpp"
#include "mupm/types.hpp"

namespace mupm {

inline json matrix_to_json(const Matrix& m) { return m.to_rows(); }

inline Matrix matrix_from_json(const json& j, const std::string& name) {
  try {
    if (j.is_array() && !j.empty() && j.front().is_number()) {
      // A flat array is a single row.
      return Matrix::from_rows({j.get<std::vector<double>>()});
    }
    return Matrix::from_rows(j.get<std::vector<std::vector<double>>>());
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, name + ": " + e.what());
  }
}

inline json input_pair_to_json(const InputPair& p) {
  json j;
  j["id"] = p.id;
  j["image"] = p.image.data;
  j["image_shape"] = p.image.shape;
  j["text"] = p.text;
  j["label"] = p.label;
  return j;
}

inline InputPair input_pair_from_json(const json& j) {
  InputPair p;
  p.id = j.at("id").get<std::string>();
  p.image.data = j.at("image").get<std::vector<double>>();
  if (j.contains("image_shape")) {
    p.image.shape = j.at("image_shape").get<std::vector<std::size_t>>();
  } else {
    p.image.shape = {p.image.data.size()};
  }
  p.text = j.at("text").get<TokenSequence>();
  p.label = j.value("label", 0);
  return p;
}

inline void write_dataset(const fs::path& path, const Dataset& data) {
  std::string out;
  for (const auto& p : data) out += input_pair_to_json(p).dump() + "\n";
  atomic_write(path, out);
}

inline Dataset read_dataset(const fs::path& path) {
  Dataset data;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      data.push_back(input_pair_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorCode::kParseFailure,
           path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return data;
}

inline json model_spec_to_json(const ModelSpec& s) {
  json j;
  j["kind"] = std::string(to_string(s.kind));
  if (is_synthetic(s.kind)) {
    j["W"] = matrix_to_json(s.W);
    j["V"] = matrix_to_json(s.V);
    j["c"] = s.c;
    if (s.kind == ModelKind::kSyntheticSoftmax) {
      j["q"] = s.q;
      j["u_index"] = s.u_index;
    }
    if (s.kind == ModelKind::kSyntheticSaturating) j["g"] = s.g;
    if (!s.token_values.empty()) {
      json tv = json::object();
      for (const auto& [k, v] : s.token_values) tv[std::to_string(k)] = v;
      j["token_values"] = tv;
    }
  } else if (s.kind == ModelKind::kReplay) {
    j["path"] = s.replay_path;
  } else {
    j["base_url"] = s.base_url;
    j["timeout_ms"] = s.timeout_ms;
    j["retries"] = s.retries;
    j["max_in_flight"] = s.max_in_flight;
  }
  return j;
}

inline ModelSpec model_spec_from_json(const json& j) {
  ModelSpec s;
  try {
    s.kind = parse_model_kind(j.at("kind").get<std::string>());
    if (is_synthetic(s.kind)) {
      s.W = matrix_from_json(j.at("W"), "W");
      s.V = matrix_from_json(j.at("V"), "V");
      s.c = j.contains("c") ? j.at("c").get<std::vector<double>>()
                            : std::vector<double>(s.W.rows, 0.0);
      s.q = j.value("q", 0.0);
      s.u_index = j.value("u_index", std::size_t{0});
      s.g = j.value("g", 1.0);
      if (j.contains("token_values")) {
        for (const auto& [k, v] : j.at("token_values").items()) {
          s.token_values[std::stoll(k)] = v.get<double>();
        }
      }
    } else if (s.kind == ModelKind::kReplay) {
      s.replay_path = j.at("path").get<std::string>();
    } else {
      s.base_url = j.at("base_url").get<std::string>();
      s.timeout_ms = j.value("timeout_ms", 5000.0);
      s.retries = j.value("retries", 3);
      s.max_in_flight = j.value("max_in_flight", 4);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("model spec: ") + e.what());
  } catch (const std::invalid_argument&) {
    fail(ErrorCode::kConfig, "model spec: token_values keys must be integers");
  }
  validate(s);
  return s;
}

}  // namespace mupm
