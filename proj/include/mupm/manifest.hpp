#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mupm/io.hpp"
#include "mupm/types.hpp"

namespace mupm {

// One perturbed input to be run by an external model.
struct ManifestEntry {
  std::string sample_id;
  Branch branch = Branch::kJoint;
  std::size_t replicate = 0;
  Tensor image;
  TokenSequence text;

  EvalKey key() const { return {sample_id, branch, replicate}; }
  bool operator==(const ManifestEntry&) const = default;
};

// One recorded model output, keyed like the manifest entry it answers.
struct OutputRecord {
  std::string sample_id;
  Branch branch = Branch::kJoint;
  std::size_t replicate = 0;
  std::vector<double> output;
};

struct ReplayTable {
  std::size_t output_dim = 0;
  std::unordered_map<EvalKey, std::vector<double>, EvalKeyHash> outputs;

  std::size_t size() const { return outputs.size(); }
};

namespace detail {

inline std::string describe(const EvalKey& k) {
  return "(" + k.sample_id + ", " + std::string(to_string(k.branch)) + ", " +
         std::to_string(k.replicate) + ")";
}

}  // namespace detail

inline json manifest_entry_to_json(const ManifestEntry& e) {
  json j;
  j["sample_id"] = e.sample_id;
  j["branch"] = std::string(to_string(e.branch));
  j["replicate"] = e.replicate;
  j["image"] = e.image.data;
  j["image_shape"] = e.image.shape;
  j["text"] = e.text;
  return j;
}

inline ManifestEntry manifest_entry_from_json(const json& j) {
  ManifestEntry e;
  e.sample_id = j.at("sample_id").get<std::string>();
  e.branch = parse_branch(j.at("branch").get<std::string>());
  e.replicate = j.at("replicate").get<std::size_t>();
  e.image.data = j.at("image").get<std::vector<double>>();
  e.image.shape = j.at("image_shape").get<std::vector<std::size_t>>();
  e.text = j.at("text").get<TokenSequence>();
  return e;
}

// Writes one JSON object per line with keys in sorted order. Returns the
// number of lines written.
inline std::size_t export_manifest(const std::vector<ManifestEntry>& entries,
                                   const fs::path& path) {
  std::unordered_set<EvalKey, EvalKeyHash> seen;
  std::string out;
  for (const auto& e : entries) {
    if (!seen.insert(e.key()).second) {
      fail(ErrorCode::kDuplicateKey, "manifest key " + detail::describe(e.key()));
    }
    out += manifest_entry_to_json(e).dump() + "\n";
  }
  atomic_write(path, out);
  return entries.size();
}

inline std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::vector<ManifestEntry> entries;
  std::unordered_set<EvalKey, EvalKeyHash> seen;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    ManifestEntry e;
    try {
      e = manifest_entry_from_json(json::parse(line));
    } catch (const json::exception& ex) {
      fail(ErrorCode::kParseFailure,
           path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
    if (!seen.insert(e.key()).second) {
      fail(ErrorCode::kDuplicateKey, path.string() + ":" + std::to_string(line_no) +
                                         ": key " + detail::describe(e.key()));
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::size_t write_outputs(const std::vector<OutputRecord>& records,
                                 const fs::path& path) {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["sample_id"] = r.sample_id;
    j["branch"] = std::string(to_string(r.branch));
    j["replicate"] = r.replicate;
    j["output"] = r.output;
    out += j.dump() + "\n";
  }
  atomic_write(path, out);
  return records.size();
}

inline ReplayTable import_outputs(const fs::path& path) {
  ReplayTable table;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    EvalKey key;
    std::vector<double> output;
    try {
      const json j = json::parse(line);
      key.sample_id = j.at("sample_id").get<std::string>();
      key.branch = parse_branch(j.at("branch").get<std::string>());
      key.replicate = j.at("replicate").get<std::size_t>();
      output = j.at("output").get<std::vector<double>>();
    } catch (const json::exception& ex) {
      fail(ErrorCode::kParseFailure, where + ": " + ex.what());
    } catch (const Error& ex) {
      fail(ErrorCode::kParseFailure, where + ": " + ex.message());
    }
    if (output.empty()) fail(ErrorCode::kParseFailure, where + ": empty output vector");
    if (table.outputs.empty()) {
      table.output_dim = output.size();
    } else if (output.size() != table.output_dim) {
      fail(ErrorCode::kInconsistentK, where + ": output length " +
                                          std::to_string(output.size()) + ", expected " +
                                          std::to_string(table.output_dim));
    }
    if (!table.outputs.emplace(key, std::move(output)).second) {
      fail(ErrorCode::kDuplicateKey, where + ": key " + detail::describe(key));
    }
  }
  return table;
}

// Combines tables from several output files; keys must not repeat and K must
// agree.
inline ReplayTable merge_tables(std::vector<ReplayTable> tables) {
  ReplayTable out;
  for (auto& t : tables) {
    if (t.outputs.empty()) continue;
    if (out.outputs.empty()) {
      out.output_dim = t.output_dim;
    } else if (t.output_dim != out.output_dim) {
      fail(ErrorCode::kInconsistentK, "output files disagree on K (" +
                                          std::to_string(out.output_dim) + " vs " +
                                          std::to_string(t.output_dim) + ")");
    }
    for (auto& [key, value] : t.outputs) {
      if (!out.outputs.emplace(key, std::move(value)).second) {
        fail(ErrorCode::kDuplicateKey, "key " + detail::describe(key) + " appears twice");
      }
    }
  }
  return out;
}

}  // namespace mupm
