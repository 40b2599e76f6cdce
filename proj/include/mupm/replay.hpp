#pragma once

#include <memory>
#include <string>
#include <utility>

#include "mupm/manifest.hpp"
#include "mupm/model.hpp"

namespace mupm {

// Serves outputs recorded by an external model run, looked up by
// (sample_id, branch, replicate). Immutable after construction.
class ReplayModel final : public Model {
 public:
  explicit ReplayModel(ReplayTable table) : table_(std::move(table)) {}

  static std::unique_ptr<ReplayModel> from_file(const fs::path& path) {
    return std::make_unique<ReplayModel>(import_outputs(path));
  }

  ModelKind kind() const override { return ModelKind::kReplay; }
  std::size_t output_dim() const { return table_.output_dim; }
  const ReplayTable& table() const { return table_; }

  OutputVector evaluate(const InputPair& /*pair*/, const EvalKey& key) const override {
    auto it = table_.outputs.find(key);
    if (it == table_.outputs.end()) {
      fail(ErrorCode::kReplayMiss, "no recorded output for " + detail::describe(key));
    }
    OutputVector out;
    out.values = it->second;
    for (double v : out.values) {
      require(std::isfinite(v), ErrorCode::kNonFiniteOutput,
              "recorded output for " + detail::describe(key) + " is not finite");
    }
    return out;
  }

 private:
  ReplayTable table_;
};

}  // namespace mupm
