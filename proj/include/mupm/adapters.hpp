#pragma once

#include <memory>

#include "mupm/http_model.hpp"
#include "mupm/model.hpp"
#include "mupm/replay.hpp"

namespace mupm {

inline std::unique_ptr<Model> make_model(const ModelSpec& spec) {
  validate(spec);
  switch (spec.kind) {
    case ModelKind::kSyntheticLinear:
    case ModelKind::kSyntheticSoftmax:
    case ModelKind::kSyntheticSaturating:
      return std::make_unique<SyntheticModel>(spec);
    case ModelKind::kReplay:
      return ReplayModel::from_file(spec.replay_path);
    case ModelKind::kHttp:
      return std::make_unique<HttpModel>(spec);
  }
  fail(ErrorCode::kUnsupportedKind, "unknown model kind");
}

}  // namespace mupm
