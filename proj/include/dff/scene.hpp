#pragma once

#include <memory>
#include <string>

#include "dff/embedding_table.hpp"
#include "dff/field.hpp"
#include "dff/renderer.hpp"
#include "dff/train_config.hpp"

namespace dff {

// Trained coarse and fine fields plus everything needed to render and query
// them without side inputs.
struct SceneModel {
  SceneModel(const FieldConfig& coarse_config, const FieldConfig& fine_config, std::uint64_t init_seed = 0)
      : coarse(coarse_config, init_seed), fine(fine_config, init_seed + 100) {}

  NeuralField<float> coarse;
  NeuralField<float> fine;
  Pass feature_pass = Pass::kFine;
  Vec3 background = Vec3::Zero();
  // Depth bounds of the training cameras; defaults for new render poses.
  double near = 2.0;
  double far = 6.0;
  QueryEmbeddingTable queries;
  TrainConfig train_config;
  long iteration = 0;
  std::string rng_state;

  SceneView view() const { return {&coarse, &fine, feature_pass, background}; }
  // The field whose features were distilled.
  const RadianceField& feature_field() const {
    return feature_pass == Pass::kCoarse ? static_cast<const RadianceField&>(coarse) : fine;
  }
};

}  // namespace dff
