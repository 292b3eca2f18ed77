#pragma once

#include <cstdint>

#include "dff/geometry.hpp"
#include "dff/renderer.hpp"

namespace dff {

struct TrainConfig {
  int phase1_iters = 3000;
  int phase2_iters = 1000;
  int rays_per_batch = 256;
  double lr_start = 5e-4;
  double lr_end = 8e-5;
  double finetune_lr = 1e-4;
  double lambda_f = 0.04;
  Pass feature_sampling = Pass::kFine;
  bool density_noise = true;
  double density_noise_std = 1.0;
  // Phase 2 trains only the feature parameters.
  bool freeze_radiance = false;
  int coarse_samples = 64;
  int fine_samples = 128;
  Vec3 background = Vec3::Zero();
  std::uint64_t seed = 0;
  int log_every = 100;
  int checkpoint_every = 0;

  void validate() const;
};

}  // namespace dff
