#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dff/dataset.hpp"
#include "dff/field.hpp"
#include "dff/renderer.hpp"
#include "dff/scene.hpp"
#include "dff/train_config.hpp"

namespace dff {

// sum_r ||rendered_r - target_r||^2; gradient 2 (rendered - target).
double photometric_loss(const Eigen::Matrix3Xd& rendered, const Eigen::Matrix3Xd& target,
                        Eigen::Matrix3Xd* grad = nullptr);

// sum_r ||rendered_r - target_r||_1; subgradient sign(rendered - target), 0 at 0.
double feature_loss(const Eigen::MatrixXd& rendered, const Eigen::MatrixXd& target, Eigen::MatrixXd* grad = nullptr);

// Adam with bias correction; one instance per parameter buffer.
template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0) : m(n, T(0)), v(n, T(0)) {}
};

// Updates params inside `ranges` only; step count advances once per call.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr,
               std::span<const ParamRange> ranges);

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr) {
  const ParamRange all{0, params.size()};
  adam_step(params, grads, state, lr, std::span<const ParamRange>(&all, 1));
}

// lr_start + (lr_end - lr_start) * iteration / total.
double linear_lr(double lr_start, double lr_end, long iteration, long total);

// Coarse and fine networks being optimized.
template <typename T>
struct TrainableScene {
  TrainableScene(const FieldConfig& coarse_config, const FieldConfig& fine_config, std::uint64_t seed)
      : coarse(coarse_config, seed), fine(fine_config, seed + 100) {}
  NeuralField<T> coarse;
  NeuralField<T> fine;
};

struct RayBatch {
  std::vector<Ray> rays;
  Eigen::Matrix3Xd rgb;      // targets
  Eigen::MatrixXd features;  // teacher targets, D x n
  double near = 0.0;
  double far = 1.0;
  // When set, used verbatim instead of drawing samples (gradient checks).
  std::optional<std::vector<DepthSamples>> coarse_samples;
  std::optional<std::vector<DepthSamples>> fine_samples;
};

struct StepOptions {
  double lambda_f = 0.04;
  bool feature_term = true;
  Pass feature_sampling = Pass::kFine;
  double density_noise_std = 0.0;
  int coarse_samples = 64;
  int fine_samples = 128;
  Vec3 background = Vec3::Zero();
  // Rays per forward/backward group; 0 means the whole batch at once.
  int chunk_rays = 32;
};

struct LossBreakdown {
  double total = 0.0;
  double photometric_coarse = 0.0;
  double photometric_fine = 0.0;
  double feature = 0.0;  // unweighted L_f
};

// L = L_p(coarse) + L_p(fine) + lambda L_f(feature pass). Gradients are
// accumulated into the fields' buffers; feature terms never reach density.
template <typename T>
LossBreakdown loss_and_gradients(TrainableScene<T>& scene, const RayBatch& batch, const StepOptions& options,
                                 Rng& rng);

struct PhaseConfig {
  int iterations = 0;
  double lr_start = 5e-4;
  double lr_end = 5e-4;
  double lambda_f = 0.0;
  bool feature_term = false;
  bool train_radiance = true;
  bool train_feature = false;
  double density_noise_std = 0.0;
  int phase = 1;
};

struct TrainTelemetry {
  int phase = 0;
  long iteration = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct TrainHooks {
  std::function<void(const TrainTelemetry&)> on_log;
  std::function<void(const SceneModel&)> on_checkpoint;
};

// All training pixels of a dataset as rays with targets.
struct RayPool {
  std::vector<Ray> rays;
  Eigen::Matrix3Xd rgb;
  Eigen::MatrixXd features;
  double near = 0.0;
  double far = 1.0;

  static RayPool from_dataset(const TeacherDataset& dataset, bool train = true);
  RayBatch sample(int count, Rng& rng) const;
};

class Distiller {
 public:
  Distiller(const TeacherDataset& dataset, TrainConfig config, FieldConfig field_config);

  // Radiance pretraining followed by feature finetuning.
  void train(const TrainHooks& hooks = {});
  void run_phase(const PhaseConfig& phase, const TrainHooks& hooks = {});

  PhaseConfig phase1() const;
  PhaseConfig phase2() const;

  const TrainConfig& config() const { return config_; }
  TrainConfig& config() { return config_; }
  TrainableScene<float>& fields() { return scene_; }
  long iteration() const { return iteration_; }

  // Snapshot for rendering, querying and checkpoints.
  SceneModel snapshot() const;
  // Continue from a saved model (its fields and counters).
  void restore(const SceneModel& model);
  // Takes over the radiance networks, their optimizer state, the iteration
  // count and the random stream of another distiller, e.g. one that finished
  // phase 1 with a different feature head. Feature parameters stay as they are.
  void warm_start(const Distiller& pretrained);

 private:
  TrainConfig config_;
  const TeacherDataset* dataset_;
  RayPool pool_;
  TrainableScene<float> scene_;
  AdamState<float> adam_coarse_, adam_fine_;
  Rng rng_;
  long iteration_ = 0;
};

// Convenience wrapper: validates, trains both phases, returns the model.
SceneModel train(const TeacherDataset& dataset, const TrainConfig& config, const FieldConfig& field_config,
                 const TrainHooks& hooks = {});

}  // namespace dff
