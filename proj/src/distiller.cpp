#include "dff/distiller.hpp"

#include <algorithm>
#include <cmath>

namespace dff {

void TrainConfig::validate() const {
  if (phase1_iters < 0 || phase2_iters < 0) throw InputError("train config: iteration counts must be >= 0");
  if (rays_per_batch < 1) throw InputError("train config: rays_per_batch must be >= 1");
  if (!(lr_start >= lr_end && lr_end > 0.0)) throw InputError("train config: require lr_start >= lr_end > 0");
  if (!(finetune_lr > 0.0)) throw InputError("train config: finetune_lr must be positive");
  if (!(lambda_f >= 0.0)) throw InputError("train config: lambda_f must be >= 0");
  if (coarse_samples < 2 || fine_samples < 0) throw InputError("train config: bad sample counts");
}

double photometric_loss(const Eigen::Matrix3Xd& rendered, const Eigen::Matrix3Xd& target, Eigen::Matrix3Xd* grad) {
  if (rendered.cols() != target.cols()) throw StructuralError("photometric_loss: ray count mismatch");
  const Eigen::Matrix3Xd diff = rendered - target;
  if (grad) *grad = 2.0 * diff;
  return diff.squaredNorm();
}

double feature_loss(const Eigen::MatrixXd& rendered, const Eigen::MatrixXd& target, Eigen::MatrixXd* grad) {
  if (rendered.rows() != target.rows() || rendered.cols() != target.cols())
    throw StructuralError("feature_loss: shape mismatch");
  const Eigen::MatrixXd diff = rendered - target;
  if (grad) *grad = diff.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
  return diff.cwiseAbs().sum();
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, double lr,
               std::span<const ParamRange> ranges) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw StructuralError("adam_step: buffer sizes do not match");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& range : ranges) {
    for (std::size_t i = range.begin; i < range.end; ++i) {
      const double g = grads[i];
      const double m = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
      const double v = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
      state.m[i] = static_cast<T>(m);
      state.v[i] = static_cast<T>(v);
      params[i] = static_cast<T>(params[i] - lr * (m / c1) / (std::sqrt(v / c2) + state.eps));
    }
  }
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&, double,
                               std::span<const ParamRange>);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&, double,
                                std::span<const ParamRange>);

double linear_lr(double lr_start, double lr_end, long iteration, long total) {
  if (total <= 0) return lr_start;
  return lr_start + (lr_end - lr_start) * static_cast<double>(iteration) / static_cast<double>(total);
}

namespace {

struct PassState {
  std::vector<DepthSamples> samples;
  std::vector<CompositeWeights> weights;
  FieldBatch values;
  Eigen::Matrix3Xd rgb;
  Eigen::MatrixXd features;
};

template <typename T>
PassState forward_pass(NeuralField<T>& field, const RayBatch& batch, std::vector<DepthSamples> samples,
                       bool features, const StepOptions& options, Rng& rng) {
  PassState s;
  s.samples = std::move(samples);
  ForwardOptions fo;
  fo.channels.radiance = true;
  fo.channels.feature = features;
  fo.density_noise_std = options.density_noise_std;
  fo.rng = &rng;
  field.forward(build_inputs(batch.rays, s.samples), fo, s.values);
  const std::size_t n = batch.rays.size();
  s.weights.resize(n);
  s.rgb.resize(3, static_cast<Eigen::Index>(n));
  if (features) s.features.resize(field.feature_dim(), static_cast<Eigen::Index>(n));
  Eigen::Index offset = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto k = static_cast<Eigen::Index>(s.samples[r].size());
    const auto col = static_cast<Eigen::Index>(r);
    s.weights[r] = compute_weights(std::span<const double>(s.values.sigma.data() + offset, k), s.samples[r].deltas);
    s.rgb.col(col) = over_background(composite_color(s.weights[r], s.values.color.middleCols(offset, k)),
                                     s.weights[r].opacity, options.background);
    if (features) s.features.col(col) = composite_feature(s.weights[r], s.values.feature.middleCols(offset, k));
    offset += k;
  }
  return s;
}

template <typename T>
void backward_pass(NeuralField<T>& field, const PassState& s, const Eigen::Matrix3Xd& d_rgb,
                   const Eigen::MatrixXd* d_features, const Vec3& background) {
  const Eigen::Index total = s.values.sigma.size();
  FieldBatchGrad g;
  g.sigma = Eigen::VectorXd::Zero(total);
  g.color.resize(3, total);
  if (d_features) g.feature.resize(d_features->rows(), total);
  Eigen::Index offset = 0;
  for (std::size_t r = 0; r < s.samples.size(); ++r) {
    const auto k = static_cast<Eigen::Index>(s.samples[r].size());
    const auto col = static_cast<Eigen::Index>(r);
    composite_color_backward(s.weights[r], s.values.color.middleCols(offset, k), s.samples[r].deltas, background,
                             d_rgb.col(col), g.color.middleCols(offset, k),
                             std::span<double>(g.sigma.data() + offset, k));
    if (d_features) composite_feature_backward(s.weights[r], d_features->col(col), g.feature.middleCols(offset, k));
    offset += k;
  }
  field.backward(g);
}

}  // namespace

template <typename T>
LossBreakdown loss_and_gradients(TrainableScene<T>& scene, const RayBatch& batch, const StepOptions& options,
                                 Rng& rng) {
  const std::size_t n = batch.rays.size();
  if (batch.rgb.cols() != static_cast<Eigen::Index>(n)) throw StructuralError("loss: rgb targets do not match rays");
  if (options.feature_term && batch.features.cols() != static_cast<Eigen::Index>(n))
    throw StructuralError("loss: feature targets do not match rays");
  if (batch.coarse_samples && batch.coarse_samples->size() != n)
    throw StructuralError("loss: fixed coarse samples do not match rays");
  if (batch.fine_samples && batch.fine_samples->size() != n)
    throw StructuralError("loss: fixed fine samples do not match rays");

  const bool coarse_features = options.feature_term && options.feature_sampling == Pass::kCoarse;
  const bool fine_features = options.feature_term && options.feature_sampling == Pass::kFine;
  const std::size_t chunk = options.chunk_rays > 0 ? static_cast<std::size_t>(options.chunk_rays) : n;

  LossBreakdown loss;
  // Rays are processed in fixed-size groups, in ray order, with gradients
  // accumulating into the field buffers.
  for (std::size_t first = 0; first < n; first += chunk) {
    const std::size_t count = std::min(chunk, n - first);
    const auto cols = static_cast<Eigen::Index>(count);
    const auto begin = static_cast<Eigen::Index>(first);
    RayBatch part;
    part.rays.assign(batch.rays.begin() + begin, batch.rays.begin() + begin + cols);
    part.rgb = batch.rgb.middleCols(begin, cols);
    if (options.feature_term) part.features = batch.features.middleCols(begin, cols);
    part.near = batch.near;
    part.far = batch.far;

    std::vector<DepthSamples> coarse_samples;
    if (batch.coarse_samples) {
      coarse_samples.assign(batch.coarse_samples->begin() + begin, batch.coarse_samples->begin() + begin + cols);
    } else {
      coarse_samples.reserve(count);
      for (std::size_t r = 0; r < count; ++r)
        coarse_samples.push_back(stratified_sample(batch.near, batch.far, options.coarse_samples, rng));
    }
    PassState coarse = forward_pass(scene.coarse, part, std::move(coarse_samples), coarse_features, options, rng);

    std::vector<DepthSamples> fine_samples;
    if (batch.fine_samples) {
      fine_samples.assign(batch.fine_samples->begin() + begin, batch.fine_samples->begin() + begin + cols);
    } else {
      fine_samples.reserve(count);
      for (std::size_t r = 0; r < count; ++r) {
        const DepthSamples extra =
            importance_sample(coarse.samples[r], coarse.weights[r].weights, options.fine_samples, batch.far, rng);
        fine_samples.push_back(merge_samples(coarse.samples[r], extra, batch.far));
      }
    }
    PassState fine = forward_pass(scene.fine, part, std::move(fine_samples), fine_features, options, rng);

    Eigen::Matrix3Xd d_coarse, d_fine;
    loss.photometric_coarse += photometric_loss(coarse.rgb, part.rgb, &d_coarse);
    loss.photometric_fine += photometric_loss(fine.rgb, part.rgb, &d_fine);

    Eigen::MatrixXd d_feat;
    if (options.feature_term) {
      const Eigen::MatrixXd& rendered = coarse_features ? coarse.features : fine.features;
      loss.feature += feature_loss(rendered, part.features, &d_feat);
      d_feat *= options.lambda_f;
    }

    backward_pass(scene.coarse, coarse, d_coarse, coarse_features ? &d_feat : nullptr, options.background);
    backward_pass(scene.fine, fine, d_fine, fine_features ? &d_feat : nullptr, options.background);
  }
  loss.total = loss.photometric_coarse + loss.photometric_fine;
  if (options.feature_term) loss.total += options.lambda_f * loss.feature;
  return loss;
}

template LossBreakdown loss_and_gradients<float>(TrainableScene<float>&, const RayBatch&, const StepOptions&, Rng&);
template LossBreakdown loss_and_gradients<double>(TrainableScene<double>&, const RayBatch&, const StepOptions&, Rng&);

RayPool RayPool::from_dataset(const TeacherDataset& dataset, bool train) {
  RayPool pool;
  const auto frames = dataset.frame_indices(train);
  if (frames.empty()) throw InputError("ray pool: dataset has no frames in the requested split");
  std::size_t total = 0;
  for (auto i : frames) total += dataset.frames[i].rgb.pixel_count();
  pool.rays.reserve(total);
  pool.rgb.resize(3, static_cast<Eigen::Index>(total));
  pool.features.resize(dataset.feature_dim, static_cast<Eigen::Index>(total));
  pool.near = dataset.frames[frames[0]].camera.near;
  pool.far = dataset.frames[frames[0]].camera.far;
  Eigen::Index col = 0;
  for (auto i : frames) {
    const auto& f = dataset.frames[i];
    pool.near = std::min(pool.near, f.camera.near);
    pool.far = std::max(pool.far, f.camera.far);
    for (int r = 0; r < f.rgb.height; ++r) {
      for (int c = 0; c < f.rgb.width; ++c) {
        pool.rays.push_back(generate_ray(f.camera, {r, c}));
        for (int ch = 0; ch < 3; ++ch) pool.rgb(ch, col) = f.rgb.at(r, c, ch);
        for (int ch = 0; ch < dataset.feature_dim; ++ch) pool.features(ch, col) = f.features.at(r, c, ch);
        ++col;
      }
    }
  }
  return pool;
}

RayBatch RayPool::sample(int count, Rng& rng) const {
  RayBatch batch;
  batch.near = near;
  batch.far = far;
  batch.rays.reserve(count);
  batch.rgb.resize(3, count);
  batch.features.resize(features.rows(), count);
  const auto n = static_cast<double>(rays.size());
  for (int i = 0; i < count; ++i) {
    const auto idx = std::min(static_cast<std::size_t>(rng.uniform() * n), rays.size() - 1);
    batch.rays.push_back(rays[idx]);
    batch.rgb.col(i) = rgb.col(static_cast<Eigen::Index>(idx));
    batch.features.col(i) = features.col(static_cast<Eigen::Index>(idx));
  }
  return batch;
}

namespace {

FieldConfig checked(const TeacherDataset& dataset, const FieldConfig& config) {
  dataset.validate();
  if (dataset.feature_dim != config.feature_dim)
    throw StructuralError("train: dataset feature dim " + std::to_string(dataset.feature_dim) +
                          " does not match field config (" + std::to_string(config.feature_dim) + ")");
  return config;
}

}  // namespace

Distiller::Distiller(const TeacherDataset& dataset, TrainConfig config, FieldConfig field_config)
    : config_(config),
      dataset_(&dataset),
      pool_(RayPool::from_dataset(dataset)),
      scene_(checked(dataset, field_config), field_config, config.seed),
      adam_coarse_(scene_.coarse.parameters().size()),
      adam_fine_(scene_.fine.parameters().size()),
      rng_(Rng(config.seed).split(1)) {
  config_.validate();
}

PhaseConfig Distiller::phase1() const {
  PhaseConfig p;
  p.phase = 1;
  p.iterations = config_.phase1_iters;
  p.lr_start = config_.lr_start;
  p.lr_end = config_.lr_end;
  p.lambda_f = 0.0;
  p.feature_term = false;
  p.train_radiance = true;
  p.train_feature = false;
  p.density_noise_std = config_.density_noise ? config_.density_noise_std : 0.0;
  return p;
}

PhaseConfig Distiller::phase2() const {
  PhaseConfig p;
  p.phase = 2;
  p.iterations = config_.phase2_iters;
  p.lr_start = config_.finetune_lr;
  p.lr_end = config_.finetune_lr;
  p.lambda_f = config_.lambda_f;
  p.feature_term = true;
  p.train_radiance = !config_.freeze_radiance;
  p.train_feature = true;
  p.density_noise_std = 0.0;
  return p;
}

void Distiller::train(const TrainHooks& hooks) {
  run_phase(phase1(), hooks);
  run_phase(phase2(), hooks);
}

void Distiller::run_phase(const PhaseConfig& phase, const TrainHooks& hooks) {
  StepOptions opts;
  opts.lambda_f = phase.lambda_f;
  opts.feature_term = phase.feature_term;
  opts.feature_sampling = config_.feature_sampling;
  opts.density_noise_std = phase.density_noise_std;
  opts.coarse_samples = config_.coarse_samples;
  opts.fine_samples = config_.fine_samples;
  opts.background = config_.background;

  std::vector<ParamRange> coarse_ranges, fine_ranges;
  if (phase.train_radiance) {
    coarse_ranges.push_back(scene_.coarse.radiance_range());
    fine_ranges.push_back(scene_.fine.radiance_range());
  }
  if (phase.train_feature) {
    coarse_ranges.push_back(scene_.coarse.feature_range());
    fine_ranges.push_back(scene_.fine.feature_range());
  }

  for (int it = 0; it < phase.iterations; ++it) {
    const double lr = linear_lr(phase.lr_start, phase.lr_end, it, phase.iterations);
    const RayBatch batch = pool_.sample(config_.rays_per_batch, rng_);
    scene_.coarse.zero_grad();
    scene_.fine.zero_grad();
    const LossBreakdown loss = loss_and_gradients(scene_, batch, opts, rng_);
    adam_step<float>(scene_.coarse.parameters(), scene_.coarse.gradients(), adam_coarse_, lr, coarse_ranges);
    adam_step<float>(scene_.fine.parameters(), scene_.fine.gradients(), adam_fine_, lr, fine_ranges);
    ++iteration_;
    const bool last = it + 1 == phase.iterations;
    if (hooks.on_log && config_.log_every > 0 && ((it + 1) % config_.log_every == 0 || last))
      hooks.on_log({phase.phase, iteration_, lr, loss});
    if (hooks.on_checkpoint && config_.checkpoint_every > 0 && (it + 1) % config_.checkpoint_every == 0)
      hooks.on_checkpoint(snapshot());
  }
  scene_.coarse.clear_cache();
  scene_.fine.clear_cache();
}

SceneModel Distiller::snapshot() const {
  SceneModel model(scene_.coarse.config(), scene_.fine.config());
  model.coarse.set_parameters(scene_.coarse.parameters());
  model.fine.set_parameters(scene_.fine.parameters());
  model.feature_pass = config_.feature_sampling;
  model.background = config_.background;
  model.near = pool_.near;
  model.far = pool_.far;
  model.queries = dataset_->queries;
  model.train_config = config_;
  model.iteration = iteration_;
  model.rng_state = rng_.state();
  return model;
}

void Distiller::restore(const SceneModel& model) {
  if (!(model.coarse.config() == scene_.coarse.config()) || !(model.fine.config() == scene_.fine.config()))
    throw StructuralError("distiller: checkpoint field config does not match");
  scene_.coarse.set_parameters(model.coarse.parameters());
  scene_.fine.set_parameters(model.fine.parameters());
  iteration_ = model.iteration;
  if (!model.rng_state.empty()) rng_.set_state(model.rng_state);
  adam_coarse_ = AdamState<float>(scene_.coarse.parameters().size());
  adam_fine_ = AdamState<float>(scene_.fine.parameters().size());
}

namespace {

template <typename T>
void copy_range(std::span<const T> from, std::span<T> to, ParamRange range) {
  std::copy(from.begin() + static_cast<std::ptrdiff_t>(range.begin), from.begin() + static_cast<std::ptrdiff_t>(range.end),
            to.begin() + static_cast<std::ptrdiff_t>(range.begin));
}

void adopt(const NeuralField<float>& from_field, const AdamState<float>& from_adam, NeuralField<float>& to_field,
           AdamState<float>& to_adam) {
  const ParamRange range = from_field.radiance_range();
  if (range.end != to_field.radiance_range().end)
    throw StructuralError("distiller: warm start needs identical radiance networks");
  copy_range<float>(from_field.parameters(), to_field.parameters(), range);
  copy_range<float>(from_adam.m, to_adam.m, range);
  copy_range<float>(from_adam.v, to_adam.v, range);
  to_adam.step = from_adam.step;
}

}  // namespace

void Distiller::warm_start(const Distiller& pretrained) {
  adopt(pretrained.scene_.coarse, pretrained.adam_coarse_, scene_.coarse, adam_coarse_);
  adopt(pretrained.scene_.fine, pretrained.adam_fine_, scene_.fine, adam_fine_);
  iteration_ = pretrained.iteration_;
  rng_ = pretrained.rng_;
}

SceneModel train(const TeacherDataset& dataset, const TrainConfig& config, const FieldConfig& field_config,
                 const TrainHooks& hooks) {
  Distiller d(dataset, config, field_config);
  d.train(hooks);
  return d.snapshot();
}

}  // namespace dff
