#pragma once

// Independent reference implementations and small fixtures shared by the
// unit tests and the acceptance binary. Nothing here calls the code under
// test for the quantity it checks.

#include <cmath>
#include <numbers>
#include <vector>

#include "dff/distiller.hpp"
#include "dff/field.hpp"
#include "dff/renderer.hpp"

namespace dff::testing {

// A few hundred parameters per field; every code path (skip, direction
// encoding, multi-layer heads) still exercised.
inline FieldConfig tiny_config(FeatureMode mode = FeatureMode::kBranch) {
  FieldConfig c;
  c.trunk_layers = 2;
  c.trunk_width = 8;
  c.pe_len_pos = 2;
  c.pe_len_dir = 1;
  c.skip_at = 1;
  c.feature_dim = 3;
  c.head_layers_color = 2;
  c.head_layers_feature = 2;
  c.head_width = 4;
  c.feature_mode = mode;
  c.independent_pe_len = 2;
  c.independent_layers = 2;
  c.independent_width = 6;
  c.independent_skip_at = 1;
  return c;
}

// Straight-line scalar forward pass, written from the parameter layout:
// per dense layer an out x in column-major weight block followed by the bias;
// blocks in the order trunk, density, color, feature.
struct ReferenceField {
  const FieldConfig& c;
  std::vector<double> p;
  std::size_t cursor = 0;

  static std::vector<double> encode(const std::vector<double>& x, int length) {
    std::vector<double> out = x;
    for (int l = 0; l < length; ++l) {
      const double f = std::pow(2.0, l) * std::numbers::pi;
      for (double v : x) out.push_back(std::sin(f * v));
      for (double v : x) out.push_back(std::cos(f * v));
    }
    return out;
  }

  std::vector<double> dense(const std::vector<double>& in, int out_dim, int act) {
    const std::size_t w = cursor;
    const std::size_t b = w + in.size() * static_cast<std::size_t>(out_dim);
    cursor = b + static_cast<std::size_t>(out_dim);
    std::vector<double> out(out_dim);
    for (int o = 0; o < out_dim; ++o) {
      double z = p[b + o];
      for (std::size_t i = 0; i < in.size(); ++i) z += p[w + i * out_dim + o] * in[i];
      if (act == 1) z = z > 0.0 ? z : 0.0;
      if (act == 2) z = 1.0 / (1.0 + std::exp(-z));
      out[o] = z;
    }
    return out;
  }

  std::vector<double> mlp(const std::vector<double>& input, const std::vector<int>& widths, int skip, int last_act) {
    std::vector<double> h = input;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (static_cast<int>(i) == skip && skip > 0) h.insert(h.end(), input.begin(), input.end());
      h = dense(h, widths[i], i + 1 == widths.size() ? last_act : 1);
    }
    return h;
  }

  // sigma_raw, rgb, feature
  struct Out {
    double sigma_raw;
    std::vector<double> rgb;
    std::vector<double> feature;
  };

  Out operator()(const Vec3& x, const Vec3& d) {
    cursor = 0;
    const std::vector<double> xs{x(0), x(1), x(2)}, ds{d(0), d(1), d(2)};
    const auto enc = encode(xs, c.pe_len_pos);
    const auto trunk = mlp(enc, std::vector<int>(c.trunk_layers, c.trunk_width), c.skip_at, 1);
    Out out;
    out.sigma_raw = dense(trunk, 1, 0)[0];
    std::vector<double> color_in = trunk;
    const auto denc = encode(ds, c.pe_len_dir);
    color_in.insert(color_in.end(), denc.begin(), denc.end());
    std::vector<int> cw(c.head_layers_color - 1, c.head_width);
    cw.push_back(3);
    out.rgb = mlp(color_in, cw, -1, 2);
    if (c.feature_mode == FeatureMode::kBranch) {
      std::vector<int> fw(c.head_layers_feature - 1, c.head_width);
      fw.push_back(c.feature_dim);
      out.feature = mlp(trunk, fw, -1, 0);
    } else {
      const auto in = c.independent_pe ? encode(xs, c.independent_pe_len) : xs;
      std::vector<int> fw(c.independent_layers, c.independent_width);
      fw.push_back(c.feature_dim);
      out.feature = mlp(in, fw, c.independent_pe ? c.independent_skip_at : -1, 0);
    }
    return out;
  }
};

// c (1 - exp(-sigma L)) for a homogeneous slab of length L.
inline double slab_color(double c, double sigma, double length) { return c * (1.0 - std::exp(-sigma * length)); }

// Random partition of [near, near + length] into k intervals whose last one
// closes at the far bound.
template <typename G>
DepthSamples random_partition(double near, double length, int k, G& rng) {
  std::vector<double> cuts;
  for (int i = 0; i < k - 1; ++i) cuts.push_back(near + length * rng.uniform());
  std::sort(cuts.begin(), cuts.end());
  DepthSamples s;
  s.depths.push_back(near);
  s.depths.insert(s.depths.end(), cuts.begin(), cuts.end());
  finalize_deltas(s, near + length);
  return s;
}

// A field whose density, color and feature are fixed functions of position.
class FunctionField final : public RadianceField {
 public:
  using Fn = std::function<void(const Vec3&, double&, Vec3&, Eigen::VectorXd&)>;
  FunctionField(int dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
  int feature_dim() const override { return dim_; }
  void evaluate(const SampleInputs& in, FieldChannels, FieldBatch& out) const override {
    const Eigen::Index n = in.size();
    out.sigma.resize(n);
    out.sigma_raw.resize(n);
    out.color.resize(3, n);
    out.feature.resize(dim_, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double s;
      Vec3 c;
      Eigen::VectorXd f(dim_);
      fn_(in.positions.col(i), s, c, f);
      out.sigma(i) = s;
      out.sigma_raw(i) = s;
      out.color.col(i) = c;
      out.feature.col(i) = f;
    }
  }

 private:
  int dim_;
  Fn fn_;
};

// Two rays with four fixed samples each for gradient checks.
inline RayBatch gradient_batch(int feature_dim) {
  RayBatch b;
  b.rays = {Ray{Vec3(0.1, -0.2, 0.3), Vec3(0.0, 0.6, -0.8)}, Ray{Vec3(-0.3, 0.1, 0.2), Vec3(0.48, 0.0, -0.877)}};
  b.rgb.resize(3, 2);
  b.rgb << 0.9, 0.1, 0.2, 0.7, 0.4, 0.3;
  b.features.resize(feature_dim, 2);
  for (int i = 0; i < feature_dim; ++i) {
    b.features(i, 0) = 0.3 - 0.2 * i;
    b.features(i, 1) = -0.4 + 0.25 * i;
  }
  b.near = 0.2;
  b.far = 1.4;
  std::vector<DepthSamples> coarse(2), fine(2);
  const double cd[2][4] = {{0.2, 0.45, 0.8, 1.1}, {0.25, 0.5, 0.7, 1.2}};
  const double fd[2][4] = {{0.3, 0.6, 0.9, 1.25}, {0.22, 0.55, 0.95, 1.3}};
  for (int r = 0; r < 2; ++r) {
    coarse[r].depths.assign(cd[r], cd[r] + 4);
    fine[r].depths.assign(fd[r], fd[r] + 4);
    finalize_deltas(coarse[r], b.far);
    finalize_deltas(fine[r], b.far);
  }
  b.coarse_samples = coarse;
  b.fine_samples = fine;
  return b;
}

// Larger-than-default initial density so the check sees nonzero weights and
// live ReLUs.
inline void shift_density_bias(NeuralField<double>& field, double value) {
  const ParamRange r = field.density_head_range();
  field.parameters()[r.end - 1] = value;
}

struct GradientCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t parameters = 0;
};

// L1 feature loss with compositing weights frozen at `weights`: the
// stop-gradient objective, written directly from its definition.
inline double frozen_feature_loss(const NeuralField<double>& field, const RayBatch& batch,
                                  const std::vector<DepthSamples>& samples,
                                  const std::vector<std::vector<double>>& weights) {
  double total = 0.0;
  for (std::size_t r = 0; r < batch.rays.size(); ++r) {
    const auto& s = samples[r];
    SampleInputs in;
    in.resize(static_cast<Eigen::Index>(s.size()));
    for (std::size_t k = 0; k < s.size(); ++k) {
      in.positions.col(static_cast<Eigen::Index>(k)) = batch.rays[r].at(s.depths[k]);
      in.directions.col(static_cast<Eigen::Index>(k)) = batch.rays[r].direction;
    }
    FieldBatch out;
    field.evaluate(in, {false, true}, out);
    for (Eigen::Index d = 0; d < out.feature.rows(); ++d) {
      double f = 0.0;
      for (std::size_t k = 0; k < s.size(); ++k) f += weights[r][k] * out.feature(d, static_cast<Eigen::Index>(k));
      total += std::abs(f - batch.features(d, static_cast<Eigen::Index>(r)));
    }
  }
  return total;
}

// Central differences against accumulated gradients for every parameter of
// both fields. The numeric side is FD of the photometric loss plus lambda
// times FD of the frozen-weight feature loss. Relative error is
// |a - n| / (|a| + 1e-8). Needs fixed samples in the batch.
inline GradientCheck check_total_loss_gradient(TrainableScene<double>& scene, const RayBatch& batch,
                                               const StepOptions& options, double h = 1e-6) {
  Rng rng(0);
  scene.coarse.zero_grad();
  scene.fine.zero_grad();
  loss_and_gradients(scene, batch, options, rng);
  const std::vector<double> gc(scene.coarse.gradients().begin(), scene.coarse.gradients().end());
  const std::vector<double> gf(scene.fine.gradients().begin(), scene.fine.gradients().end());

  const bool coarse_features = options.feature_sampling == Pass::kCoarse;
  const NeuralField<double>& feature_field = coarse_features ? scene.coarse : scene.fine;
  const std::vector<DepthSamples>& feature_samples = coarse_features ? *batch.coarse_samples : *batch.fine_samples;
  std::vector<std::vector<double>> frozen;
  for (std::size_t r = 0; r < batch.rays.size(); ++r) {
    const auto& s = feature_samples[r];
    SampleInputs in;
    in.resize(static_cast<Eigen::Index>(s.size()));
    for (std::size_t k = 0; k < s.size(); ++k) {
      in.positions.col(static_cast<Eigen::Index>(k)) = batch.rays[r].at(s.depths[k]);
      in.directions.col(static_cast<Eigen::Index>(k)) = batch.rays[r].direction;
    }
    FieldBatch out;
    feature_field.evaluate(in, {true, false}, out);
    const std::vector<double> sigma(out.sigma.data(), out.sigma.data() + out.sigma.size());
    frozen.push_back(compute_weights(sigma, s.deltas).weights);
  }

  StepOptions photometric = options;
  photometric.feature_term = false;
  const auto objective = [&] {
    Rng r(0);
    scene.coarse.zero_grad();
    scene.fine.zero_grad();
    double value = loss_and_gradients(scene, batch, photometric, r).total;
    if (options.feature_term)
      value += options.lambda_f * frozen_feature_loss(feature_field, batch, feature_samples, frozen);
    return value;
  };
  GradientCheck out;
  const auto sweep = [&](NeuralField<double>& field, const std::vector<double>& analytic) {
    auto params = field.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + h;
      const double up = objective();
      params[i] = saved - h;
      const double down = objective();
      params[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      out.max_rel = std::max(out.max_rel, std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8));
      ++out.checked;
    }
    out.parameters += params.size();
  };
  sweep(scene.coarse, gc);
  sweep(scene.fine, gf);
  return out;
}

}  // namespace dff::testing
