#include <doctest.h>

#include "dff/distiller.hpp"
#include "dff/synthetic.hpp"
#include "support.hpp"

using namespace dff;
using dff::testing::tiny_config;

TEST_CASE("photometric loss is the squared difference") {
  Eigen::Matrix3Xd a(3, 1), b(3, 1), g;
  a << 0.6, 0.2, 0.3;
  b << 0.5, 0.2, 0.3;
  CHECK(photometric_loss(a, a) == 0.0);
  CHECK(photometric_loss(a, b, &g) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(g(0, 0) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("photometric gradient matches finite differences") {
  Eigen::Matrix3Xd a = Eigen::Matrix3Xd::Random(3, 4), b = Eigen::Matrix3Xd::Random(3, 4), g;
  photometric_loss(a, b, &g);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    Eigen::Matrix3Xd up = a, down = a;
    up(i) += h;
    down(i) -= h;
    const double numeric = (photometric_loss(up, b) - photometric_loss(down, b)) / (2 * h);
    CHECK(std::abs(numeric - g(i)) / (std::abs(g(i)) + 1e-12) < 1e-8);
  }
}

TEST_CASE("feature loss is L1 with a zero subgradient at zero") {
  Eigen::MatrixXd a(2, 1), b(2, 1), g;
  a << 0.5, -0.5;
  b << 0.0, 0.0;
  CHECK(feature_loss(a, a) == 0.0);
  CHECK(feature_loss(a, b, &g) == 1.0);
  CHECK(g(0) == 1.0);
  CHECK(g(1) == -1.0);
  feature_loss(a, a, &g);
  CHECK(g.isZero(0.0));
}

TEST_CASE("learning rate decays exactly linearly") {
  CHECK(linear_lr(5e-4, 8e-5, 0, 3000) == 5e-4);
  for (long i : {1L, 750L, 2999L, 3000L})
    CHECK(linear_lr(5e-4, 8e-5, i, 3000) == 5e-4 + (8e-5 - 5e-4) * static_cast<double>(i) / 3000.0);
}

TEST_CASE("Adam leaves parameters alone for zero gradients and counts steps") {
  std::vector<double> p{1.0, -2.0}, g{0.0, 0.0};
  AdamState<double> s(2);
  adam_step<double>(p, g, s, 0.1);
  CHECK(p == std::vector<double>{1.0, -2.0});
  CHECK(s.step == 1);
  adam_step<double>(p, g, s, 0.1);
  CHECK(s.step == 2);
}

TEST_CASE("Adam first step moves by lr in the gradient sign") {
  std::vector<double> p{0.0}, g{3.0};
  AdamState<double> s(1);
  adam_step<double>(p, g, s, 0.01);
  // m_hat = g, v_hat = g^2.
  CHECK(p[0] == doctest::Approx(-0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("Adam minimizes a scalar quadratic") {
  std::vector<double> x{5.0};
  AdamState<double> s(1);
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> g{2.0 * (x[0] - 1.5)};
    adam_step<double>(x, g, s, linear_lr(0.1, 1e-4, i, 2000));
  }
  CHECK(std::abs(x[0] - 1.5) < 1e-6);
}

TEST_CASE("Adam only touches the given ranges") {
  std::vector<float> p{1, 1, 1, 1}, g{1, 1, 1, 1};
  AdamState<float> s(4);
  const ParamRange r{1, 3};
  adam_step<float>(p, g, s, 0.1, std::span<const ParamRange>(&r, 1));
  CHECK(p[0] == 1.0f);
  CHECK(p[3] == 1.0f);
  CHECK(p[1] < 1.0f);
  CHECK(s.m[0] == 0.0f);
}

TEST_CASE("total loss gradients match central differences on a tiny model") {
  for (Pass pass : {Pass::kFine, Pass::kCoarse}) {
    for (FeatureMode mode : {FeatureMode::kBranch, FeatureMode::kIndependent}) {
      TrainableScene<double> scene(tiny_config(mode), tiny_config(mode), 3);
      testing::shift_density_bias(scene.coarse, 1.0);
      testing::shift_density_bias(scene.fine, 1.2);
      const RayBatch batch = testing::gradient_batch(3);
      StepOptions o;
      o.lambda_f = 0.04;
      o.feature_sampling = pass;
      o.background = Vec3(0.1, 0.2, 0.3);
      const auto result = testing::check_total_loss_gradient(scene, batch, o);
      CHECK(result.parameters < 2000u);
      CHECK(result.max_rel < 1e-4);
    }
  }
}

TEST_CASE("the feature term never changes density-head gradients") {
  TrainableScene<double> scene(tiny_config(), tiny_config(), 1);
  testing::shift_density_bias(scene.fine, 1.0);
  RayBatch batch = testing::gradient_batch(3);
  StepOptions o;
  Rng rng(0);
  const auto density_grads = [&](const RayBatch& b, bool feature_term) {
    o.feature_term = feature_term;
    scene.coarse.zero_grad();
    scene.fine.zero_grad();
    loss_and_gradients(scene, b, o, rng);
    const ParamRange r = scene.fine.density_head_range();
    return std::vector<double>(scene.fine.gradients().begin() + r.begin, scene.fine.gradients().begin() + r.end);
  };
  const auto without = density_grads(batch, false);
  const auto with = density_grads(batch, true);
  batch.features *= -3.0;
  const auto perturbed = density_grads(batch, true);
  CHECK(with == without);
  CHECK(perturbed == without);
}

TEST_CASE("the feature loss contributes exactly zero to density-head gradients") {
  TrainableScene<double> scene(tiny_config(), tiny_config(), 2);
  testing::shift_density_bias(scene.coarse, 1.0);
  testing::shift_density_bias(scene.fine, 1.0);
  RayBatch batch = testing::gradient_batch(3);
  StepOptions o;
  Rng rng(0);
  o.feature_term = true;
  o.lambda_f = 1.0;
  scene.coarse.zero_grad();
  scene.fine.zero_grad();
  loss_and_gradients(scene, batch, o, rng);
  const std::vector<double> full(scene.fine.gradients().begin(), scene.fine.gradients().end());
  o.feature_term = false;
  scene.coarse.zero_grad();
  scene.fine.zero_grad();
  loss_and_gradients(scene, batch, o, rng);
  const ParamRange r = scene.fine.density_head_range();
  double trunk_delta = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    const double from_feature = full[i] - scene.fine.gradients()[i];
    if (i >= r.begin && i < r.end) CHECK(from_feature == 0.0);
    if (i < r.begin) trunk_delta += std::abs(from_feature);
  }
  CHECK(trunk_delta > 0.0);
}

namespace {

TeacherDataset small_dataset() {
  auto s = SyntheticSpec::desk();
  s.width = s.height = 16;
  s.n_views = 4;
  s.n_holdout = 1;
  s.gt_points = 200;
  return generate_synthetic(s);
}

TrainConfig small_train() {
  TrainConfig c;
  c.phase1_iters = 6;
  c.phase2_iters = 4;
  c.rays_per_batch = 16;
  c.coarse_samples = 8;
  c.fine_samples = 8;
  c.log_every = 0;
  c.seed = 5;
  return c;
}

FieldConfig small_field() {
  FieldConfig f = tiny_config();
  f.feature_dim = 16;
  return f;
}

}  // namespace

TEST_CASE("lambda zero is bit-identical to a frozen feature head") {
  const TeacherDataset ds = small_dataset();
  Distiller a(ds, small_train(), small_field()), b(ds, small_train(), small_field());
  PhaseConfig with = a.phase1();
  with.feature_term = true;
  with.lambda_f = 0.0;
  with.train_feature = true;
  PhaseConfig frozen = b.phase1();
  frozen.feature_term = false;
  frozen.train_feature = false;
  a.run_phase(with);
  b.run_phase(frozen);
  const auto pa = a.fields().fine.parameters(), pb = b.fields().fine.parameters();
  CHECK(std::equal(pa.begin(), pa.end(), pb.begin()));
  const auto ca = a.fields().coarse.parameters(), cb = b.fields().coarse.parameters();
  CHECK(std::equal(ca.begin(), ca.end(), cb.begin()));
}

TEST_CASE("phase settings follow the two-stage schedule") {
  const TeacherDataset ds = small_dataset();
  Distiller d(ds, small_train(), small_field());
  const PhaseConfig p1 = d.phase1(), p2 = d.phase2();
  CHECK_FALSE(p1.feature_term);
  CHECK(p1.density_noise_std == 1.0);
  CHECK(p1.lr_start == 5e-4);
  CHECK(p1.lr_end == 8e-5);
  CHECK(p2.feature_term);
  CHECK(p2.density_noise_std == 0.0);
  CHECK(p2.lr_start == 1e-4);
  CHECK(p2.lr_end == 1e-4);
  CHECK(p2.lambda_f == 0.04);
  CHECK(p2.train_radiance);
}

TEST_CASE("training is deterministic per seed") {
  const TeacherDataset ds = small_dataset();
  const SceneModel a = train(ds, small_train(), small_field());
  const SceneModel b = train(ds, small_train(), small_field());
  const auto pa = a.fine.parameters(), pb = b.fine.parameters();
  CHECK(std::equal(pa.begin(), pa.end(), pb.begin()));
  CHECK(a.iteration == 10);
  TrainConfig other = small_train();
  other.seed = 6;
  const SceneModel c = train(ds, other, small_field());
  CHECK_FALSE(std::equal(pa.begin(), pa.end(), c.fine.parameters().begin()));
}

TEST_CASE("freezing radiance in phase 2 keeps radiance parameters") {
  const TeacherDataset ds = small_dataset();
  TrainConfig c = small_train();
  c.freeze_radiance = true;
  Distiller d(ds, c, small_field());
  d.run_phase(d.phase1());
  const std::vector<float> before(d.fields().fine.parameters().begin(), d.fields().fine.parameters().end());
  d.run_phase(d.phase2());
  const auto after = d.fields().fine.parameters();
  const ParamRange r = d.fields().fine.radiance_range();
  CHECK(std::equal(before.begin(), before.begin() + r.end, after.begin()));
  CHECK_FALSE(std::equal(before.begin() + r.end, before.end(), after.begin() + r.end));
}

TEST_CASE("warm start reproduces continuing from phase 1") {
  const TeacherDataset ds = small_dataset();
  Distiller base(ds, small_train(), small_field());
  base.run_phase(base.phase1());
  Distiller continued = base;
  continued.run_phase(continued.phase2());
  Distiller fresh(ds, small_train(), small_field());
  fresh.warm_start(base);
  fresh.run_phase(fresh.phase2());
  const auto a = continued.fields().fine.parameters(), b = fresh.fields().fine.parameters();
  CHECK(std::equal(a.begin(), a.end(), b.begin()));
  FieldConfig indep = small_field();
  indep.feature_mode = FeatureMode::kIndependent;
  Distiller other(ds, small_train(), indep);
  CHECK_NOTHROW(other.warm_start(base));
  FieldConfig wider = small_field();
  wider.trunk_width = 9;
  Distiller bad(ds, small_train(), wider);
  CHECK_THROWS_AS(bad.warm_start(base), StructuralError);
}

TEST_CASE("mismatched feature dimension is a structural error") {
  const TeacherDataset ds = small_dataset();
  CHECK_THROWS_AS(Distiller(ds, small_train(), tiny_config()), StructuralError);
}

TEST_CASE("training telemetry reports the losses") {
  const TeacherDataset ds = small_dataset();
  TrainConfig c = small_train();
  c.log_every = 2;
  std::vector<TrainTelemetry> log;
  TrainHooks hooks;
  hooks.on_log = [&](const TrainTelemetry& t) { log.push_back(t); };
  train(ds, c, small_field(), hooks);
  REQUIRE(log.size() == 5u);
  CHECK(log.front().phase == 1);
  CHECK(log.back().phase == 2);
  CHECK(log.front().loss.feature == 0.0);
  CHECK(log.back().loss.feature > 0.0);
}
