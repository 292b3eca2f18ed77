#include "dff/evaluator.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

#include "dff/errors.hpp"
#include "dff/query.hpp"

namespace dff {

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b) || a.empty()) throw InputError("psnr: images must be non-empty and the same shape");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.data.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> g(kSsimWindow);
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    g[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable filter over the valid region.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& x, const std::vector<double>& g) {
  const Eigen::Index rows = x.rows() - kSsimWindow + 1, cols = x.cols() - kSsimWindow + 1;
  Eigen::MatrixXd tmp = Eigen::MatrixXd::Zero(rows, x.cols());
  for (int i = 0; i < kSsimWindow; ++i) tmp += g[i] * x.middleRows(i, rows);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  for (int i = 0; i < kSsimWindow; ++i) out += g[i] * tmp.middleCols(i, cols);
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b) || a.empty()) throw InputError("ssim: images must be non-empty and the same shape");
  if (a.height < kSsimWindow || a.width < kSsimWindow) throw InputError("ssim: images smaller than the 11x11 window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  double total = 0.0;
  for (int ch = 0; ch < a.channels; ++ch) {
    Eigen::MatrixXd x(a.height, a.width), y(a.height, a.width);
    for (int r = 0; r < a.height; ++r)
      for (int c = 0; c < a.width; ++c) {
        x(r, c) = a.at(r, c, ch);
        y(r, c) = b.at(r, c, ch);
      }
    const Eigen::ArrayXXd mx = filter_valid(x, g).array(), my = filter_valid(y, g).array();
    const Eigen::ArrayXXd sxx = filter_valid(x.cwiseProduct(x), g).array() - mx * mx;
    const Eigen::ArrayXXd syy = filter_valid(y.cwiseProduct(y), g).array() - my * my;
    const Eigen::ArrayXXd sxy = filter_valid(x.cwiseProduct(y), g).array() - mx * my;
    const Eigen::ArrayXXd map =
        ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    total += map.mean();
  }
  return total / a.channels;
}

SegmentationReport report_from_confusion(const Eigen::MatrixXd& confusion, std::vector<std::string> labels) {
  const Eigen::Index n = confusion.rows();
  if (confusion.cols() != n || static_cast<Eigen::Index>(labels.size()) != n)
    throw InputError("segmentation: confusion matrix must be square with one row per label");
  SegmentationReport r;
  r.labels = std::move(labels);
  r.confusion = confusion;
  r.total = static_cast<long>(confusion.sum());
  r.iou.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int present = 0;
  for (Eigen::Index l = 0; l < n; ++l) {
    const double tp = confusion(l, l);
    const double fn = confusion.row(l).sum() - tp;
    const double fp = confusion.col(l).sum() - tp;
    if (tp + fn + fp == 0.0) continue;
    r.iou[l] = tp / (tp + fn + fp);
    sum += r.iou[l];
    ++present;
  }
  r.miou = present > 0 ? sum / present : 0.0;
  r.accuracy = r.total > 0 ? confusion.trace() / static_cast<double>(r.total) : 0.0;
  return r;
}

SegmentationReport segmentation_report(const std::vector<int>& truth, const std::vector<int>& predicted,
                                       std::vector<std::string> labels) {
  if (truth.size() != predicted.size()) throw InputError("segmentation: label and prediction counts differ");
  const auto n = static_cast<int>(labels.size());
  Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n || predicted[i] < 0 || predicted[i] >= n)
      throw InputError("segmentation: label index out of range");
    confusion(truth[i], predicted[i]) += 1.0;
  }
  return report_from_confusion(confusion, std::move(labels));
}

Json SegmentationReport::to_json() const {
  Json j;
  j["miou"] = miou;
  j["accuracy"] = accuracy;
  j["total"] = total;
  Json per = Json::object();
  for (std::size_t l = 0; l < labels.size(); ++l) per[labels[l]] = std::isnan(iou[l]) ? Json(nullptr) : Json(iou[l]);
  j["iou"] = per;
  j["labels"] = labels;
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < confusion.cols(); ++c) row.push_back(static_cast<long>(confusion(r, c)));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  return j;
}

PointSegmentation segment_point_cloud(const RadianceField& feature_field, const Eigen::Matrix3Xd& points,
                                      const std::vector<int>& truth, const std::vector<std::string>& labels,
                                      const QueryEmbeddingTable& table, bool top2) {
  if (static_cast<std::size_t>(points.cols()) != truth.size())
    throw InputError("segmentation: point and label counts differ");
  if (labels.size() < 2) throw InputError("segmentation: need at least 2 labels");
  const Eigen::MatrixXd queries = table.matrix(labels);
  const Eigen::MatrixXd features = evaluate_features(feature_field, points);
  PointSegmentation out;
  out.predicted.resize(truth.size());
  std::vector<int> relaxed(truth.size());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const Eigen::VectorXd p = label_probabilities(features.col(i), queries);
    Eigen::Index best;
    p.maxCoeff(&best);
    out.predicted[i] = static_cast<int>(best);
    Eigen::VectorXd rest = p;
    rest(best) = -1.0;
    Eigen::Index second;
    rest.maxCoeff(&second);
    relaxed[i] = truth[i] == static_cast<int>(second) ? truth[i] : static_cast<int>(best);
  }
  out.top1 = segmentation_report(truth, out.predicted, labels);
  if (top2) out.top2 = segmentation_report(truth, relaxed, labels);
  return out;
}

Json DepthMetrics::to_json() const {
  Json j;
  j["delta_1.25"] = delta_ratio;
  j["absrel"] = absrel;
  j["count"] = count;
  return j;
}

DepthMetrics depth_metrics(const Image& predicted, const Image& truth, const std::vector<unsigned char>& mask) {
  if (!predicted.same_shape(truth) || predicted.channels != 1 || mask.size() != predicted.pixel_count())
    throw InputError("depth metrics: depth maps and mask must be single-channel and the same size");
  DepthMetrics m;
  double rel = 0.0;
  long good = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double g = truth.data[i], p = predicted.data[i];
    if (!mask[i] || !std::isfinite(g) || !(g > 0.0)) continue;
    ++m.count;
    rel += std::abs(p - g) / g;
    if (p > 0.0 && std::max(p / g, g / p) < 1.25) ++good;
  }
  if (m.count > 0) {
    m.absrel = rel / m.count;
    m.delta_ratio = static_cast<double>(good) / m.count;
  }
  return m;
}

DepthMetrics depth_metrics(const Image& predicted, const Image& truth, const Image& opacity) {
  if (opacity.pixel_count() != predicted.pixel_count() || opacity.channels != 1)
    throw InputError("depth metrics: opacity map must match the depth map");
  std::vector<unsigned char> mask(opacity.pixel_count());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = opacity.data[i] > kDepthOpacityMin ? 1 : 0;
  return depth_metrics(predicted, truth, mask);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("percentile: no values");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

Eigen::MatrixXd pixels(const Image& map) {
  return Eigen::Map<const Eigen::MatrixXf>(map.data.data(), map.channels, static_cast<Eigen::Index>(map.pixel_count()))
      .cast<double>();
}

}  // namespace

PcaBasis fit_pca(const Image& reference) {
  if (reference.empty()) throw InputError("pca: empty reference map");
  const Eigen::MatrixXd x = pixels(reference);
  PcaBasis basis;
  basis.mean = x.rowwise().mean();
  const Eigen::MatrixXd centered = x.colwise() - basis.mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(x.cols());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  const Eigen::Index d = cov.rows();
  basis.total_variance = cov.trace();
  basis.components = Eigen::MatrixXd::Zero(d, 3);
  for (Eigen::Index c = 0; c < std::min<Eigen::Index>(3, d); ++c) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
    Eigen::Index big;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0.0) v = -v;
    basis.components.col(c) = v;
    basis.eigenvalues(c) = std::max(0.0, solver.eigenvalues()(d - 1 - c));
  }
  return basis;
}

Image pca_visualize(const Image& features, const PcaBasis& basis) {
  if (features.channels != basis.mean.size()) throw InputError("pca: feature dimension does not match the basis");
  const Eigen::MatrixXd projected = basis.components.transpose() * (pixels(features).colwise() - basis.mean);
  Image out(features.height, features.width, 3);
  const double top = basis.eigenvalues(0);
  for (int c = 0; c < 3; ++c) {
    if (!(basis.eigenvalues(c) > 1e-10 * top)) continue;  // stays 0
    std::vector<double> values(static_cast<std::size_t>(projected.cols()));
    for (Eigen::Index i = 0; i < projected.cols(); ++i) values[i] = projected(c, i);
    const double lo = percentile(values, kPcaLowPercentile);
    const double hi = percentile(values, kPcaHighPercentile);
    if (!(hi > lo)) continue;
    for (Eigen::Index i = 0; i < projected.cols(); ++i)
      out.data[static_cast<std::size_t>(i) * 3 + c] = static_cast<float>((std::clamp(values[i], lo, hi) - lo) / (hi - lo));
  }
  return out;
}

Image pca_visualize(const Image& features, const Image& reference) {
  return pca_visualize(features, fit_pca(reference));
}

}  // namespace dff
