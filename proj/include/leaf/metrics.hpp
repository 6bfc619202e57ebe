#pragma once

#include "leaf/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace leaf::metrics {

inline constexpr int kThresholds = 256;
inline constexpr double kEps = 1e-8;
inline constexpr double kBeta2 = 0.3;

using Curve = std::array<double, kThresholds>;

/// Raised when a metric is undefined because the ground truth has no foreground.
struct EmptyGroundTruth : std::domain_error {
    using std::domain_error::domain_error;
};

template <typename Scalar>
using Map = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

template <class A, class B>
void check_same(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0) {
        throw ShapeError("metric inputs differ in shape: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
}

inline double safe_div(double num, double den) { return num / std::max(den, kEps); }

// Centers of 256 equal bins over [0,1]. Neither endpoint is a threshold, so a
// binary map is reproduced exactly at every threshold.
inline double threshold(int k) { return (static_cast<double>(k) + 0.5) / kThresholds; }

/// Largest k with threshold(k) <= v, or -1.
inline int threshold_bin(double v) {
    int k = static_cast<int>(std::floor(v * kThresholds - 0.5));
    k = std::clamp(k, -1, kThresholds - 1);
    while (k + 1 < kThresholds && v >= threshold(k + 1)) ++k;
    while (k >= 0 && v < threshold(k)) --k;
    return k;
}

template <class G>
Map<bool> binarize_gt(const Eigen::ArrayBase<G>& gt) {
    return (gt.template cast<double>() > 0.5);
}

// Object-aware score of one side: 2x / (x^2 + 1 + sigma_x) over the region.
template <class P>
double object_score(const Eigen::ArrayBase<P>& values, const Map<bool>& region) {
    const Eigen::Index n = region.count();
    if (n == 0) return 0.0;
    double s = 0;
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (region(i)) s += static_cast<double>(values(i));
    const double mu = s / static_cast<double>(n);
    double ss = 0;
    for (Eigen::Index i = 0; i < values.size(); ++i)
        if (region(i)) ss += (static_cast<double>(values(i)) - mu) * (static_cast<double>(values(i)) - mu);
    const double sigma = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    return safe_div(2.0 * mu, mu * mu + 1.0 + sigma);
}

// SSIM-style structural agreement of one region.
template <class P, class G>
double region_ssim(const Eigen::ArrayBase<P>& pred, const Eigen::ArrayBase<G>& gt) {
    const double n = static_cast<double>(pred.size());
    const double x = pred.template cast<double>().mean();
    const double y = gt.template cast<double>().mean();
    const auto dx = pred.template cast<double>() - x;
    const auto dy = gt.template cast<double>() - y;
    const double denom = std::max(n - 1, kEps);
    const double sx2 = dx.square().sum() / denom;
    const double sy2 = dy.square().sum() / denom;
    const double sxy = (dx * dy).sum() / denom;
    const double alpha = 4.0 * x * y * sxy;
    const double beta = (x * x + y * y) * (sx2 + sy2);
    if (alpha != 0) return safe_div(alpha, beta);
    return beta == 0 ? 1.0 : 0.0;
}

}  // namespace detail

template <class P, class G>
double mae(const Eigen::ArrayBase<P>& pred, const Eigen::ArrayBase<G>& gt) {
    detail::check_same(pred, gt);
    return (pred.template cast<double>() - gt.template cast<double>()).abs().mean();
}

/// F per threshold: binarize pred >= threshold(k) for k = 0..255. Precision and
/// recall use the 0/0 -> 0 convention.
template <class P, class G>
Curve f_measure_curve(const Eigen::ArrayBase<P>& pred, const Eigen::ArrayBase<G>& gt, double beta2 = kBeta2) {
    detail::check_same(pred, gt);
    const Map<bool> g = detail::binarize_gt(gt);
    const double positives = static_cast<double>(g.count());
    if (positives == 0) throw EmptyGroundTruth("F-measure is undefined for an empty ground truth");
    std::array<double, kThresholds> tp_hist{};
    std::array<double, kThresholds> fp_hist{};
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const int k = detail::threshold_bin(static_cast<double>(pred(i)));
        if (k < 0) continue;
        (g(i) ? tp_hist : fp_hist)[static_cast<std::size_t>(k)] += 1;
    }
    Curve curve{};
    double tp = 0;
    double fp = 0;
    for (int k = kThresholds - 1; k >= 0; --k) {
        tp += tp_hist[static_cast<std::size_t>(k)];
        fp += fp_hist[static_cast<std::size_t>(k)];
        const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double recall = tp / positives;
        const double den = beta2 * precision + recall;
        curve[static_cast<std::size_t>(k)] = den > 0 ? (1 + beta2) * precision * recall / den : 0.0;
    }
    return curve;
}

template <class P, class G>
double f_measure(const Eigen::ArrayBase<P>& pred, const Eigen::ArrayBase<G>& gt, double beta2 = kBeta2) {
    const Curve c = f_measure_curve(pred, gt, beta2);
    return *std::max_element(c.begin(), c.end());
}

/// Structure measure alpha * S_object + (1 - alpha) * S_region.
template <class P, class G>
double s_measure(const Eigen::ArrayBase<P>& pred_in, const Eigen::ArrayBase<G>& gt_in, double alpha = 0.5) {
    detail::check_same(pred_in, gt_in);
    const Map<double> pred = pred_in.template cast<double>();
    const Map<bool> g = detail::binarize_gt(gt_in);
    const Map<double> gd = g.template cast<double>();
    const double y = gd.mean();
    if (y == 0) return 1.0 - pred.mean();
    if (y == 1) return pred.mean();

    const Map<bool> bg = !g;
    const double o_fg = detail::object_score(pred, g);
    const double o_bg = detail::object_score(Map<double>(1.0 - pred), bg);
    const double s_object = y * o_fg + (1 - y) * o_bg;

    // Centroid split, 1-based rounded as in the reference definition.
    const Eigen::Index rows = g.rows();
    const Eigen::Index cols = g.cols();
    const double total = gd.sum();
    double sx = 0;
    double sy = 0;
    for (Eigen::Index c = 0; c < cols; ++c) sx += gd.col(c).sum() * static_cast<double>(c + 1);
    for (Eigen::Index r = 0; r < rows; ++r) sy += gd.row(r).sum() * static_cast<double>(r + 1);
    const Eigen::Index X = static_cast<Eigen::Index>(std::round(sx / total));
    const Eigen::Index Y = static_cast<Eigen::Index>(std::round(sy / total));
    const double area = static_cast<double>(rows * cols);

    double s_region = 0;
    auto quadrant = [&](Eigen::Index r0, Eigen::Index c0, Eigen::Index h, Eigen::Index w) {
        if (h <= 0 || w <= 0) return;
        const double weight = static_cast<double>(h * w) / area;
        s_region += weight * detail::region_ssim(pred.block(r0, c0, h, w), gd.block(r0, c0, h, w));
    };
    quadrant(0, 0, Y, X);
    quadrant(0, X, Y, cols - X);
    quadrant(Y, 0, rows - Y, X);
    quadrant(Y, X, rows - Y, cols - X);

    const double s = alpha * s_object + (1 - alpha) * s_region;
    return s < 0 ? 0.0 : s;
}

/// Enhanced alignment score of one binary foreground map against gt.
template <class F, class G>
double enhanced_alignment(const Eigen::ArrayBase<F>& fm_in, const Eigen::ArrayBase<G>& gt_in) {
    detail::check_same(fm_in, gt_in);
    const Map<double> fm = (fm_in.template cast<double>() > 0.5).template cast<double>();
    const Map<double> gd = detail::binarize_gt(gt_in).template cast<double>();
    const double n = static_cast<double>(gd.size());
    const double g_sum = gd.sum();
    if (g_sum == 0) return (1.0 - fm).mean();
    if (g_sum == n) return fm.mean();
    const double mu_f = fm.mean();
    const double mu_g = gd.mean();
    double total = 0;
    for (Eigen::Index i = 0; i < gd.size(); ++i) {
        const double a = gd(i) - mu_g;
        const double b = fm(i) - mu_f;
        const double phi = detail::safe_div(2.0 * a * b, a * a + b * b);
        total += (phi + 1) * (phi + 1) / 4.0;
    }
    return total / n;
}

template <class P, class G>
Curve e_measure_curve(const Eigen::ArrayBase<P>& pred, const Eigen::ArrayBase<G>& gt) {
    detail::check_same(pred, gt);
    Curve curve{};
    for (int k = 0; k < kThresholds; ++k) {
        const Map<double> fm = (pred.template cast<double>() >= detail::threshold(k)).template cast<double>();
        curve[static_cast<std::size_t>(k)] = enhanced_alignment(fm, gt);
    }
    return curve;
}

/// Mean enhanced-alignment score over the 256 binarization thresholds.
template <class P, class G>
double e_measure(const Eigen::ArrayBase<P>& pred, const Eigen::ArrayBase<G>& gt) {
    const Curve c = e_measure_curve(pred, gt);
    double s = 0;
    for (double v : c) s += v;
    return s / kThresholds;
}

/// Eigen view of a [1,H,W] or [H,W] tensor as an H x W array.
Map<double> as_map(const Tensor& t);

struct ImageScores {
    std::string id;
    double f_beta = 0;  // max over thresholds; 0 when gt is empty
    double s_alpha = 0;
    double e_xi = 0;
    double mae = 0;
    bool empty_gt = false;
};

/// Dataset-level report. f_beta is the max over thresholds of the mean F
/// curve (images with empty gt excluded); e_xi is the mean over thresholds
/// of the mean E curve; s_alpha and mae are image means.
struct EvalReport {
    std::vector<ImageScores> images;
    double f_beta = 0;
    double s_alpha = 0;
    double e_xi = 0;
    double mae = 0;
};

class Evaluator {
public:
    void add(const std::string& id, const Tensor& pred, const Tensor& gt);
    EvalReport report() const;

private:
    std::vector<ImageScores> images_;
    Curve f_sum_{};
    Curve e_sum_{};
    std::size_t f_count_ = 0;
};

/// Tab-separated header + one row: dataset, F, S, E, MAE at 3 decimals.
std::string format_report(const std::string& dataset, const EvalReport& report);

}  // namespace leaf::metrics
