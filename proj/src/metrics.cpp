#include "leaf/metrics.hpp"

#include <cstdio>

namespace leaf::metrics {

Map<double> as_map(const Tensor& t) {
    Index h = 0;
    Index w = 0;
    if (t.rank() == 2) {
        h = t.dim(0);
        w = t.dim(1);
    } else if (t.rank() == 3 && t.dim(0) == 1) {
        h = t.dim(1);
        w = t.dim(2);
    } else {
        throw ShapeError("expected a [1,H,W] or [H,W] map, got " + shape_str(t.shape()));
    }
    Map<double> m(h, w);
    for (Index r = 0; r < h; ++r)
        for (Index c = 0; c < w; ++c) m(r, c) = static_cast<double>(t[r * w + c]);
    return m;
}

void Evaluator::add(const std::string& id, const Tensor& pred, const Tensor& gt) {
    const Map<double> p = as_map(pred);
    const Map<double> g = as_map(gt);
    ImageScores s;
    s.id = id;
    s.mae = mae(p, g);
    s.s_alpha = s_measure(p, g);
    const Curve e = e_measure_curve(p, g);
    double e_mean = 0;
    for (std::size_t k = 0; k < e.size(); ++k) {
        e_sum_[k] += e[k];
        e_mean += e[k];
    }
    s.e_xi = e_mean / kThresholds;
    try {
        const Curve f = f_measure_curve(p, g);
        for (std::size_t k = 0; k < f.size(); ++k) f_sum_[k] += f[k];
        s.f_beta = *std::max_element(f.begin(), f.end());
        ++f_count_;
    } catch (const EmptyGroundTruth&) {
        s.empty_gt = true;
    }
    images_.push_back(std::move(s));
}

EvalReport Evaluator::report() const {
    EvalReport r;
    r.images = images_;
    if (images_.empty()) throw DataError("no images to evaluate");
    const double n = static_cast<double>(images_.size());
    for (const auto& s : images_) {
        r.s_alpha += s.s_alpha;
        r.mae += s.mae;
    }
    r.s_alpha /= n;
    r.mae /= n;
    double e = 0;
    for (double v : e_sum_) e += v / n;
    r.e_xi = e / kThresholds;
    if (f_count_ > 0) {
        for (double v : f_sum_) r.f_beta = std::max(r.f_beta, v / static_cast<double>(f_count_));
    }
    return r;
}

std::string format_report(const std::string& dataset, const EvalReport& report) {
    char row[256];
    std::snprintf(row, sizeof(row), "%s\t%.3f\t%.3f\t%.3f\t%.3f\n", dataset.c_str(), report.f_beta, report.s_alpha,
                  report.e_xi, report.mae);
    return std::string("dataset\tF_beta\tS_alpha\tE_xi\tMAE\n") + row;
}

}  // namespace leaf::metrics
