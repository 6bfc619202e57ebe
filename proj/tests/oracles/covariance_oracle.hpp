#pragma once

#include "leaf/tensor.hpp"

namespace leaf::oracle {

// Two-loop transcription of the cross-covariance definition for tokens [C, L].
inline Tensor brute_force_covariance(const Tensor& t_d, const Tensor& t_r) {
    const Index C = t_d.dim(0), L = t_d.dim(1);
    Tensor m({L, L});
    for (Index i = 0; i < L; ++i)
        for (Index j = 0; j < L; ++j) {
            double mean_d = 0, mean_r = 0;
            for (Index c = 0; c < C; ++c) {
                mean_d += t_d.at(c, i);
                mean_r += t_r.at(c, j);
            }
            mean_d /= static_cast<double>(C);
            mean_r /= static_cast<double>(C);
            double s = 0;
            for (Index c = 0; c < C; ++c) s += (t_d.at(c, i) - mean_d) * (t_r.at(c, j) - mean_r);
            m.at(i, j) = static_cast<Real>(s / static_cast<double>(C - 1));
        }
    return m;
}

}  // namespace leaf::oracle
