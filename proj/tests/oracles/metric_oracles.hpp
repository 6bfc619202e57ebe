#pragma once

#include <cstddef>
#include <vector>

namespace leaf::oracle {

// Row-major H x W maps; gt is binarized at 0.5 inside each oracle.
struct Maps {
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<double> pred;
    std::vector<double> gt;
};

double mae(const Maps& m);
// F at one threshold t with pred >= t as foreground.
double f_at(const Maps& m, double t, double beta2 = 0.3);
double max_f(const Maps& m, double beta2 = 0.3);
double s_measure(const Maps& m, double alpha = 0.5);
// Enhanced alignment of the binary map pred >= t.
double e_at(const Maps& m, double t);
double mean_e(const Maps& m);

}  // namespace leaf::oracle
