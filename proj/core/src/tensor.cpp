#include "njord/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace njord::diffcore {

Tensor::Tensor(int r, int c, double fill) : rows(r), cols(c) {
    if (r < 0 || c < 0) throw std::invalid_argument("negative tensor dimension");
    data.assign(static_cast<size_t>(r) * static_cast<size_t>(c), fill);
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
}

void Tensor::fill(double v) {
    for (double& x : data) x = v;
}

}  // namespace njord::diffcore
