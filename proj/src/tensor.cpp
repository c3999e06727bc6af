// SPDX-License-Identifier: Apache-2.0
#include "deepbeam/tensor.hpp"

#include <cmath>

namespace deepbeam::nn {

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace deepbeam::nn
