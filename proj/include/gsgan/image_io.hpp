#pragma once

#include <string>

#include "gsgan/data.hpp"

namespace gsgan {

// Binary PPM (P6) grid of [-1,1] images [n,3,h,w]; cells fill row-major,
// unused cells stay black.
void write_ppm_grid(const std::string& path, const Tensor<float>& images, std::size_t grid_cols);

}  // namespace gsgan
