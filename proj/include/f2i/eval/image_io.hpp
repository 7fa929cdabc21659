#pragma once

#include <string>
#include <vector>

#include "f2i/data/types.hpp"

namespace f2i {

/// Binary PPM (P6) export of an RGB raster in [0,1].
void write_ppm(const std::string& path, const Tensor& rgb);

/// Tile equally-sized RGB rasters into one grid image, row-major.
Tensor image_grid(const std::vector<Tensor>& tiles, int columns);

}  // namespace f2i
