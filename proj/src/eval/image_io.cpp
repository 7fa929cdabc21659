#include "f2i/eval/image_io.hpp"

#include <cmath>
#include <fstream>

#include "f2i/core/errors.hpp"

namespace f2i {

void write_ppm(const std::string& path, const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) throw ShapeError("ppm: [3,H,W] required");
    int64_t H = rgb.dim(1), W = rgb.dim(2);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("ppm: cannot open " + path);
    f << "P6\n" << W << " " << H << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(W) * 3);
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = rgb[(static_cast<int64_t>(c) * H + y) * W + x];
                v = std::min(1.0f, std::max(0.0f, v));
                row[static_cast<size_t>(x * 3 + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

Tensor image_grid(const std::vector<Tensor>& tiles, int columns) {
    if (tiles.empty()) throw DataError("grid: no tiles");
    int64_t H = tiles[0].dim(1), W = tiles[0].dim(2);
    int rows = (static_cast<int>(tiles.size()) + columns - 1) / columns;
    Tensor grid = Tensor::full({3, rows * H, columns * W}, 1.0f);
    for (size_t i = 0; i < tiles.size(); ++i) {
        if (!tiles[i].same_shape(tiles[0])) throw ShapeError("grid: tile shape mismatch");
        int64_t r = static_cast<int64_t>(i) / columns, c = static_cast<int64_t>(i) % columns;
        for (int ch = 0; ch < 3; ++ch)
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x)
                    grid[(static_cast<int64_t>(ch) * rows * H + r * H + y) * columns * W + c * W +
                         x] = tiles[i][(static_cast<int64_t>(ch) * H + y) * W + x];
    }
    return grid;
}

}  // namespace f2i
