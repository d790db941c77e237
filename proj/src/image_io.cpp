#include "gsgan/image_io.hpp"

#include <fstream>

namespace gsgan {

void write_ppm_grid(const std::string& path, const Tensor<float>& images, std::size_t grid_cols) {
    if (images.rank() != 4 || images.dim(1) != 3)
        throw ShapeError("write_ppm_grid: need [n,3,h,w], got " + shape_str(images.shape()));
    const std::size_t n = images.dim(0), h = images.dim(2), w = images.dim(3);
    if (grid_cols == 0) throw ValueError("write_ppm_grid: grid must have at least one column");
    const std::size_t rows = (n + grid_cols - 1) / grid_cols;
    const std::size_t cw = grid_cols * w, ch = rows * h;

    std::vector<std::uint8_t> canvas(cw * ch * 3, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t gy = i / grid_cols, gx = i % grid_cols;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t px = ((gy * h + y) * cw + gx * w + x) * 3;
                for (std::size_t c = 0; c < 3; ++c)
                    canvas[px + c] = denormalize_pixel(images.at(i, c, y, x));
            }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_ppm_grid: cannot write " + path);
    out << "P6\n" << cw << " " << ch << "\n255\n";
    out.write(reinterpret_cast<const char*>(canvas.data()),
              static_cast<std::streamsize>(canvas.size()));
    if (!out) throw IoError("write_ppm_grid: write failed for " + path);
}

}  // namespace gsgan
