#pragma once

#include "f2i/core/errors.hpp"
#include "f2i/core/tensor.hpp"

namespace f2i {

/// Single-channel 2-D brain-activation raster; the unified cross-subject
/// representation every downstream module consumes.
struct SurfaceMap {
    Tensor pixels;  // [side, side]
    int subject_id = 0;

    int side() const { return static_cast<int>(pixels.dim(0)); }
    void check(int patch_size) const {
        if (pixels.rank() != 2 || pixels.dim(0) != pixels.dim(1))
            throw ShapeError("surface map: square raster required");
        if (!pixels.all_finite()) throw DataError("surface map: non-finite values");
        if (pixels.dim(0) % patch_size != 0)
            throw DataError("surface map: side not divisible by patch size");
    }
};

/// RGB raster with values in [0,1], stored [3, side, side].
struct ImageSample {
    Tensor rgb;

    int side() const { return static_cast<int>(rgb.dim(1)); }
    void check() const {
        if (rgb.rank() != 3 || rgb.dim(0) != 3 || rgb.dim(1) != rgb.dim(2))
            throw ShapeError("image: [3,S,S] required");
        for (int64_t i = 0; i < rgb.numel(); ++i)
            if (!(rgb[i] >= 0.0f && rgb[i] <= 1.0f))
                throw DataError("image: values outside [0,1]");
    }
};

/// One training/eval record: surface map, target image, frozen caption
/// embedding [L_T, d_T], subject tag.
struct PairedSample {
    SurfaceMap surface;
    ImageSample image;
    Tensor caption_embedding;
    int subject_id = 0;
};

}  // namespace f2i
