#pragma once

// Volume / mask representation and preprocessing.
//
// Conventions, fixed project-wide:
//   - array axes are (x, y, z), C order, z is the axial axis
//   - voxel (i, j, k) has its center at physical (i*sx, j*sy, k*sz) mm
//   - volumes are float32; masks are uint8 {0, 1}

#include <array>
#include <cstdint>
#include <string>

#include "segda/rng.hpp"
#include "segda/tensor.hpp"

namespace segda {

using Spacing = std::array<double, 3>;

struct Volume {
    Tensor<float> data;  // shape (nx, ny, nz)
    Spacing spacing{1.0, 1.0, 1.0};

    std::size_t nx() const { return data.dim(0); }
    std::size_t ny() const { return data.dim(1); }
    std::size_t nz() const { return data.dim(2); }

    float& at(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * ny() + j) * nz() + k];
    }
    float at(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * ny() + j) * nz() + k];
    }

    void validate(const char* what = "Volume") const;
};

struct Mask {
    Tensor<std::uint8_t> data;  // values {0, 1}
    Spacing spacing{1.0, 1.0, 1.0};

    std::size_t nx() const { return data.dim(0); }
    std::size_t ny() const { return data.dim(1); }
    std::size_t nz() const { return data.dim(2); }

    std::uint8_t& at(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * ny() + j) * nz() + k];
    }
    std::uint8_t at(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * ny() + j) * nz() + k];
    }

    std::size_t foreground_count() const;
    void validate(const char* what = "Mask") const;
};

struct Slice2D {
    Tensor<float> data;  // shape (h, w) = (nx, ny)
    std::array<double, 2> pixel_spacing{1.0, 1.0};
    std::size_t source_index = 0;

    std::size_t h() const { return data.dim(0); }
    std::size_t w() const { return data.dim(1); }
    float at(std::size_t i, std::size_t j) const { return data[i * w() + j]; }
    float& at(std::size_t i, std::size_t j) { return data[i * w() + j]; }
};

// --- preprocessing ----------------------------------------------------------

// Trilinear resampling onto a grid with the given spacing. The output shape
// is round(shape_i * spacing_i / target_i) per axis (min 1); sampling
// positions are clamped to the source grid at the borders.
Volume resample_to_isotropic(const Volume& v, const Spacing& target_spacing);

// Same grid geometry, nearest-neighbor lookup; keeps masks binary.
Mask resample_mask(const Mask& m, const Spacing& target_spacing);

// (v - min) / (max - min); a constant volume maps to all zeros.
Volume rescale_intensity(const Volume& v);

// --- slicing / cropping -----------------------------------------------------

Slice2D extract_axial_slice(const Volume& v, std::size_t index);
Slice2D extract_axial_mask_slice(const Mask& m, std::size_t index);

// Symmetric zero padding up to at least (h, w); extra voxel goes after.
Slice2D pad_to(const Slice2D& s, std::size_t h, std::size_t w);

struct CropOffset {
    std::size_t row = 0, col = 0;
};

// Uniform offset over the valid positions of an (h, w) window in a slice
// that has already been padded to at least that size.
CropOffset choose_crop_offset(std::size_t slice_h, std::size_t slice_w,
                              std::size_t h, std::size_t w, Rng& rng);

Slice2D crop_at(const Slice2D& s, const CropOffset& o, std::size_t h, std::size_t w);

// Random crop; pads first when the slice is smaller than the request.
Slice2D random_crop(const Slice2D& s, std::size_t h, std::size_t w, Rng& rng);

} // namespace segda
