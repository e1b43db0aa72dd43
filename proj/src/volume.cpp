#include "segda/volume.hpp"

#include <cmath>
#include <stdexcept>

namespace segda {

namespace {

void check_spacing(const Spacing& s, const char* what) {
    for (double v : s)
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument(std::string(what) + ": spacing must be positive and finite");
}

std::size_t target_extent(std::size_t n, double spacing, double target) {
    auto e = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spacing / target));
    return e < 1 ? 1 : e;
}

} // namespace

void Volume::validate(const char* what) const {
    if (data.rank() != 3) throw std::invalid_argument(std::string(what) + ": rank must be 3");
    for (std::size_t d : data.shape())
        if (d < 1) throw std::invalid_argument(std::string(what) + ": shape components must be >= 1");
    check_spacing(spacing, what);
}

void Mask::validate(const char* what) const {
    if (data.rank() != 3) throw std::invalid_argument(std::string(what) + ": rank must be 3");
    for (std::size_t d : data.shape())
        if (d < 1) throw std::invalid_argument(std::string(what) + ": shape components must be >= 1");
    check_spacing(spacing, what);
    for (std::uint8_t v : data.vec())
        if (v > 1) throw std::invalid_argument(std::string(what) + ": mask values must be 0 or 1");
}

std::size_t Mask::foreground_count() const {
    std::size_t n = 0;
    for (std::uint8_t v : data.vec()) n += v;
    return n;
}

Volume resample_to_isotropic(const Volume& v, const Spacing& target_spacing) {
    v.validate();
    check_spacing(target_spacing, "resample_to_isotropic target");

    const std::size_t nx = target_extent(v.nx(), v.spacing[0], target_spacing[0]);
    const std::size_t ny = target_extent(v.ny(), v.spacing[1], target_spacing[1]);
    const std::size_t nz = target_extent(v.nz(), v.spacing[2], target_spacing[2]);

    Volume out;
    out.data = Tensor<float>({nx, ny, nz});
    out.spacing = target_spacing;

    const double rx = target_spacing[0] / v.spacing[0];
    const double ry = target_spacing[1] / v.spacing[1];
    const double rz = target_spacing[2] / v.spacing[2];
    const auto snx = static_cast<std::ptrdiff_t>(v.nx());
    const auto sny = static_cast<std::ptrdiff_t>(v.ny());
    const auto snz = static_cast<std::ptrdiff_t>(v.nz());

    auto clampd = [](double t, double hi) { return t < 0.0 ? 0.0 : (t > hi ? hi : t); };

    for (std::size_t i = 0; i < nx; ++i) {
        const double fx = clampd(static_cast<double>(i) * rx, static_cast<double>(snx - 1));
        const auto x0 = static_cast<std::ptrdiff_t>(fx);
        const std::ptrdiff_t x1 = x0 + 1 < snx ? x0 + 1 : x0;
        const double wx = fx - static_cast<double>(x0);
        for (std::size_t j = 0; j < ny; ++j) {
            const double fy = clampd(static_cast<double>(j) * ry, static_cast<double>(sny - 1));
            const auto y0 = static_cast<std::ptrdiff_t>(fy);
            const std::ptrdiff_t y1 = y0 + 1 < sny ? y0 + 1 : y0;
            const double wy = fy - static_cast<double>(y0);
            for (std::size_t k = 0; k < nz; ++k) {
                const double fz = clampd(static_cast<double>(k) * rz, static_cast<double>(snz - 1));
                const auto z0 = static_cast<std::ptrdiff_t>(fz);
                const std::ptrdiff_t z1 = z0 + 1 < snz ? z0 + 1 : z0;
                const double wz = fz - static_cast<double>(z0);

                auto s = [&](std::ptrdiff_t a, std::ptrdiff_t b, std::ptrdiff_t c) {
                    return static_cast<double>(v.at(static_cast<std::size_t>(a),
                                                    static_cast<std::size_t>(b),
                                                    static_cast<std::size_t>(c)));
                };
                const double c00 = s(x0, y0, z0) * (1 - wx) + s(x1, y0, z0) * wx;
                const double c01 = s(x0, y0, z1) * (1 - wx) + s(x1, y0, z1) * wx;
                const double c10 = s(x0, y1, z0) * (1 - wx) + s(x1, y1, z0) * wx;
                const double c11 = s(x0, y1, z1) * (1 - wx) + s(x1, y1, z1) * wx;
                const double c0 = c00 * (1 - wy) + c10 * wy;
                const double c1 = c01 * (1 - wy) + c11 * wy;
                out.at(i, j, k) = static_cast<float>(c0 * (1 - wz) + c1 * wz);
            }
        }
    }
    return out;
}

Mask resample_mask(const Mask& m, const Spacing& target_spacing) {
    m.validate();
    check_spacing(target_spacing, "resample_mask target");

    const std::size_t nx = target_extent(m.nx(), m.spacing[0], target_spacing[0]);
    const std::size_t ny = target_extent(m.ny(), m.spacing[1], target_spacing[1]);
    const std::size_t nz = target_extent(m.nz(), m.spacing[2], target_spacing[2]);

    Mask out;
    out.data = Tensor<std::uint8_t>({nx, ny, nz});
    out.spacing = target_spacing;

    const double rx = target_spacing[0] / m.spacing[0];
    const double ry = target_spacing[1] / m.spacing[1];
    const double rz = target_spacing[2] / m.spacing[2];
    auto nearest = [](double t, std::size_t n) {
        auto i = static_cast<std::ptrdiff_t>(std::llround(t));
        if (i < 0) i = 0;
        if (i >= static_cast<std::ptrdiff_t>(n)) i = static_cast<std::ptrdiff_t>(n) - 1;
        return static_cast<std::size_t>(i);
    };
    for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t si = nearest(static_cast<double>(i) * rx, m.nx());
        for (std::size_t j = 0; j < ny; ++j) {
            const std::size_t sj = nearest(static_cast<double>(j) * ry, m.ny());
            for (std::size_t k = 0; k < nz; ++k)
                out.at(i, j, k) = m.at(si, sj, nearest(static_cast<double>(k) * rz, m.nz()));
        }
    }
    return out;
}

Volume rescale_intensity(const Volume& v) {
    v.validate();
    float lo = v.data[0], hi = v.data[0];
    for (float x : v.data.vec()) {
        if (!std::isfinite(x))
            throw std::invalid_argument("rescale_intensity: input contains NaN/Inf");
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    Volume out = v;
    if (hi == lo) {
        out.data.zero();
        return out;
    }
    const float range = hi - lo;
    for (float& x : out.data.vec()) x = (x - lo) / range;
    return out;
}

Slice2D extract_axial_slice(const Volume& v, std::size_t index) {
    if (index >= v.nz()) throw std::out_of_range("extract_axial_slice: index out of range");
    Slice2D s;
    s.data = Tensor<float>({v.nx(), v.ny()});
    s.pixel_spacing = {v.spacing[0], v.spacing[1]};
    s.source_index = index;
    for (std::size_t i = 0; i < v.nx(); ++i)
        for (std::size_t j = 0; j < v.ny(); ++j) s.at(i, j) = v.at(i, j, index);
    return s;
}

Slice2D extract_axial_mask_slice(const Mask& m, std::size_t index) {
    if (index >= m.nz()) throw std::out_of_range("extract_axial_mask_slice: index out of range");
    Slice2D s;
    s.data = Tensor<float>({m.nx(), m.ny()});
    s.pixel_spacing = {m.spacing[0], m.spacing[1]};
    s.source_index = index;
    for (std::size_t i = 0; i < m.nx(); ++i)
        for (std::size_t j = 0; j < m.ny(); ++j) s.at(i, j) = static_cast<float>(m.at(i, j, index));
    return s;
}

Slice2D pad_to(const Slice2D& s, std::size_t h, std::size_t w) {
    if (s.h() >= h && s.w() >= w) return s;
    const std::size_t nh = std::max(s.h(), h), nw = std::max(s.w(), w);
    const std::size_t top = (nh - s.h()) / 2, left = (nw - s.w()) / 2;
    Slice2D out;
    out.data = Tensor<float>({nh, nw});
    out.pixel_spacing = s.pixel_spacing;
    out.source_index = s.source_index;
    for (std::size_t i = 0; i < s.h(); ++i)
        for (std::size_t j = 0; j < s.w(); ++j) out.at(i + top, j + left) = s.at(i, j);
    return out;
}

CropOffset choose_crop_offset(std::size_t slice_h, std::size_t slice_w,
                              std::size_t h, std::size_t w, Rng& rng) {
    if (h < 1 || w < 1) throw std::invalid_argument("crop size components must be >= 1");
    if (slice_h < h || slice_w < w)
        throw std::invalid_argument("choose_crop_offset: slice smaller than crop");
    CropOffset o;
    o.row = static_cast<std::size_t>(rng.next_below(slice_h - h + 1));
    o.col = static_cast<std::size_t>(rng.next_below(slice_w - w + 1));
    return o;
}

Slice2D crop_at(const Slice2D& s, const CropOffset& o, std::size_t h, std::size_t w) {
    if (o.row + h > s.h() || o.col + w > s.w())
        throw std::out_of_range("crop_at: window exceeds slice");
    Slice2D out;
    out.data = Tensor<float>({h, w});
    out.pixel_spacing = s.pixel_spacing;
    out.source_index = s.source_index;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) out.at(i, j) = s.at(o.row + i, o.col + j);
    return out;
}

Slice2D random_crop(const Slice2D& s, std::size_t h, std::size_t w, Rng& rng) {
    const Slice2D padded = pad_to(s, h, w);
    const CropOffset o = choose_crop_offset(padded.h(), padded.w(), h, w, rng);
    return crop_at(padded, o, h, w);
}

} // namespace segda
