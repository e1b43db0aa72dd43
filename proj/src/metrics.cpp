#include "segda/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace segda {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared-distance transform (lower envelope of parabolas) with sample
// positions i * s. f: input squared costs, d: output.
void dt1d(const double* f, double* d, std::size_t n, double s,
          std::vector<int>& v, std::vector<double>& z) {
    v.resize(n);
    z.resize(n + 1);
    // rows with no reachable sample yet carry f == inf; those samples
    // contribute no parabola, so skip them to keep the envelope finite
    int k = -1;
    for (std::size_t qi = 0; qi < n; ++qi) {
        if (f[qi] == kInf) continue;
        const double q = static_cast<double>(qi) * s;
        for (;;) {
            if (k < 0) {
                k = 0;
                v[0] = static_cast<int>(qi);
                z[0] = -kInf;
                z[1] = kInf;
                break;
            }
            const double p = static_cast<double>(v[k]) * s;
            const double sep = (f[qi] - f[v[k]] + q * q - p * p) / (2.0 * (q - p));
            if (sep <= z[k]) {
                --k;
                continue;
            }
            ++k;
            v[k] = static_cast<int>(qi);
            z[k] = sep;
            z[k + 1] = kInf;
            break;
        }
    }
    if (k < 0) {
        for (std::size_t qi = 0; qi < n; ++qi) d[qi] = kInf;
        return;
    }
    k = 0;
    for (std::size_t qi = 0; qi < n; ++qi) {
        const double q = static_cast<double>(qi) * s;
        while (z[k + 1] < q) ++k;
        const double dq = q - static_cast<double>(v[k]) * s;
        d[qi] = dq * dq + f[v[k]];
    }
}

void require_same_grid(const Mask& a, const Mask& b, const char* op) {
    if (!a.data.same_shape(b.data))
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
    if (a.spacing != b.spacing)
        throw std::invalid_argument(std::string(op) + ": spacing mismatch");
}

} // namespace

MetricResult dice(const Mask& a, const Mask& b) {
    if (!a.data.same_shape(b.data)) throw std::invalid_argument("dice: shape mismatch");
    std::size_t na = 0, nb = 0, ni = 0;
    for (std::size_t i = 0; i < a.data.numel(); ++i) {
        na += a.data[i];
        nb += b.data[i];
        ni += static_cast<std::size_t>(a.data[i] & b.data[i]);
    }
    MetricResult r;
    r.metric_name = "dice";
    r.value = (na + nb == 0) ? 1.0
                             : 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
    return r;
}

SurfacePointSet extract_surface(const Mask& m) {
    m.validate();
    SurfacePointSet s;
    const std::size_t nx = m.nx(), ny = m.ny(), nz = m.nz();
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t k = 0; k < nz; ++k) {
                if (!m.at(i, j, k)) continue;
                const bool border =
                    (i == 0 || !m.at(i - 1, j, k)) || (i + 1 == nx || !m.at(i + 1, j, k)) ||
                    (j == 0 || !m.at(i, j - 1, k)) || (j + 1 == ny || !m.at(i, j + 1, k)) ||
                    (k == 0 || !m.at(i, j, k - 1)) || (k + 1 == nz || !m.at(i, j, k + 1));
                if (border) {
                    s.voxels.push_back({i, j, k});
                    s.points_mm.push_back({static_cast<double>(i) * m.spacing[0],
                                           static_cast<double>(j) * m.spacing[1],
                                           static_cast<double>(k) * m.spacing[2]});
                }
            }
    return s;
}

Tensor<double> distance_transform_sq(const std::vector<std::array<std::size_t, 3>>& seeds,
                                     std::size_t nx, std::size_t ny, std::size_t nz,
                                     const Spacing& spacing) {
    Tensor<double> d({nx, ny, nz}, kInf);
    for (const auto& s : seeds) d[(s[0] * ny + s[1]) * nz + s[2]] = 0.0;

    std::vector<int> hull;
    std::vector<double> bounds;
    std::vector<double> buf_in(std::max({nx, ny, nz})), buf_out(std::max({nx, ny, nz}));

    // z axis (contiguous)
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j) {
            double* row = d.data() + (i * ny + j) * nz;
            dt1d(row, buf_out.data(), nz, spacing[2], hull, bounds);
            for (std::size_t k = 0; k < nz; ++k) row[k] = buf_out[k];
        }
    // y axis
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t k = 0; k < nz; ++k) {
            for (std::size_t j = 0; j < ny; ++j) buf_in[j] = d[(i * ny + j) * nz + k];
            dt1d(buf_in.data(), buf_out.data(), ny, spacing[1], hull, bounds);
            for (std::size_t j = 0; j < ny; ++j) d[(i * ny + j) * nz + k] = buf_out[j];
        }
    // x axis
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t k = 0; k < nz; ++k) {
            for (std::size_t i = 0; i < nx; ++i) buf_in[i] = d[(i * ny + j) * nz + k];
            dt1d(buf_in.data(), buf_out.data(), nx, spacing[0], hull, bounds);
            for (std::size_t i = 0; i < nx; ++i) d[(i * ny + j) * nz + k] = buf_out[i];
        }
    return d;
}

MetricResult surface_dice(const Mask& a, const Mask& b, double tolerance_mm) {
    require_same_grid(a, b, "surface_dice");
    if (!(tolerance_mm >= 0.0)) throw std::invalid_argument("surface_dice: tolerance must be >= 0");

    MetricResult r;
    r.metric_name = "surface_dice";
    r.tolerance_mm = tolerance_mm;

    const SurfacePointSet sa = extract_surface(a);
    const SurfacePointSet sb = extract_surface(b);
    if (sa.count() == 0 && sb.count() == 0) {
        r.value = 1.0;
        return r;
    }
    if (sa.count() == 0 || sb.count() == 0) {
        r.value = 0.0;
        return r;
    }

    const double tol2 = tolerance_mm * tolerance_mm;
    const Tensor<double> da = distance_transform_sq(sa.voxels, a.nx(), a.ny(), a.nz(), a.spacing);
    const Tensor<double> db = distance_transform_sq(sb.voxels, a.nx(), a.ny(), a.nz(), a.spacing);

    std::size_t matched = 0;
    for (const auto& p : sa.voxels)
        if (db[(p[0] * a.ny() + p[1]) * a.nz() + p[2]] <= tol2) ++matched;
    for (const auto& q : sb.voxels)
        if (da[(q[0] * a.ny() + q[1]) * a.nz() + q[2]] <= tol2) ++matched;

    r.value = static_cast<double>(matched) / static_cast<double>(sa.count() + sb.count());
    return r;
}

} // namespace segda
