#pragma once

// Volumetric Dice and surface Dice at a distance tolerance.
//
// Surface definition: a foreground voxel is a surface voxel when at least
// one of its 6-connected neighbors is background or lies outside the
// array. Surface points are voxel centers in mm (index * spacing).
// Distances are Euclidean in mm. Conventions for empty masks: both
// surfaces empty -> 1.0, exactly one empty -> 0.0.
//
// surface_dice is accelerated with an exact Euclidean distance transform
// of each surface; the all-pairs definition is normative and lives in the
// test suite as the independent oracle.

#include <array>
#include <string>
#include <vector>

#include "segda/volume.hpp"

namespace segda {

struct SurfacePointSet {
    // voxel indices and physical coordinates of surface voxel centers
    std::vector<std::array<std::size_t, 3>> voxels;
    std::vector<std::array<double, 3>> points_mm;
    std::size_t count() const { return voxels.size(); }
};

struct MetricResult {
    double value = 0.0;
    double tolerance_mm = 0.0;
    std::string metric_name;
};

inline constexpr double kDefaultSurfaceToleranceMm = 1.0;

MetricResult dice(const Mask& a, const Mask& b);

SurfacePointSet extract_surface(const Mask& m);

MetricResult surface_dice(const Mask& a, const Mask& b, double tolerance_mm);

// Exact squared Euclidean distance (mm^2) from every voxel center of a
// (nx, ny, nz) grid to the nearest of the given seed voxels. Used by
// surface_dice; exposed for tests.
Tensor<double> distance_transform_sq(const std::vector<std::array<std::size_t, 3>>& seeds,
                                     std::size_t nx, std::size_t ny, std::size_t nz,
                                     const Spacing& spacing);

} // namespace segda
