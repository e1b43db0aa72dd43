#pragma once

// Minimal NIfTI-1 ingestion adapter. Reads .nii and .nii.gz single-frame
// volumes (uint8/int16/uint16/int32/float32/float64, optional byte swap,
// scl_slope/scl_inter applied) into the native in-memory types. The
// stored axis order is taken as (x, y, z) with z axial; files using a
// different anatomical order must be permuted before ingestion.

#include <string>

#include "segda/volume.hpp"

namespace segda::nifti {

Volume read_nifti_volume(const std::string& path);

// Same reader; any nonzero voxel becomes mask value 1.
Mask read_nifti_mask(const std::string& path);

} // namespace segda::nifti
