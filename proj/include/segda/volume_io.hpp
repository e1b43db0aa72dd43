#pragma once

// Native on-disk volume format: a JSON sidecar header next to a raw
// little-endian payload.
//
//   case_0001.json  {"shape":[nx,ny,nz],"spacing":[sx,sy,sz],
//                    "dtype":"f32","order":"C"}
//   case_0001.raw   nx*ny*nz scalars, C order over (x, y, z)
//
// Volumes are dtype f32, masks dtype u8. The header path is passed around
// as the case path; the payload path is the same with extension ".raw".

#include <string>

#include "segda/volume.hpp"

namespace segda {

void write_volume(const std::string& header_path, const Volume& v);
void write_mask(const std::string& header_path, const Mask& m);

Volume read_volume(const std::string& header_path);
Mask read_mask(const std::string& header_path);

} // namespace segda
