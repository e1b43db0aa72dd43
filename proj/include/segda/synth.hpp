#pragma once

// Deterministic synthetic "head" phantoms with controllable domain shift.
// Each phantom is an ellipsoidal brain with two-tissue internal texture,
// a brighter skull shell and dark background; the ground-truth mask is
// the ellipsoid. Domain transforms remap intensities only (gamma curve,
// smooth multiplicative bias field, additive noise, contrast scaling) and
// never touch geometry.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "segda/volume.hpp"

namespace segda::synth {

struct DomainParams {
    std::string name;
    double gamma = 1.0;           // monotone intensity remap exponent, > 0
    double bias_amplitude = 0.0;  // multiplicative smooth field strength, >= 0, < 1
    double noise_sigma = 0.0;     // additive Gaussian std, >= 0
    double contrast_scale = 1.0;  // tissue separation multiplier, > 0
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticCase {
    Volume volume;
    Mask mask;
    std::string case_id;
    std::string domain_name;
    std::uint64_t seed = 0;  // phantom seed, combined with the domain seed for noise
};

// Randomized ellipsoid phantom; shape >= 16 per axis.
SyntheticCase make_phantom(Rng& rng, const std::array<std::size_t, 3>& shape,
                           const Spacing& spacing);

// Intensity-domain transform:
//   v -> clamp01( (0.5 + (v - 0.5) * contrast) ^ gamma * bias_field + noise )
// followed by a rescale to [0, 1]. Deterministic under (case.seed, d.seed).
SyntheticCase apply_domain(const SyntheticCase& c, const DomainParams& d);

// The stock desk benchmark: A near-identity, B gamma + bias shift,
// C strong intensity shift.
std::vector<DomainParams> default_domains();

struct BenchmarkSpec {
    std::vector<DomainParams> domains;
    int cases_per_domain = 8;
    std::array<std::size_t, 3> shape{64, 64, 32};
    Spacing spacing{1.0, 1.0, 1.0};
    std::uint64_t seed = 0;
};

// Writes native-format volumes/masks plus a dataset manifest JSON under
// out_dir; returns the manifest path. Pure function of (spec contents).
std::string build_benchmark(const BenchmarkSpec& spec, const std::string& out_dir);

} // namespace segda::synth
