#include "segda/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "segda/volume_io.hpp"

namespace segda::synth {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

struct BiasField {
    // three low-order cosine plane waves, averaged; values in [-1, 1]
    std::array<double, 3> ax, ay, az, phase;

    static BiasField draw(Rng& rng) {
        BiasField b;
        for (int m = 0; m < 3; ++m) {
            b.ax[m] = 1.0 + rng.next_below(2);  // 1 or 2 half-periods per axis
            b.ay[m] = 1.0 + rng.next_below(2);
            b.az[m] = 1.0 + rng.next_below(2);
            b.phase[m] = rng.next_uniform(0.0, kTwoPi);
        }
        return b;
    }

    double at(double fx, double fy, double fz) const {
        double s = 0.0;
        for (int m = 0; m < 3; ++m)
            s += std::cos(3.141592653589793 * (ax[m] * fx + ay[m] * fy + az[m] * fz) + phase[m]);
        return s / 3.0;
    }
};

} // namespace

void DomainParams::validate() const {
    if (name.empty()) throw std::invalid_argument("DomainParams: name must be nonempty");
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw std::invalid_argument("DomainParams: gamma must be positive and finite");
    if (!(bias_amplitude >= 0.0) || bias_amplitude >= 1.0)
        throw std::invalid_argument("DomainParams: bias_amplitude must lie in [0, 1)");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
        throw std::invalid_argument("DomainParams: noise_sigma must be >= 0");
    if (!(contrast_scale > 0.0) || !std::isfinite(contrast_scale))
        throw std::invalid_argument("DomainParams: contrast_scale must be > 0");
}

SyntheticCase make_phantom(Rng& rng, const std::array<std::size_t, 3>& shape,
                           const Spacing& spacing) {
    for (std::size_t d : shape)
        if (d < 16) throw std::invalid_argument("make_phantom: shape must be >= 16 per axis");

    const double cx = rng.next_uniform(0.45, 0.55) * static_cast<double>(shape[0]);
    const double cy = rng.next_uniform(0.45, 0.55) * static_cast<double>(shape[1]);
    const double cz = rng.next_uniform(0.45, 0.55) * static_cast<double>(shape[2]);
    const double rx = rng.next_uniform(0.25, 0.34) * static_cast<double>(shape[0]);
    const double ry = rng.next_uniform(0.25, 0.34) * static_cast<double>(shape[1]);
    const double rz = rng.next_uniform(0.25, 0.34) * static_cast<double>(shape[2]);
    const double shell = rng.next_uniform(1.08, 1.15);  // skull outer scale
    const double fx = rng.next_uniform(0.15, 0.45);     // tissue texture frequencies
    const double fy = rng.next_uniform(0.15, 0.45);
    const double fz = rng.next_uniform(0.15, 0.45);
    const double px = rng.next_uniform(0.0, kTwoPi);
    const double py = rng.next_uniform(0.0, kTwoPi);
    const double pz = rng.next_uniform(0.0, kTwoPi);

    SyntheticCase c;
    c.volume.data = Tensor<float>({shape[0], shape[1], shape[2]});
    c.volume.spacing = spacing;
    c.mask.data = Tensor<std::uint8_t>({shape[0], shape[1], shape[2]});
    c.mask.spacing = spacing;

    for (std::size_t i = 0; i < shape[0]; ++i)
        for (std::size_t j = 0; j < shape[1]; ++j)
            for (std::size_t k = 0; k < shape[2]; ++k) {
                const double dx = (static_cast<double>(i) - cx) / rx;
                const double dy = (static_cast<double>(j) - cy) / ry;
                const double dz = (static_cast<double>(k) - cz) / rz;
                const double e = dx * dx + dy * dy + dz * dz;
                // intensities are deliberately close together: the
                // brain/background edge must not survive arbitrary
                // monotone remaps for free, otherwise no domain shift
                // can hurt a trained model
                double val = 0.30;  // background
                if (e <= 1.0) {
                    const double t = std::sin(fx * static_cast<double>(i) + px) *
                                     std::sin(fy * static_cast<double>(j) + py) *
                                     std::sin(fz * static_cast<double>(k) + pz);
                    val = (t > 0.0 ? 0.42 : 0.55) + 0.06 * (1.0 - e);
                    c.mask.at(i, j, k) = 1;
                } else if (e <= shell * shell) {
                    val = 0.80;  // skull
                }
                c.volume.at(i, j, k) = static_cast<float>(clamp01(val));
            }
    c.volume = rescale_intensity(c.volume);
    return c;
}

SyntheticCase apply_domain(const SyntheticCase& c, const DomainParams& d) {
    d.validate();
    SyntheticCase out = c;
    out.domain_name = d.name;

    Rng rng = Rng(c.seed).split(d.seed * 0x9e3779b97f4a7c15ULL + 0xd0a1);
    const BiasField bias = BiasField::draw(rng);
    const double nx = static_cast<double>(c.volume.nx());
    const double ny = static_cast<double>(c.volume.ny());
    const double nz = static_cast<double>(c.volume.nz());

    for (std::size_t i = 0; i < c.volume.nx(); ++i)
        for (std::size_t j = 0; j < c.volume.ny(); ++j)
            for (std::size_t k = 0; k < c.volume.nz(); ++k) {
                double v = static_cast<double>(c.volume.at(i, j, k));
                v = clamp01(0.5 + (v - 0.5) * d.contrast_scale);
                v = std::pow(v, d.gamma);
                const double field =
                    1.0 + d.bias_amplitude * bias.at(static_cast<double>(i) / nx,
                                                     static_cast<double>(j) / ny,
                                                     static_cast<double>(k) / nz);
                v = v * field + d.noise_sigma * rng.next_normal();
                out.volume.at(i, j, k) = static_cast<float>(clamp01(v));
            }
    out.volume = rescale_intensity(out.volume);
    return out;
}

std::vector<DomainParams> default_domains() {
    return {
        {"A", 1.0, 0.05, 0.02, 1.0, 11},   // near-identity
        {"B", 2.2, 0.35, 0.05, 1.0, 22},   // gamma + bias shift
        {"C", 0.35, 0.45, 0.10, 2.2, 33},  // strong intensity shift
    };
}

std::string build_benchmark(const BenchmarkSpec& spec, const std::string& out_dir) {
    if (spec.domains.size() < 2)
        throw std::invalid_argument("build_benchmark: need at least 2 domains");
    for (const auto& d : spec.domains) d.validate();
    if (spec.cases_per_domain < 1)
        throw std::invalid_argument("build_benchmark: cases_per_domain must be >= 1");

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("build_benchmark: cannot create " + out_dir);

    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    auto jd = nlohmann::json::array();
    for (const auto& d : spec.domains)
        jd.push_back({{"name", d.name},
                      {"gamma", d.gamma},
                      {"bias_amplitude", d.bias_amplitude},
                      {"noise_sigma", d.noise_sigma},
                      {"contrast_scale", d.contrast_scale},
                      {"seed", d.seed}});
    manifest["domains"] = std::move(jd);

    const Rng base(spec.seed);
    auto jc = nlohmann::json::array();
    std::size_t gidx = 0;
    for (const auto& d : spec.domains) {
        const fs::path ddir = fs::path(out_dir) / d.name;
        fs::create_directories(ddir, ec);
        if (ec) throw std::runtime_error("build_benchmark: cannot create " + ddir.string());
        for (int ci = 0; ci < spec.cases_per_domain; ++ci, ++gidx) {
            Rng case_rng = base.split(gidx + 1);
            SyntheticCase raw = make_phantom(case_rng, spec.shape, spec.spacing);
            raw.seed = spec.seed ^ (0xabcd0000ULL + gidx);
            SyntheticCase shifted = apply_domain(raw, d);

            char idbuf[64];
            std::snprintf(idbuf, sizeof(idbuf), "%s_%03d", d.name.c_str(), ci);
            shifted.case_id = idbuf;

            char volname[64], maskname[64];
            std::snprintf(volname, sizeof(volname), "case_%03d.json", ci);
            std::snprintf(maskname, sizeof(maskname), "mask_%03d.json", ci);
            write_volume((ddir / volname).string(), shifted.volume);
            write_mask((ddir / maskname).string(), shifted.mask);

            jc.push_back({{"id", shifted.case_id},
                          {"domain", d.name},
                          {"volume_path", d.name + "/" + volname},
                          {"mask_path", d.name + "/" + maskname}});
        }
    }
    manifest["cases"] = std::move(jc);

    const std::string mpath = (fs::path(out_dir) / "dataset.json").string();
    std::ofstream f(mpath);
    if (!f) throw std::runtime_error("build_benchmark: cannot write " + mpath);
    f << manifest.dump(2) << "\n";
    return mpath;
}

} // namespace segda::synth
