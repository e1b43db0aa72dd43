#include "segda/nifti.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include <zlib.h>

namespace segda::nifti {

namespace {

// the NIfTI-1 header fields this reader needs, at their fixed offsets
struct Header {
    std::int32_t sizeof_hdr;   // 0
    std::int16_t dim[8];       // 40
    std::int16_t datatype;     // 70
    float pixdim[8];           // 76
    float vox_offset;          // 108
    float scl_slope;           // 112
    float scl_inter;           // 116
    char magic[4];             // 344
};

template <typename T>
T swap_bytes(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
}

std::vector<unsigned char> read_all(const std::string& path) {
    // gzread handles both gzip-compressed and plain files
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("nifti: cannot open " + path);
    std::vector<unsigned char> out;
    unsigned char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
    const bool bad = n < 0;
    gzclose(f);
    if (bad) throw std::runtime_error("nifti: decompression error in " + path);
    return out;
}

template <typename S>
void convert(const unsigned char* p, std::size_t n, bool swap, double slope, double inter,
             float* out) {
    for (std::size_t i = 0; i < n; ++i) {
        S v;
        std::memcpy(&v, p + i * sizeof(S), sizeof(S));
        if (swap) v = swap_bytes(v);
        out[i] = static_cast<float>(static_cast<double>(v) * slope + inter);
    }
}

Volume read_impl(const std::string& path) {
    const std::vector<unsigned char> bytes = read_all(path);
    if (bytes.size() < 352) throw std::runtime_error("nifti: truncated header in " + path);

    Header h{};
    std::memcpy(&h.sizeof_hdr, bytes.data() + 0, 4);
    std::memcpy(h.dim, bytes.data() + 40, 16);
    std::memcpy(&h.datatype, bytes.data() + 70, 2);
    std::memcpy(h.pixdim, bytes.data() + 76, 32);
    std::memcpy(&h.vox_offset, bytes.data() + 108, 4);
    std::memcpy(&h.scl_slope, bytes.data() + 112, 4);
    std::memcpy(&h.scl_inter, bytes.data() + 116, 4);
    std::memcpy(h.magic, bytes.data() + 344, 4);

    bool swap = false;
    if (h.sizeof_hdr != 348) {
        if (swap_bytes(h.sizeof_hdr) != 348)
            throw std::runtime_error("nifti: not a NIfTI-1 file: " + path);
        swap = true;
        for (auto& d : h.dim) d = swap_bytes(d);
        h.datatype = swap_bytes(h.datatype);
        for (auto& p : h.pixdim) p = swap_bytes(p);
        h.vox_offset = swap_bytes(h.vox_offset);
        h.scl_slope = swap_bytes(h.scl_slope);
        h.scl_inter = swap_bytes(h.scl_inter);
    }
    if (std::memcmp(h.magic, "n+1", 3) != 0 && std::memcmp(h.magic, "ni1", 3) != 0)
        throw std::runtime_error("nifti: bad magic in " + path);
    if (std::memcmp(h.magic, "ni1", 3) == 0)
        throw std::runtime_error("nifti: detached .hdr/.img pairs are not supported: " + path);

    int ndim = h.dim[0];
    for (int d = 3; d < ndim; ++d)
        if (h.dim[1 + d] > 1)
            throw std::runtime_error("nifti: only single-frame 3D volumes are supported: " +
                                     path);
    if (ndim < 3 || h.dim[1] < 1 || h.dim[2] < 1 || h.dim[3] < 1)
        throw std::runtime_error("nifti: need a 3D volume: " + path);

    const std::size_t nx = static_cast<std::size_t>(h.dim[1]);
    const std::size_t ny = static_cast<std::size_t>(h.dim[2]);
    const std::size_t nz = static_cast<std::size_t>(h.dim[3]);
    const std::size_t n = nx * ny * nz;
    const double slope = (h.scl_slope == 0.0f || !std::isfinite(h.scl_slope))
                             ? 1.0
                             : static_cast<double>(h.scl_slope);
    const double inter = std::isfinite(h.scl_inter) ? static_cast<double>(h.scl_inter) : 0.0;

    std::size_t elem;
    switch (h.datatype) {
        case 2: elem = 1; break;    // uint8
        case 4: elem = 2; break;    // int16
        case 8: elem = 4; break;    // int32
        case 16: elem = 4; break;   // float32
        case 64: elem = 8; break;   // float64
        case 512: elem = 2; break;  // uint16
        default:
            throw std::runtime_error("nifti: unsupported datatype " +
                                     std::to_string(h.datatype) + " in " + path);
    }
    const auto offset = static_cast<std::size_t>(h.vox_offset);
    if (bytes.size() < offset + n * elem)
        throw std::runtime_error("nifti: truncated payload in " + path);
    const unsigned char* p = bytes.data() + offset;

    Volume v;
    v.spacing = {h.pixdim[1] > 0 ? h.pixdim[1] : 1.0, h.pixdim[2] > 0 ? h.pixdim[2] : 1.0,
                 h.pixdim[3] > 0 ? h.pixdim[3] : 1.0};
    v.data = Tensor<float>({nx, ny, nz});
    // NIfTI stores x fastest; the native tensor stores z fastest, so
    // convert then transpose
    std::vector<float> flat(n);
    switch (h.datatype) {
        case 2: convert<std::uint8_t>(p, n, swap, slope, inter, flat.data()); break;
        case 4: convert<std::int16_t>(p, n, swap, slope, inter, flat.data()); break;
        case 8: convert<std::int32_t>(p, n, swap, slope, inter, flat.data()); break;
        case 16: convert<float>(p, n, swap, slope, inter, flat.data()); break;
        case 64: convert<double>(p, n, swap, slope, inter, flat.data()); break;
        case 512: convert<std::uint16_t>(p, n, swap, slope, inter, flat.data()); break;
    }
    for (std::size_t k = 0; k < nz; ++k)
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i)
                v.at(i, j, k) = flat[(k * ny + j) * nx + i];
    return v;
}

} // namespace

Volume read_nifti_volume(const std::string& path) { return read_impl(path); }

Mask read_nifti_mask(const std::string& path) {
    const Volume v = read_impl(path);
    Mask m;
    m.spacing = v.spacing;
    m.data = Tensor<std::uint8_t>(v.data.shape());
    for (std::size_t i = 0; i < v.data.numel(); ++i)
        m.data[i] = v.data[i] != 0.0f ? 1 : 0;
    return m;
}

} // namespace segda::nifti
