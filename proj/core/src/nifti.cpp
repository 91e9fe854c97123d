#include <cmath>
#include <cstring>
#include <vector>

#include "tgseg/volume.hpp"

#ifdef TGSEG_WITH_NIFTI
#include <zlib.h>
#endif

// Minimal NIfTI-1 reader (single-file .nii / .nii.gz, native byte order).
// Enough for the common medical segmentation datasets; anything else fails
// loudly with a FormatError.

namespace tgseg {

bool nifti_supported() {
#ifdef TGSEG_WITH_NIFTI
    return true;
#else
    return false;
#endif
}

#ifdef TGSEG_WITH_NIFTI

namespace {

template <typename T>
T read_le(const unsigned char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

std::vector<unsigned char> gz_read_all(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open: " + path);
    std::vector<unsigned char> out;
    unsigned char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
    const bool ok = n == 0;
    gzclose(f);
    if (!ok) throw FormatError("decompression failed: " + path);
    return out;
}

}  // namespace

Volume3D load_nifti(const std::string& path, VolumeKind kind, int num_classes) {
    const std::vector<unsigned char> raw = gz_read_all(path);
    if (raw.size() < 352) throw FormatError("NIfTI file too small: " + path);
    const unsigned char* h = raw.data();

    const std::int32_t sizeof_hdr = read_le<std::int32_t>(h + 0);
    if (sizeof_hdr != 348) {
        // 1543569408 is 348 byte-swapped
        if (sizeof_hdr == 1543569408)
            throw FormatError("byte-swapped NIfTI not supported: " + path);
        throw FormatError("not a NIfTI-1 file: " + path);
    }
    if (std::memcmp(h + 344, "n+1\0", 4) != 0)
        throw FormatError("only single-file NIfTI (magic n+1) supported: " + path);

    const std::int16_t ndim = read_le<std::int16_t>(h + 40);
    if (ndim < 3) throw FormatError("NIfTI with fewer than 3 dims: " + path);
    int nx = read_le<std::int16_t>(h + 42);
    int ny = read_le<std::int16_t>(h + 44);
    int nz = read_le<std::int16_t>(h + 46);
    for (int d = 4; d <= ndim && d <= 7; ++d) {
        const std::int16_t extra = read_le<std::int16_t>(h + 40 + 2 * d);
        if (extra > 1)
            throw FormatError("NIfTI with a non-trivial dim beyond 3 not supported: " + path);
    }
    if (nx < 1 || ny < 1 || nz < 1) throw ValidationError("NIfTI dims must be >= 1: " + path);

    const std::int16_t datatype = read_le<std::int16_t>(h + 70);
    const float sx = read_le<float>(h + 80);  // pixdim[1..3]
    const float sy = read_le<float>(h + 84);
    const float sz = read_le<float>(h + 88);
    if (!(sx > 0.f) || !(sy > 0.f) || !(sz > 0.f))
        throw ValidationError("NIfTI pixdim must be > 0: " + path);
    const float vox_offset = read_le<float>(h + 108);
    float scl_slope = read_le<float>(h + 112);
    const float scl_inter = read_le<float>(h + 116);
    if (scl_slope == 0.f) scl_slope = 1.f;

    const std::int64_t n = static_cast<std::int64_t>(nx) * ny * nz;
    const size_t off = static_cast<size_t>(vox_offset);
    if (off < 352 || off > raw.size()) throw FormatError("NIfTI bad vox_offset: " + path);

    Volume3D v;
    v.dims = {nz, ny, nx};           // our storage is z-major, matching x-fastest payload
    v.spacing = {sz, sy, sx};
    v.kind = kind;
    v.num_classes = kind == VolumeKind::label ? num_classes : 0;
    v.data.resize(static_cast<size_t>(n));

    auto fill = [&](auto tag, size_t bytes) {
        using T = decltype(tag);
        if (off + bytes * static_cast<size_t>(n) > raw.size())
            throw FormatError("NIfTI payload truncated: " + path);
        const unsigned char* p = raw.data() + off;
        for (std::int64_t i = 0; i < n; ++i)
            v.data[static_cast<size_t>(i)] =
                scl_slope * static_cast<float>(read_le<T>(p + bytes * i)) + scl_inter;
    };
    switch (datatype) {
        case 2: fill(std::uint8_t{}, 1); break;
        case 4: fill(std::int16_t{}, 2); break;
        case 8: fill(std::int32_t{}, 4); break;
        case 16: fill(float{}, 4); break;
        case 64: fill(double{}, 8); break;
        case 256: fill(std::int8_t{}, 1); break;
        case 512: fill(std::uint16_t{}, 2); break;
        default:
            throw FormatError("NIfTI datatype " + std::to_string(datatype) + " not supported: " +
                              path);
    }
    if (kind == VolumeKind::label)
        for (auto& f : v.data) f = std::round(f);
    v.validate();
    return v;
}

#else

Volume3D load_nifti(const std::string&, VolumeKind, int) {
    throw FormatError("NIfTI format unavailable: core built without zlib support");
}

#endif

}  // namespace tgseg
