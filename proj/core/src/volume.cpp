#include "tgseg/volume.hpp"

#include <cmath>
#include <fstream>

#include "wire.hpp"

namespace tgseg {

namespace {
constexpr char kMagic[] = "TDSV1";  // 5 bytes, no terminator on disk
}

Volume3D Volume3D::intensity(std::array<int, 3> dims, std::array<float, 3> spacing) {
    Volume3D v;
    v.dims = dims;
    v.spacing = spacing;
    v.kind = VolumeKind::intensity;
    v.data.assign(static_cast<size_t>(v.numel()), 0.f);
    v.validate();
    return v;
}

Volume3D Volume3D::label(std::array<int, 3> dims, int num_classes, std::array<float, 3> spacing) {
    Volume3D v;
    v.dims = dims;
    v.spacing = spacing;
    v.kind = VolumeKind::label;
    v.num_classes = num_classes;
    v.data.assign(static_cast<size_t>(v.numel()), 0.f);
    v.validate();
    return v;
}

void Volume3D::validate() const {
    for (int i = 0; i < 3; ++i) {
        if (dims[i] < 1)
            throw ValidationError("volume dims must be >= 1, got " + std::to_string(dims[i]));
        if (!(spacing[i] > 0.f))
            throw ValidationError("voxel spacing must be > 0, got " + std::to_string(spacing[i]));
    }
    if (static_cast<std::int64_t>(data.size()) != numel())
        throw ValidationError("volume payload size does not match dims");
    if (kind == VolumeKind::label) {
        if (num_classes < 1) throw ValidationError("label volume needs num_classes >= 1");
        for (float v : data) {
            const float r = std::round(v);
            if (v != r || r < 0.f || r >= static_cast<float>(num_classes))
                throw ValidationError("label voxel value " + std::to_string(v) +
                                      " outside [0, " + std::to_string(num_classes - 1) + "]");
        }
    }
}

Tensor Volume3D::to_tensor() const {
    Tensor t({dims[0], dims[1], dims[2]});
    for (std::int64_t i = 0; i < numel(); ++i) t[i] = static_cast<double>(data[i]);
    return t;
}

Volume3D Volume3D::from_tensor(const Tensor& t, VolumeKind kind, int num_classes,
                               std::array<float, 3> spacing) {
    if (t.ndim() != 3) throw ShapeError("from_tensor: need 3-D tensor");
    Volume3D v;
    v.dims = {t.shape[0], t.shape[1], t.shape[2]};
    v.spacing = spacing;
    v.kind = kind;
    v.num_classes = kind == VolumeKind::label ? num_classes : 0;
    v.data.resize(static_cast<size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i) v.data[i] = static_cast<float>(t[i]);
    v.validate();
    return v;
}

void save_volume(const Volume3D& vol, const std::string& path) {
    vol.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, 5);
    for (int i = 0; i < 3; ++i) wire::put_u32(os, static_cast<std::uint32_t>(vol.dims[i]));
    for (int i = 0; i < 3; ++i) wire::put_f32(os, vol.spacing[i]);
    wire::put_u8(os, static_cast<std::uint8_t>(vol.kind));
    wire::put_u16(os, static_cast<std::uint16_t>(vol.num_classes));
    for (float v : vol.data) wire::put_f32(os, v);
    if (!os) throw IoError("write failed: " + path);
}

namespace {

Volume3D load_raw_v1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[5];
    is.read(magic, 5);
    if (!is || std::string(magic, 5) != kMagic)
        throw FormatError("bad raw_v1 magic in " + path);
    Volume3D v;
    for (int i = 0; i < 3; ++i) {
        const std::uint32_t d = wire::get_u32(is, "dims");
        if (d == 0 || d > (1u << 30)) throw ValidationError("raw_v1 dim out of range in " + path);
        v.dims[i] = static_cast<int>(d);
    }
    for (int i = 0; i < 3; ++i) {
        v.spacing[i] = wire::get_f32(is, "spacing");
        if (!(v.spacing[i] > 0.f))
            throw ValidationError("raw_v1 spacing must be > 0 in " + path);
    }
    const std::uint8_t kind = wire::get_u8(is, "kind");
    if (kind > 1) throw FormatError("raw_v1 unknown kind byte in " + path);
    v.kind = static_cast<VolumeKind>(kind);
    v.num_classes = wire::get_u16(is, "num_classes");
    v.data.resize(static_cast<size_t>(v.numel()));
    for (auto& f : v.data) f = wire::get_f32(is, "payload");
    // no trailing bytes allowed
    is.peek();
    if (!is.eof()) throw FormatError("raw_v1 trailing bytes in " + path);
    v.validate();
    return v;
}

}  // namespace

Volume3D load_volume(const std::string& path, VolumeFormat format) {
    switch (format) {
        case VolumeFormat::raw_v1:
            return load_raw_v1(path);
        case VolumeFormat::nifti:
            return load_nifti(path);
    }
    throw ValidationError("unknown volume format");
}

VolumeFormat detect_format(const std::string& path) {
    auto ends_with = [&](const std::string& suf) {
        return path.size() >= suf.size() &&
               path.compare(path.size() - suf.size(), suf.size(), suf) == 0;
    };
    if (ends_with(".nii") || ends_with(".nii.gz")) return VolumeFormat::nifti;
    return VolumeFormat::raw_v1;
}

}  // namespace tgseg
