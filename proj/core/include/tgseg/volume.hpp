#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tgseg/errors.hpp"
#include "tgseg/tensor.hpp"

namespace tgseg {

enum class VolumeKind : std::uint8_t { intensity = 0, label = 1 };

enum class VolumeFormat { raw_v1, nifti };

// Dense scalar field over a D x H x W grid, z-major storage (D outermost).
// Intensity volumes carry arbitrary floats; label volumes carry integer
// class ids in [0, num_classes).
struct Volume3D {
    std::array<int, 3> dims{0, 0, 0};           // D, H, W
    std::array<float, 3> spacing{1.f, 1.f, 1.f};  // mm per voxel along D, H, W
    VolumeKind kind = VolumeKind::intensity;
    int num_classes = 0;  // label volumes only
    std::vector<float> data;

    static Volume3D intensity(std::array<int, 3> dims, std::array<float, 3> spacing = {1, 1, 1});
    static Volume3D label(std::array<int, 3> dims, int num_classes,
                          std::array<float, 3> spacing = {1, 1, 1});

    std::int64_t numel() const {
        return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
    }
    float& at(int z, int y, int x) {
        return data[(static_cast<std::int64_t>(z) * dims[1] + y) * dims[2] + x];
    }
    float at(int z, int y, int x) const {
        return data[(static_cast<std::int64_t>(z) * dims[1] + y) * dims[2] + x];
    }

    // Enforces the type invariants; throws ValidationError.
    void validate() const;

    Tensor to_tensor() const;  // [D,H,W] doubles
    static Volume3D from_tensor(const Tensor& t, VolumeKind kind, int num_classes,
                                std::array<float, 3> spacing);
};

// raw_v1: "TDSV1" magic, dims 3x u32, spacing 3x f32, kind u8, num_classes
// u16, float32 payload z-major. Everything little-endian; save/load is a
// bit-exact round trip.
void save_volume(const Volume3D& vol, const std::string& path);
Volume3D load_volume(const std::string& path, VolumeFormat format);

// Picks raw_v1 for .tdsv, nifti for .nii/.nii.gz.
VolumeFormat detect_format(const std::string& path);

// True when the build carries the optional NIfTI read path.
bool nifti_supported();
// Read-only NIfTI loader; throws FormatError("...unavailable...") when the
// capability is compiled out.
Volume3D load_nifti(const std::string& path, VolumeKind kind = VolumeKind::intensity,
                    int num_classes = 0);

}  // namespace tgseg
