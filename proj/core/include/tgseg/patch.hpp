#pragma once

#include <array>

#include "tgseg/synth.hpp"
#include "tgseg/tensor.hpp"

namespace tgseg {

struct PatchSpec {
    std::array<int, 3> size{0, 0, 0};
    std::array<int, 3> origin{0, 0, 0};
};

struct SampledPatch {
    Tensor image;  // [D,H,W]
    Tensor label;  // [D,H,W], integral values
    PatchSpec spec;
};

Tensor extract_patch(const Volume3D& vol, const PatchSpec& spec);

// Origin drawn uniformly over all valid positions; image and label are cut
// from the same origin.
SampledPatch sample_patch(const AnnotatedCase& c, std::array<int, 3> size, Rng& rng);

// Axis flips followed by quarter turns about one axis. Label-safe by
// construction (pure index permutations).
struct GeomTransform {
    std::array<bool, 3> flip{false, false, false};
    int rot_axis = 2;
    int rot_quarters = 0;  // 0..3
};

Tensor apply_geom(const Tensor& patch, const GeomTransform& g);
// Exact inverse of apply_geom (undoes rotation, then flips).
Tensor apply_geom_inverse(const Tensor& patch, const GeomTransform& g);

struct AugmentPolicy {
    bool flips = true;
    bool rotations = true;
    bool intensity_scale = true;
    bool intensity_shift = true;
    double flip_prob = 0.5;
    double scale_lo = 0.9, scale_hi = 1.1;   // multiplicative, image only
    double shift_lo = -0.1, shift_hi = 0.1;  // additive, image only
};

struct AugmentedPatch {
    Tensor image;
    Tensor label;
    GeomTransform geom;
    double scale = 1.0, shift = 0.0;
};

// Same geometric transform on image and label; intensity ops image-only.
AugmentedPatch augment(const Tensor& image, const Tensor& label, const AugmentPolicy& policy,
                       Rng& rng);

}  // namespace tgseg
