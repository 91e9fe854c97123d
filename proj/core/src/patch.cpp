#include "tgseg/patch.hpp"

namespace tgseg {

Tensor extract_patch(const Volume3D& vol, const PatchSpec& spec) {
    for (int i = 0; i < 3; ++i) {
        if (spec.size[i] < 1) throw ValidationError("patch size must be >= 1");
        if (spec.origin[i] < 0 || spec.origin[i] + spec.size[i] > vol.dims[i])
            throw ValidationError("patch exceeds volume bounds on axis " + std::to_string(i));
    }
    Tensor t({spec.size[0], spec.size[1], spec.size[2]});
    for (int z = 0; z < spec.size[0]; ++z)
        for (int y = 0; y < spec.size[1]; ++y)
            for (int x = 0; x < spec.size[2]; ++x)
                t.at(z, y, x) =
                    vol.at(spec.origin[0] + z, spec.origin[1] + y, spec.origin[2] + x);
    return t;
}

SampledPatch sample_patch(const AnnotatedCase& c, std::array<int, 3> size, Rng& rng) {
    if (c.image.dims != c.label.dims) throw ValidationError("case image/label dims differ");
    PatchSpec spec;
    spec.size = size;
    for (int i = 0; i < 3; ++i) {
        if (size[i] > c.image.dims[i])
            throw ValidationError("patch size " + std::to_string(size[i]) +
                                  " exceeds volume dim " + std::to_string(c.image.dims[i]));
        spec.origin[i] = static_cast<int>(rng.uniform_int(0, c.image.dims[i] - size[i]));
    }
    SampledPatch p;
    p.image = extract_patch(c.image, spec);
    p.label = extract_patch(c.label, spec);
    p.spec = spec;
    return p;
}

namespace {

Tensor flip_axis(const Tensor& t, int axis) {
    Tensor o(t.shape);
    const int D = t.shape[0], H = t.shape[1], W = t.shape[2];
    for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const int zz = axis == 0 ? D - 1 - z : z;
                const int yy = axis == 1 ? H - 1 - y : y;
                const int xx = axis == 2 ? W - 1 - x : x;
                o.at(z, y, x) = t.at(zz, yy, xx);
            }
    return o;
}

// one quarter turn counterclockwise in the plane of the two axes != rot_axis:
// out[ia, ib] = in[ib, Sb_in - 1 - ia]
Tensor rot90_once(const Tensor& t, int axis) {
    const int a = axis == 0 ? 1 : 0;
    const int b = axis == 2 ? 1 : 2;
    Shape os = t.shape;
    std::swap(os[static_cast<size_t>(a)], os[static_cast<size_t>(b)]);
    Tensor o(os);
    for (int z = 0; z < os[0]; ++z)
        for (int y = 0; y < os[1]; ++y)
            for (int x = 0; x < os[2]; ++x) {
                int idx[3] = {z, y, x};
                int src[3] = {z, y, x};
                src[a] = idx[b];
                src[b] = t.shape[static_cast<size_t>(b)] - 1 - idx[a];
                o.at(z, y, x) = t.at(src[0], src[1], src[2]);
            }
    return o;
}

}  // namespace

Tensor apply_geom(const Tensor& patch, const GeomTransform& g) {
    if (patch.ndim() != 3) throw ShapeError("apply_geom: need 3-D patch");
    if (g.rot_axis < 0 || g.rot_axis > 2 || g.rot_quarters < 0 || g.rot_quarters > 3)
        throw ValidationError("apply_geom: bad rotation");
    Tensor t = patch;
    for (int a = 0; a < 3; ++a)
        if (g.flip[static_cast<size_t>(a)]) t = flip_axis(t, a);
    for (int q = 0; q < g.rot_quarters; ++q) t = rot90_once(t, g.rot_axis);
    return t;
}

Tensor apply_geom_inverse(const Tensor& patch, const GeomTransform& g) {
    if (patch.ndim() != 3) throw ShapeError("apply_geom_inverse: need 3-D patch");
    Tensor t = patch;
    const int undo = (4 - g.rot_quarters) % 4;
    for (int q = 0; q < undo; ++q) t = rot90_once(t, g.rot_axis);
    for (int a = 0; a < 3; ++a)
        if (g.flip[static_cast<size_t>(a)]) t = flip_axis(t, a);
    return t;
}

AugmentedPatch augment(const Tensor& image, const Tensor& label, const AugmentPolicy& policy,
                       Rng& rng) {
    require_same_shape(image, label, "augment");
    AugmentedPatch out;
    GeomTransform g;
    if (policy.flips)
        for (int a = 0; a < 3; ++a) g.flip[static_cast<size_t>(a)] = rng.bernoulli(policy.flip_prob);
    if (policy.rotations) {
        g.rot_axis = static_cast<int>(rng.uniform_int(0, 2));
        g.rot_quarters = static_cast<int>(rng.uniform_int(0, 3));
    }
    out.geom = g;
    out.image = apply_geom(image, g);
    out.label = apply_geom(label, g);
    out.scale = policy.intensity_scale ? rng.uniform(policy.scale_lo, policy.scale_hi) : 1.0;
    out.shift = policy.intensity_shift ? rng.uniform(policy.shift_lo, policy.shift_hi) : 0.0;
    if (out.scale != 1.0 || out.shift != 0.0)
        for (auto& v : out.image.data) v = v * out.scale + out.shift;
    return out;
}

}  // namespace tgseg
