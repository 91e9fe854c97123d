#include "tgseg/synth.hpp"

#include <algorithm>
#include <cmath>

namespace tgseg {

namespace {

struct PlacedObject {
    ShapeKind kind;
    std::array<int, 3> center;
    std::array<double, 3> half;  // per-axis half extents (sphere: all equal)

    bool contains(int z, int y, int x) const {
        const double dz = z - center[0], dy = y - center[1], dx = x - center[2];
        switch (kind) {
            case ShapeKind::sphere:
                return dz * dz + dy * dy + dx * dx <= half[0] * half[0];
            case ShapeKind::cuboid:
                return std::abs(dz) <= half[0] && std::abs(dy) <= half[1] &&
                       std::abs(dx) <= half[2];
            case ShapeKind::ellipsoid: {
                const double a = dz / half[0], b = dy / half[1], c = dx / half[2];
                return a * a + b * b + c * c <= 1.0;
            }
        }
        return false;
    }
};

bool overlaps(const PlacedObject& a, const PlacedObject& b) {
    // conservative bounding-sphere test with a one-voxel gap
    const double ra = *std::max_element(a.half.begin(), a.half.end());
    const double rb = *std::max_element(b.half.begin(), b.half.end());
    double d2 = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double d = a.center[i] - b.center[i];
        d2 += d * d;
    }
    const double lim = ra + rb + 1.0;
    return d2 < lim * lim;
}

const char* shape_adjective(ShapeKind k) {
    switch (k) {
        case ShapeKind::sphere: return "spherical";
        case ShapeKind::cuboid: return "rectangular";
        case ShapeKind::ellipsoid: return "elongated";
    }
    return "round";
}

}  // namespace

std::string prompt_for(ShapeKind kind, const std::array<int, 3>* center,
                       const std::array<int, 3>* dims) {
    std::string p = std::string("segment the ") + shape_adjective(kind) + " lesion";
    if (center && dims) {
        auto third = [](int v, int n, const char* lo, const char* mid, const char* hi) {
            if (3 * v < n) return lo;
            if (3 * v < 2 * n) return mid;
            return hi;
        };
        const char* vert = third((*center)[1], (*dims)[1], "upper", "central", "lower");
        const char* horiz = third((*center)[2], (*dims)[2], "left", "central", "right");
        p += std::string(" in the ") + vert + " " + horiz + " region";
    }
    return p;
}

AnnotatedCase synth_case(std::uint64_t seed, const SceneSpec& spec, const std::string& case_id) {
    if (spec.objects.empty() || spec.objects.size() > 3)
        throw SpecError("scene must contain 1..3 objects");
    for (int i = 0; i < 3; ++i)
        if (spec.dims[i] < 1) throw SpecError("scene dims must be >= 1");

    Rng rng(seed);
    std::vector<PlacedObject> placed;

    for (const auto& obj : spec.objects) {
        if (obj.min_extent <= 0 || obj.max_extent < obj.min_extent)
            throw SpecError("object extent range invalid");
        PlacedObject po;
        po.kind = obj.kind;
        bool ok = false;
        for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
            for (int i = 0; i < 3; ++i)
                po.half[i] = rng.uniform(obj.min_extent, obj.max_extent);
            if (obj.kind == ShapeKind::sphere) po.half = {po.half[0], po.half[0], po.half[0]};
            if (obj.kind == ShapeKind::ellipsoid) {
                // keep ellipsoids visibly anisotropic
                po.half[0] = std::max(po.half[0], 1.0);
                po.half[1] = std::max(po.half[1] * 0.7, 1.0);
                po.half[2] = std::max(po.half[2] * 1.3, 1.0);
            }
            bool fits = true;
            for (int i = 0; i < 3; ++i) {
                const int r = static_cast<int>(std::ceil(po.half[i]));
                const int lo = spec.margin + r;
                const int hi = spec.dims[i] - 1 - spec.margin - r;
                if (hi < lo) {
                    fits = false;
                    break;
                }
                po.center[i] = obj.center ? (*obj.center)[i]
                                          : static_cast<int>(rng.uniform_int(lo, hi));
            }
            if (!fits) {
                // a fixed draw cannot be retried into fitting if extents are fixed
                if (obj.min_extent == obj.max_extent)
                    throw SpecError("object does not fit in the volume");
                continue;
            }
            ok = true;
            for (const auto& other : placed)
                if (overlaps(po, other)) {
                    ok = false;
                    break;
                }
        }
        if (!ok) throw SpecError("could not place objects without overlap; scene too crowded");
        placed.push_back(po);
    }

    int target = spec.target_index;
    if (target < 0) target = static_cast<int>(rng.uniform_int(0, placed.size() - 1));
    if (target >= static_cast<int>(placed.size()))
        throw SpecError("target_index out of range");

    Volume3D image = Volume3D::intensity(spec.dims, spec.spacing);
    Volume3D label = Volume3D::label(spec.dims, 2, spec.spacing);

    std::vector<double> levels;
    for (size_t i = 0; i < placed.size(); ++i)
        levels.push_back(rng.uniform(spec.object_level_lo, spec.object_level_hi));

    for (int z = 0; z < spec.dims[0]; ++z)
        for (int y = 0; y < spec.dims[1]; ++y)
            for (int x = 0; x < spec.dims[2]; ++x) {
                double v = spec.background_level;
                for (size_t i = 0; i < placed.size(); ++i) {
                    if (placed[i].contains(z, y, x)) {
                        v = levels[i];
                        if (static_cast<int>(i) == target) label.at(z, y, x) = 1.f;
                        break;
                    }
                }
                image.at(z, y, x) =
                    static_cast<float>(v + spec.noise_sigma * rng.normal());
            }

    AnnotatedCase c;
    c.image = std::move(image);
    c.label = std::move(label);
    c.prompt.text = spec.location_in_prompt
                        ? prompt_for(placed[static_cast<size_t>(target)].kind,
                                     &placed[static_cast<size_t>(target)].center, &spec.dims)
                        : prompt_for(placed[static_cast<size_t>(target)].kind);
    c.case_id = case_id.empty() ? "seed" + std::to_string(seed) : case_id;
    return c;
}

SceneSpec two_object_scene(std::array<int, 3> dims) {
    SceneSpec s;
    s.dims = dims;
    ObjectSpec sphere;
    sphere.kind = ShapeKind::sphere;
    sphere.min_extent = 3.0;
    sphere.max_extent = 5.0;
    ObjectSpec cuboid;
    cuboid.kind = ShapeKind::cuboid;
    cuboid.min_extent = 2.5;
    cuboid.max_extent = 4.5;
    s.objects = {sphere, cuboid};
    s.target_index = -1;
    return s;
}

SceneSpec single_sphere_scene(std::array<int, 3> dims) {
    SceneSpec s;
    s.dims = dims;
    ObjectSpec sphere;
    sphere.kind = ShapeKind::sphere;
    sphere.min_extent = 3.0;
    sphere.max_extent = 6.0;
    s.objects = {sphere};
    s.target_index = 0;
    return s;
}

}  // namespace tgseg
