#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tgseg/rng.hpp"
#include "tgseg/text.hpp"
#include "tgseg/volume.hpp"

namespace tgseg {

struct AnnotatedCase {
    Volume3D image;  // intensity
    Volume3D label;  // classes {0 background, 1 target}
    TextPrompt prompt;
    std::string case_id;
};

enum class ShapeKind { sphere, cuboid, ellipsoid };

// One geometric object of the scene. Extents are half-extents in voxels
// (sphere: radius), drawn uniformly from [min_extent, max_extent]; centers
// land on integer voxel coordinates. A voxel belongs to the object iff its
// center lies inside the continuous shape (boundary inclusive).
struct ObjectSpec {
    ShapeKind kind = ShapeKind::sphere;
    double min_extent = 3.0;
    double max_extent = 5.0;
    std::optional<std::array<int, 3>> center;  // fixed center, else drawn
};

struct SceneSpec {
    std::array<int, 3> dims{32, 32, 32};
    std::array<float, 3> spacing{1.f, 1.f, 1.f};
    std::vector<ObjectSpec> objects;  // 1..3
    int target_index = -1;            // -1: drawn uniformly per case
    double background_level = 0.2;
    double object_level_lo = 0.7;  // all objects share this intensity range
    double object_level_hi = 0.9;
    double noise_sigma = 0.05;
    bool location_in_prompt = false;
    int margin = 1;  // min distance between an object and the volume border
};

// Deterministic function of (seed, spec): same seed, same case. The label
// marks exactly the target object's voxels; with several objects of
// different shapes the prompt is the only input naming the target.
AnnotatedCase synth_case(std::uint64_t seed, const SceneSpec& spec,
                         const std::string& case_id = "");

// Prompt text for a target shape (and optional coarse location), built from
// the builtin vocabulary.
std::string prompt_for(ShapeKind kind, const std::array<int, 3>* center = nullptr,
                       const std::array<int, 3>* dims = nullptr);

// Two-object scene (sphere + cuboid, shared intensity range) where the
// prompt disambiguates the target; the workhorse for conditioning studies.
SceneSpec two_object_scene(std::array<int, 3> dims = {32, 32, 32});
SceneSpec single_sphere_scene(std::array<int, 3> dims = {32, 32, 32});

}  // namespace tgseg
