#pragma once

#include <map>
#include <string>
#include <vector>

#include "laf/image.hpp"
#include "laf/landmarks.hpp"

namespace laf {

enum class Family { None, LocalBlend, GridArtifact, EyeTexture, ColorShift };

const std::vector<Family>& all_families();
std::string family_name(Family f);
Family parse_family(const std::string& name);

enum class Split { Train, Val, Test };
std::string split_name(Split s);
Split parse_split(const std::string& name);

// Per-split seed offsets keep the three splits disjoint for a given base seed.
uint64_t split_seed_offset(Split s);

// A manipulation family with its scalar parameters. Unknown keys and
// out-of-range values are rejected by validate().
struct ManipulationFamily {
    Family id = Family::None;
    std::map<std::string, double> params;

    static ManipulationFamily defaults(Family id);
    void validate() const;
    double param(const std::string& key) const;
};

struct DatasetSpec {
    ManipulationFamily family;
    int n_pairs = 0;
    uint64_t seed = 0;
    Split split = Split::Train;
    int image_size = 320;

    void validate() const;
};

// Disc actually touched by a local manipulation, in source pixel coords.
struct ManipRegion {
    double cx = 0, cy = 0, radius = 0;
};

// Procedural face-like portrait. Returns the image and its landmarks.
// Same seed gives the identical image; different seeds differ visibly.
void generate_real(uint64_t seed, int size, Image& out, LandmarkSet& landmarks);

// Apply the family's manipulation to a real image. Family None is the
// identity (control). 'regions' (when non-null) receives the discs a local
// family touched; global families leave it empty.
Image apply_manipulation(const Image& real, const LandmarkSet& landmarks, const ManipulationFamily& family,
                         uint64_t seed, std::vector<ManipRegion>* regions = nullptr);

struct RawSample {
    Image image;
    LandmarkSet landmarks;
    int label = 0;  // 0 real, 1 fake
    uint64_t item_seed = 0;
    std::vector<ManipRegion> regions;
};

// Real/fake pairs in order real_0, fake_0, real_1, fake_1, ...
// Item seed for pair i is spec.seed + split_seed_offset(spec.split) + i.
std::vector<RawSample> build_dataset(const DatasetSpec& spec);

// On-disk layout: <root>/<family>/<split>/{real,fake}/<item_seed>.png plus
// a manifest.json per split directory.
void materialize_dataset(const DatasetSpec& spec, const std::string& root);
std::vector<RawSample> load_materialized(const std::string& root, Family family, Split split);

}  // namespace laf
