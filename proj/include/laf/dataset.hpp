#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laf/preprocess.hpp"
#include "laf/synthgen.hpp"
#include "laf/tensor.hpp"

namespace laf {

// One aligned sample, stored 8-bit quantized so the in-memory pipeline and
// the PNG round trip see identical pixels.
struct AlignedSample {
    std::vector<uint8_t> pixels;  // HWC, size*size*3
    int label = 0;
    uint64_t item_seed = 0;
    LandmarkSet landmarks;               // in aligned coordinates
    std::vector<ManipRegion> regions;    // in aligned coordinates
};

struct AlignedDataset {
    int size = 256;
    std::vector<AlignedSample> items;

    Image image(size_t i) const;
    int count_label(int label) const;
    void validate() const;  // non-empty, consistent buffer sizes
};

// Crop with default margins, align to the canonical frame, quantize.
// Landmark and region metadata are mapped into aligned coordinates.
AlignedDataset preprocess_dataset(const std::vector<RawSample>& raw, const CanonicalFrame& frame);

// Aligned datasets use the same on-disk layout as raw ones:
// <root>/<family>/<split>/{real,fake}/<item_seed>.png + manifest.json.
void save_aligned(const AlignedDataset& ds, const std::string& root, Family family, Split split);
AlignedDataset load_aligned(const std::string& root, Family family, Split split);

// Pack selected items into an NCHW batch, values in [0, 1].
Tensor4 assemble_batch(const AlignedDataset& ds, const std::vector<int>& indices);

}  // namespace laf
