#pragma once

#include <cstdint>
#include <vector>

#include "paraformer/tensor.hpp"

namespace paraformer {

// One image's detections: positions are (x px, y px, detection score) rows,
// descriptors are L2-normalized rows of width C.
struct KeypointSet {
    TensorPtr positions;    // [M x 3]
    TensorPtr descriptors;  // [M x C]
    int64_t image_width = 0;
    int64_t image_height = 0;

    int64_t count() const { return positions ? positions->shape[0] : 0; }
    int64_t descriptor_dim() const { return descriptors ? descriptors->shape[1] : 0; }

    // Checks bounds, score range and descriptor norms (1 +- 1e-5).
    void validate() const;

    // Positions mapped to the network's input convention:
    // ((x - w/2)/max(w,h), (y - h/2)/max(w,h), score).
    TensorPtr normalized_positions() const;
};

}  // namespace paraformer
