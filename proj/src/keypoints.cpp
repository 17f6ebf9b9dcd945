#include "paraformer/keypoints.hpp"

#include <cmath>
#include <string>

namespace paraformer {

void KeypointSet::validate() const {
    if (!positions || !descriptors) throw ContractError("keypoint set missing tensors");
    if (positions->shape.size() != 2 || positions->shape[1] != 3)
        throw DimensionError("positions must be [M x 3], got " + positions->shape_str());
    if (descriptors->shape.size() != 2) throw DimensionError("descriptors must be 2-D");
    if (positions->shape[0] != descriptors->shape[0])
        throw DimensionError("positions/descriptors row mismatch");
    if (count() < 1) throw ContractError("keypoint set must contain at least one point");
    if (image_width < 1 || image_height < 1) throw ContractError("image size not set");

    const int64_t m = count();
    const int64_t c = descriptor_dim();
    for (int64_t i = 0; i < m; ++i) {
        const float x = positions->at(i, 0), y = positions->at(i, 1), s = positions->at(i, 2);
        if (!(x >= 0.0f && x < static_cast<float>(image_width)))
            throw ContractError("keypoint " + std::to_string(i) + " x out of frame");
        if (!(y >= 0.0f && y < static_cast<float>(image_height)))
            throw ContractError("keypoint " + std::to_string(i) + " y out of frame");
        if (!(s >= 0.0f && s <= 1.0f)) throw ContractError("keypoint " + std::to_string(i) + " score out of [0,1]");
        double norm = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            const double v = descriptors->at(i, j);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (std::abs(norm - 1.0) > 1e-5)
            throw ContractError("descriptor " + std::to_string(i) + " not unit norm (" + std::to_string(norm) + ")");
    }
}

TensorPtr KeypointSet::normalized_positions() const {
    const int64_t m = count();
    const float w = static_cast<float>(image_width);
    const float h = static_cast<float>(image_height);
    const float s = std::max(w, h);
    auto out = Tensor::zeros(m, 3);
    for (int64_t i = 0; i < m; ++i) {
        out->at(i, 0) = (positions->at(i, 0) - 0.5f * w) / s;
        out->at(i, 1) = (positions->at(i, 1) - 0.5f * h) / s;
        out->at(i, 2) = positions->at(i, 2);
    }
    return out;
}

}  // namespace paraformer
