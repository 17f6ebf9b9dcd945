#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "paraformer/keypoints.hpp"
#include "paraformer/matcher.hpp"
#include "paraformer/rng.hpp"

namespace paraformer {

// 3x3 projective transform, normalized so h33 = 1.
struct Homography {
    std::array<double, 9> h = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Homography identity() { return {}; }
    Homography inverse() const;
    Homography compose(const Homography& rhs) const;  // this after rhs
    void apply(double x, double y, double& ox, double& oy) const;
    double det() const;
    // Images of the four image corners form a convex quadrilateral.
    bool maps_quad_convex(double width, double height) const;
};

struct HomographyBounds {
    double max_rotation_deg = 25.0;
    double min_scale = 0.8;
    double max_scale = 1.2;
    double max_translation_frac = 0.1;  // of image size
    double perspective_jitter = 1e-4;   // per corner-offset parameter
};

// Rotation, scale, translation and perspective jitter sampled inside the
// bounds; degenerate draws are resampled (bounded retries).
Homography random_homography(Rng& rng, const HomographyBounds& bounds, double width, double height);

struct PairGenOptions {
    int64_t n_keypoints = 512;
    int64_t image_width = 640;
    int64_t image_height = 480;
    int64_t descriptor_dim = 256;
    float noise_sigma = 0.2f;        // descriptor noise in image Y
    float distractor_frac = 0.25f;   // extra unmatched points added to Y
    float position_jitter = 0.5f;    // detection noise on Y positions, px
    HomographyBounds homography;
};

struct PairSample {
    KeypointSet x;
    KeypointSet y;
    Homography h;  // maps X pixel coordinates to Y
    GtLabels gt;
};

// One self-supervised pair: keypoints uniform in X, latent unit descriptors,
// Y built by projecting through a random homography (out-of-frame points
// become unmatched), plus distractors and descriptor noise on the Y side.
PairSample make_pair(Rng& rng, const PairGenOptions& opts);

// Appends uniform random keypoints with random unit descriptors and score 0;
// padded indices are recorded as gt-unmatched for image X.
void pad_keypoints(KeypointSet& kp, int64_t target_count, Rng& rng, GtLabels* labels, bool is_x_image);

struct Dataset {
    PairGenOptions gen;
    uint64_t seed = 0;
    std::vector<PairSample> pairs;

    void save(const std::string& path) const;
    static Dataset load(const std::string& path);
};

Dataset generate_dataset(int64_t pairs, const PairGenOptions& opts, uint64_t seed);

// Reprojection error in pixels of (x_i, y_j) under the pair's homography.
double reprojection_error(const PairSample& sample, int64_t i, int64_t j);

}  // namespace paraformer
