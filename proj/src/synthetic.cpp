#include "paraformer/synthetic.hpp"

#include <cmath>

#include "paraformer/serialize.hpp"

namespace paraformer {

Homography Homography::inverse() const {
    const auto& a = h;
    const double d = det();
    if (std::abs(d) < 1e-9) throw NumericError("homography not invertible");
    std::array<double, 9> inv = {
        (a[4] * a[8] - a[5] * a[7]), (a[2] * a[7] - a[1] * a[8]), (a[1] * a[5] - a[2] * a[4]),
        (a[5] * a[6] - a[3] * a[8]), (a[0] * a[8] - a[2] * a[6]), (a[2] * a[3] - a[0] * a[5]),
        (a[3] * a[7] - a[4] * a[6]), (a[1] * a[6] - a[0] * a[7]), (a[0] * a[4] - a[1] * a[3])};
    Homography out;
    const double norm = inv[8] / d;
    if (std::abs(norm) < 1e-12) throw NumericError("homography inverse cannot be normalized");
    for (int i = 0; i < 9; ++i) out.h[static_cast<size_t>(i)] = inv[static_cast<size_t>(i)] / d / norm;
    return out;
}

Homography Homography::compose(const Homography& rhs) const {
    Homography out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += h[static_cast<size_t>(i * 3 + k)] * rhs.h[static_cast<size_t>(k * 3 + j)];
            out.h[static_cast<size_t>(i * 3 + j)] = s;
        }
    const double w = out.h[8];
    if (std::abs(w) < 1e-12) throw NumericError("degenerate homography composition");
    for (auto& v : out.h) v /= w;
    return out;
}

void Homography::apply(double x, double y, double& ox, double& oy) const {
    const double w = h[6] * x + h[7] * y + h[8];
    if (std::abs(w) < 1e-12) throw NumericError("point maps to infinity");
    ox = (h[0] * x + h[1] * y + h[2]) / w;
    oy = (h[3] * x + h[4] * y + h[5]) / w;
}

double Homography::det() const {
    return h[0] * (h[4] * h[8] - h[5] * h[7]) - h[1] * (h[3] * h[8] - h[5] * h[6]) + h[2] * (h[3] * h[7] - h[4] * h[6]);
}

bool Homography::maps_quad_convex(double width, double height) const {
    double qx[4], qy[4];
    const double cx[4] = {0, width, width, 0};
    const double cy[4] = {0, 0, height, height};
    for (int i = 0; i < 4; ++i) apply(cx[i], cy[i], qx[i], qy[i]);
    // all cross products of consecutive edges must share a sign
    double sign = 0.0;
    for (int i = 0; i < 4; ++i) {
        const int j = (i + 1) % 4, k = (i + 2) % 4;
        const double cross = (qx[j] - qx[i]) * (qy[k] - qy[j]) - (qy[j] - qy[i]) * (qx[k] - qx[j]);
        if (std::abs(cross) < 1e-9) return false;
        if (sign == 0.0) {
            sign = cross;
        } else if (sign * cross < 0.0) {
            return false;
        }
    }
    return true;
}

Homography random_homography(Rng& rng, const HomographyBounds& bounds, double width, double height) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        const double angle = rng.uniform(-bounds.max_rotation_deg, bounds.max_rotation_deg) * M_PI / 180.0;
        const double s = rng.uniform(bounds.min_scale, bounds.max_scale);
        const double tx = rng.uniform(-bounds.max_translation_frac, bounds.max_translation_frac) * width;
        const double ty = rng.uniform(-bounds.max_translation_frac, bounds.max_translation_frac) * height;
        const double cx = width / 2.0, cy = height / 2.0;

        // rotate+scale about the image center, then translate
        Homography center;
        center.h = {1, 0, -cx, 0, 1, -cy, 0, 0, 1};
        Homography rs;
        rs.h = {s * std::cos(angle), -s * std::sin(angle), 0, s * std::sin(angle), s * std::cos(angle), 0, 0, 0, 1};
        Homography back;
        back.h = {1, 0, cx + tx, 0, 1, cy + ty, 0, 0, 1};
        Homography persp;
        persp.h = {1, 0, 0, 0, 1, 0, rng.uniform(-bounds.perspective_jitter, bounds.perspective_jitter),
                   rng.uniform(-bounds.perspective_jitter, bounds.perspective_jitter), 1};

        Homography h = back.compose(rs).compose(center).compose(persp);
        if (std::abs(h.det()) > 1e-6 && h.maps_quad_convex(width, height)) return h;
    }
    throw NumericError("could not sample a usable homography in 64 attempts");
}

namespace {

void normalize_row(Tensor& t, int64_t row) {
    const int64_t c = t.cols();
    double norm = 0.0;
    for (int64_t j = 0; j < c; ++j) norm += static_cast<double>(t.at(row, j)) * t.at(row, j);
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw NumericError("zero descriptor");
    for (int64_t j = 0; j < c; ++j) t.at(row, j) = static_cast<float>(t.at(row, j) / norm);
}

}  // namespace

PairSample make_pair(Rng& rng, const PairGenOptions& opts) {
    if (opts.n_keypoints < 4) throw ContractError("make_pair: need at least 4 keypoints");
    const double w = static_cast<double>(opts.image_width);
    const double h = static_cast<double>(opts.image_height);
    const int64_t m = opts.n_keypoints;
    const int64_t c = opts.descriptor_dim;

    for (int attempt = 0; attempt < 64; ++attempt) {
        PairSample s;
        s.h = random_homography(rng, opts.homography, w, h);

        s.x.image_width = opts.image_width;
        s.x.image_height = opts.image_height;
        s.x.positions = Tensor::zeros(m, 3);
        s.x.descriptors = Tensor::zeros(m, c);
        // latent unit descriptors, kept noise-free on the X side
        for (int64_t i = 0; i < m; ++i) {
            s.x.positions->at(i, 0) = static_cast<float>(rng.uniform(0.0, w - 1e-3));
            s.x.positions->at(i, 1) = static_cast<float>(rng.uniform(0.0, h - 1e-3));
            s.x.positions->at(i, 2) = static_cast<float>(rng.uniform(0.0, 1.0));
            for (int64_t j = 0; j < c; ++j) s.x.descriptors->at(i, j) = static_cast<float>(rng.normal());
            normalize_row(*s.x.descriptors, i);
        }

        // project to Y; survivors become gt matches, the rest unmatched
        std::vector<std::array<float, 3>> y_pos;
        std::vector<int64_t> y_src;
        for (int64_t i = 0; i < m; ++i) {
            double px, py;
            s.h.apply(s.x.positions->at(i, 0), s.x.positions->at(i, 1), px, py);
            if (opts.position_jitter > 0.0f) {
                // uniform in a disk, capped so gt reprojection stays well under tolerance
                const double r = opts.position_jitter * std::sqrt(rng.uniform());
                const double a = rng.uniform(0.0, 2.0 * M_PI);
                px += r * std::cos(a);
                py += r * std::sin(a);
            }
            if (px < 0.0 || px >= w || py < 0.0 || py >= h) {
                s.gt.unmatched_x.push_back(i);
                continue;
            }
            s.gt.matches.emplace_back(i, static_cast<int64_t>(y_pos.size()));
            y_pos.push_back({static_cast<float>(px), static_cast<float>(py), s.x.positions->at(i, 2)});
            y_src.push_back(i);
        }
        if (static_cast<int64_t>(s.gt.matches.size()) < 4) continue;  // resample

        const int64_t n_distractors = static_cast<int64_t>(std::llround(opts.distractor_frac * static_cast<double>(m)));
        const int64_t n = static_cast<int64_t>(y_pos.size()) + n_distractors;
        s.y.image_width = opts.image_width;
        s.y.image_height = opts.image_height;
        s.y.positions = Tensor::zeros(n, 3);
        s.y.descriptors = Tensor::zeros(n, c);
        for (size_t r = 0; r < y_pos.size(); ++r) {
            for (int k = 0; k < 3; ++k) s.y.positions->at(static_cast<int64_t>(r), k) = y_pos[r][static_cast<size_t>(k)];
            for (int64_t j = 0; j < c; ++j)
                s.y.descriptors->at(static_cast<int64_t>(r), j) =
                    s.x.descriptors->at(y_src[r], j) + static_cast<float>(opts.noise_sigma * rng.normal());
            normalize_row(*s.y.descriptors, static_cast<int64_t>(r));
        }
        for (int64_t r = static_cast<int64_t>(y_pos.size()); r < n; ++r) {
            s.y.positions->at(r, 0) = static_cast<float>(rng.uniform(0.0, w - 1e-3));
            s.y.positions->at(r, 1) = static_cast<float>(rng.uniform(0.0, h - 1e-3));
            s.y.positions->at(r, 2) = static_cast<float>(rng.uniform(0.0, 1.0));
            for (int64_t j = 0; j < c; ++j) s.y.descriptors->at(r, j) = static_cast<float>(rng.normal());
            normalize_row(*s.y.descriptors, r);
            s.gt.unmatched_y.push_back(r);
        }
        return s;
    }
    throw NumericError("could not generate a pair with at least 4 correspondences");
}

void pad_keypoints(KeypointSet& kp, int64_t target_count, Rng& rng, GtLabels* labels, bool is_x_image) {
    const int64_t m = kp.count();
    if (target_count < m) throw ContractError("pad_keypoints: target below current count");
    if (target_count == m) return;
    const int64_t c = kp.descriptor_dim();
    auto pos = Tensor::zeros(target_count, 3);
    auto desc = Tensor::zeros(target_count, c);
    std::copy(kp.positions->data.begin(), kp.positions->data.end(), pos->data.begin());
    std::copy(kp.descriptors->data.begin(), kp.descriptors->data.end(), desc->data.begin());
    for (int64_t i = m; i < target_count; ++i) {
        pos->at(i, 0) = static_cast<float>(rng.uniform(0.0, static_cast<double>(kp.image_width) - 1e-3));
        pos->at(i, 1) = static_cast<float>(rng.uniform(0.0, static_cast<double>(kp.image_height) - 1e-3));
        pos->at(i, 2) = 0.0f;
        for (int64_t j = 0; j < c; ++j) desc->at(i, j) = static_cast<float>(rng.normal());
        normalize_row(*desc, i);
        if (labels != nullptr) {
            if (is_x_image) {
                labels->unmatched_x.push_back(i);
            } else {
                labels->unmatched_y.push_back(i);
            }
        }
    }
    kp.positions = pos;
    kp.descriptors = desc;
}

Dataset generate_dataset(int64_t pairs, const PairGenOptions& opts, uint64_t seed) {
    if (pairs < 1) throw ContractError("generate_dataset: need at least one pair");
    Dataset ds;
    ds.gen = opts;
    ds.seed = seed;
    Rng root(seed);
    for (int64_t p = 0; p < pairs; ++p) {
        Rng pair_rng = root.fork(static_cast<uint64_t>(p));
        ds.pairs.push_back(make_pair(pair_rng, opts));
    }
    return ds;
}

double reprojection_error(const PairSample& sample, int64_t i, int64_t j) {
    double px, py;
    sample.h.apply(sample.x.positions->at(i, 0), sample.x.positions->at(i, 1), px, py);
    const double dx = px - sample.y.positions->at(j, 0);
    const double dy = py - sample.y.positions->at(j, 1);
    return std::sqrt(dx * dx + dy * dy);
}

namespace {
constexpr const char* kDatasetMagic = "PFDS";

nlohmann::json gen_to_json(const PairGenOptions& g) {
    return {{"n_keypoints", g.n_keypoints},
            {"image_width", g.image_width},
            {"image_height", g.image_height},
            {"descriptor_dim", g.descriptor_dim},
            {"noise_sigma", g.noise_sigma},
            {"distractor_frac", g.distractor_frac},
            {"position_jitter", g.position_jitter},
            {"max_rotation_deg", g.homography.max_rotation_deg},
            {"min_scale", g.homography.min_scale},
            {"max_scale", g.homography.max_scale},
            {"max_translation_frac", g.homography.max_translation_frac},
            {"perspective_jitter", g.homography.perspective_jitter}};
}

PairGenOptions gen_from_json(const nlohmann::json& j) {
    PairGenOptions g;
    g.n_keypoints = j.at("n_keypoints").get<int64_t>();
    g.image_width = j.at("image_width").get<int64_t>();
    g.image_height = j.at("image_height").get<int64_t>();
    g.descriptor_dim = j.at("descriptor_dim").get<int64_t>();
    g.noise_sigma = j.at("noise_sigma").get<float>();
    g.distractor_frac = j.at("distractor_frac").get<float>();
    g.position_jitter = j.at("position_jitter").get<float>();
    g.homography.max_rotation_deg = j.at("max_rotation_deg").get<double>();
    g.homography.min_scale = j.at("min_scale").get<double>();
    g.homography.max_scale = j.at("max_scale").get<double>();
    g.homography.max_translation_frac = j.at("max_translation_frac").get<double>();
    g.homography.perspective_jitter = j.at("perspective_jitter").get<double>();
    return g;
}

}  // namespace

void Dataset::save(const std::string& path) const {
    BlobWriter blob;
    nlohmann::json records = nlohmann::json::array();
    for (size_t p = 0; p < pairs.size(); ++p) {
        const auto& s = pairs[p];
        const std::string base = "pair" + std::to_string(p);
        nlohmann::json rec;
        rec["m"] = s.x.count();
        rec["n"] = s.y.count();
        rec["x_positions"] = blob.add(base + ".x_positions", *s.x.positions);
        rec["x_descriptors"] = blob.add(base + ".x_descriptors", *s.x.descriptors);
        rec["y_positions"] = blob.add(base + ".y_positions", *s.y.positions);
        rec["y_descriptors"] = blob.add(base + ".y_descriptors", *s.y.descriptors);
        rec["h"] = s.h.h;
        nlohmann::json gtm = nlohmann::json::array();
        for (const auto& [i, j] : s.gt.matches) gtm.push_back({i, j});
        rec["gt_matches"] = gtm;
        rec["unmatched_x"] = s.gt.unmatched_x;
        rec["unmatched_y"] = s.gt.unmatched_y;
        records.push_back(std::move(rec));
    }
    nlohmann::json manifest;
    manifest["format"] = "paraformer-dataset";
    manifest["version"] = 1;
    manifest["seed"] = seed;
    manifest["gen"] = gen_to_json(gen);
    manifest["records"] = records;
    manifest["blob_nbytes"] = blob.byte_size();
    write_container(path, kDatasetMagic, manifest, blob.blob());
}

Dataset Dataset::load(const std::string& path) {
    auto c = read_container(path, kDatasetMagic);
    if (c.manifest.value("format", "") != "paraformer-dataset") throw IoError("not a dataset file: " + path);
    Dataset ds;
    ds.seed = c.manifest.value("seed", 0ull);
    ds.gen = gen_from_json(c.manifest.at("gen"));
    BlobReader reader(c.blob);
    for (const auto& rec : c.manifest.at("records")) {
        PairSample s;
        s.x.image_width = ds.gen.image_width;
        s.x.image_height = ds.gen.image_height;
        s.y.image_width = ds.gen.image_width;
        s.y.image_height = ds.gen.image_height;
        s.x.positions = reader.read(rec.at("x_positions"));
        s.x.descriptors = reader.read(rec.at("x_descriptors"));
        s.y.positions = reader.read(rec.at("y_positions"));
        s.y.descriptors = reader.read(rec.at("y_descriptors"));
        s.h.h = rec.at("h").get<std::array<double, 9>>();
        for (const auto& m : rec.at("gt_matches")) s.gt.matches.emplace_back(m[0].get<int64_t>(), m[1].get<int64_t>());
        s.gt.unmatched_x = rec.at("unmatched_x").get<std::vector<int64_t>>();
        s.gt.unmatched_y = rec.at("unmatched_y").get<std::vector<int64_t>>();
        ds.pairs.push_back(std::move(s));
    }
    return ds;
}

}  // namespace paraformer
