#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "paraformer/config.hpp"
#include "paraformer/serialize.hpp"
#include "paraformer/train.hpp"

using namespace paraformer;

TEST_CASE("config text round trip and defaults") {
    ModelConfig def;
    CHECK(def.variant == Variant::ParaFormer);
    CHECK(def.dim == 256);
    CHECK(def.layers == 9);
    CHECK(def.heads == 4);
    CHECK(def.sinkhorn_iters == 100);
    CHECK(def.match_threshold == doctest::Approx(0.2f));
    CHECK(def.share_qkv);
    CHECK(def.share_merge);
    CHECK(def.share_attn_weights);
    CHECK(!def.share_fusion);

    auto round = ModelConfig::from_text(def.to_text());
    CHECK(round.to_text() == def.to_text());
    CHECK(round.hash() == def.hash());

    auto u = ModelConfig::from_text("variant = paraformer_u\n");
    CHECK(u.stages.depths == std::vector<int>{2, 1, 2, 1, 2});
    CHECK(u.stages.dims == std::vector<int64_t>{256, 384, 128, 384, 256});
    CHECK(u.layers == 8);
    CHECK(u.dim == 256);
}

TEST_CASE("config parsing errors") {
    CHECK_THROWS_AS(ModelConfig::from_text("variant = superglue\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_text("dim = not_a_number\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_text("unknown_key = 3\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_text("dim = 30\nheads = 4\n"), ConfigError);  // not divisible
    CHECK_THROWS_AS(ModelConfig::from_text("no equals sign"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_text("variant = paraformer_u\nstage_dims = 16,24,8,24,32\n"), ConfigError);
    // comments and blank lines are fine
    auto cfg = ModelConfig::from_text("# comment\n\ndim = 64 # trailing\nheads = 4\n");
    CHECK(cfg.dim == 64);
}

TEST_CASE("config hash ignores the seed but tracks the architecture") {
    auto a = ModelConfig::from_text("seed = 1\n");
    auto b = ModelConfig::from_text("seed = 2\n");
    CHECK(a.hash() == b.hash());
    auto c = ModelConfig::from_text("layers = 8\n");
    CHECK(a.hash() != c.hash());
}

TEST_CASE("container: bad magic, truncation, misaligned entries") {
    const std::string path = "./container_test.bin";
    nlohmann::json manifest;
    manifest["format"] = "x";
    std::vector<float> blob = {1.0f, 2.0f, 3.0f};
    manifest["blob_nbytes"] = blob.size() * sizeof(float);
    write_container(path, "PFXX", manifest, blob);

    auto c = read_container(path, "PFXX");
    CHECK(c.blob == blob);
    CHECK_THROWS_AS(read_container(path, "PFYY"), IoError);
    CHECK_THROWS_AS(read_container("./does_not_exist.bin", "PFXX"), IoError);

    // truncate mid-blob
    {
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    }
    CHECK_THROWS_AS(read_container(path, "PFXX"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("no partial files are left behind on save") {
    // writing into a non-existent directory must fail without creating the target
    nlohmann::json manifest;
    manifest["blob_nbytes"] = 0;
    CHECK_THROWS_AS(write_container("./no_such_dir/x.bin", "PFXX", manifest, {}), IoError);
    std::ifstream probe("./no_such_dir/x.bin");
    CHECK(!probe.good());
}

TEST_CASE("cosine warmup schedule shape") {
    // warm-up ramps linearly, then cosine decays to ~0
    const double base = 1e-3;
    CHECK(cosine_warmup_lr(base, 0, 10, 2) == doctest::Approx(base * 0.5));
    CHECK(cosine_warmup_lr(base, 1, 10, 2) == doctest::Approx(base));
    CHECK(cosine_warmup_lr(base, 2, 10, 2) == doctest::Approx(base));
    CHECK(cosine_warmup_lr(base, 9, 10, 2) == doctest::Approx(0.0).epsilon(1e-9));
    double prev = base * 2;
    for (int e = 2; e < 10; ++e) {
        const double lr = cosine_warmup_lr(base, e, 10, 2);
        CHECK(lr <= prev);
        prev = lr;
    }
}
