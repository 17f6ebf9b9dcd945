// Exercises the shared-library C surface end to end.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "paraformer/capi.h"

using nlohmann::json;

namespace {

std::string take(char* s) {
    std::string out = s ? s : "";
    pf_string_free(s);
    return out;
}

struct Model {
    pf_model_t* m = nullptr;
    ~Model() { pf_model_free(m); }
};
struct Data {
    pf_dataset_t* d = nullptr;
    ~Data() { pf_dataset_free(d); }
};

constexpr const char* kTinyModel =
    "variant = paraformer\ndim = 16\nlayers = 2\nheads = 2\nsinkhorn_iters = 10\nseed = 3\n";
constexpr const char* kTinyData =
    "pairs = 3\nkeypoints = 24\ndim = 16\nnoise = 0.1\nseed = 9\nimage_width = 160\nimage_height = 120\n";

}  // namespace

TEST_CASE("version and error text") {
    CHECK(std::string(pf_version()) == "0.1.0");
    CHECK(std::string(pf_last_error()).empty());
}

TEST_CASE("model create, config text, param count, save/load") {
    Model m;
    REQUIRE(pf_model_create(kTinyModel, &m.m) == PF_OK);
    CHECK(pf_model_param_count(m.m) > 0);

    char* cfg = nullptr;
    REQUIRE(pf_model_config_text(m.m, &cfg) == PF_OK);
    const std::string text = take(cfg);
    CHECK(text.find("variant = paraformer") != std::string::npos);
    CHECK(text.find("dim = 16") != std::string::npos);

    const std::string path = "./capi_model.pfw";
    REQUIRE(pf_model_save(m.m, path.c_str()) == PF_OK);
    Model loaded;
    REQUIRE(pf_model_load(path.c_str(), &loaded.m) == PF_OK);
    CHECK(pf_model_param_count(loaded.m) == pf_model_param_count(m.m));
    std::remove(path.c_str());
}

TEST_CASE("bad inputs produce status codes and error text") {
    pf_model_t* m = nullptr;
    CHECK(pf_model_create("variant = nonsense\n", &m) == PF_ERROR_CONTRACT);
    CHECK(!std::string(pf_last_error()).empty());
    CHECK(pf_model_create("dim = 30\nheads = 4\n", &m) == PF_ERROR_CONTRACT);
    CHECK(pf_model_load("./no_such_file.pfw", &m) == PF_ERROR_IO);
    CHECK(pf_model_create(kTinyModel, nullptr) == PF_ERROR_USAGE);

    pf_dataset_t* d = nullptr;
    CHECK(pf_dataset_generate("keypoints = 2\n", &d) == PF_ERROR_CONTRACT);  // < 4 keypoints
    CHECK(pf_dataset_load("./no_such_file.pfd", &d) == PF_ERROR_IO);
}

TEST_CASE("dataset generate/save/load/info and matching flow") {
    Data d;
    REQUIRE(pf_dataset_generate(kTinyData, &d.d) == PF_OK);
    CHECK(pf_dataset_num_pairs(d.d) == 3);

    char* info = nullptr;
    REQUIRE(pf_dataset_info(d.d, &info) == PF_OK);
    const json j = json::parse(take(info));
    CHECK(j.at("count").get<int>() == 3);
    CHECK(j.at("descriptor_dim").get<int>() == 16);
    for (const auto& p : j.at("pairs")) CHECK(p.at("gt_matches").get<int>() >= 4);

    const std::string path = "./capi_data.pfd";
    REQUIRE(pf_dataset_save(d.d, path.c_str()) == PF_OK);
    Data loaded;
    REQUIRE(pf_dataset_load(path.c_str(), &loaded.d) == PF_OK);
    CHECK(pf_dataset_num_pairs(loaded.d) == 3);
    std::remove(path.c_str());

    Model m;
    REQUIRE(pf_model_create(kTinyModel, &m.m) == PF_OK);
    pf_match_t* matches = nullptr;
    int64_t count = -1;
    REQUIRE(pf_match_pair(m.m, d.d, 0, -1.0f, &matches, &count) == PF_OK);
    CHECK(count >= 0);
    for (int64_t k = 0; k < count; ++k) {
        CHECK(matches[k].i >= 0);
        CHECK(matches[k].confidence > 0.0f);
    }
    pf_matches_free(matches);
    CHECK(pf_match_pair(m.m, d.d, 99, -1.0f, &matches, &count) == PF_ERROR_CONTRACT);

    char* eval_json = nullptr;
    REQUIRE(pf_evaluate(m.m, d.d, &eval_json) == PF_OK);
    const json ej = json::parse(take(eval_json));
    CHECK(ej.at("pairs").size() == 3);
    CHECK(ej.at("aggregate").contains("f1"));

    char* nn_json = nullptr;
    REQUIRE(pf_evaluate_nn(d.d, 1, &nn_json) == PF_OK);
    const json nj = json::parse(take(nn_json));
    CHECK(nj.at("aggregate").at("precision").get<double>() > 0.5);  // sigma 0.1 is easy
}

TEST_CASE("training through the C API with callback and mismatch rejection") {
    Model m;
    Data d;
    REQUIRE(pf_model_create(kTinyModel, &m.m) == PF_OK);
    REQUIRE(pf_dataset_generate(kTinyData, &d.d) == PF_OK);

    static std::vector<int64_t> seen_epochs;
    seen_epochs.clear();
    auto cb = [](int64_t epoch, double loss, double lr, void*) {
        CHECK(loss > 0.0);
        CHECK(lr >= 0.0);
        seen_epochs.push_back(epoch);
    };
    char* out = nullptr;
    REQUIRE(pf_train(m.m, d.d, "epochs = 2\nlr = 0.001\n", cb, nullptr, &out) == PF_OK);
    const json report = json::parse(take(out));
    CHECK(report.at("epochs").size() == 2);
    CHECK(seen_epochs == std::vector<int64_t>{0, 1});

    // descriptor dim mismatch is a config error
    Model wrong;
    REQUIRE(pf_model_create("dim = 32\nlayers = 1\nsinkhorn_iters = 5\n", &wrong.m) == PF_OK);
    CHECK(pf_train(wrong.m, d.d, "epochs = 1\n", nullptr, nullptr, nullptr) == PF_ERROR_CONTRACT);
}

TEST_CASE("flops and gradcheck through the C API") {
    char* out = nullptr;
    REQUIRE(pf_flops("variant = paraformer\n", 512, 512, &out) == PF_OK);
    const json f = json::parse(take(out));
    CHECK(f.at("total").get<int64_t>() > 0);
    CHECK(f.at("total").get<int64_t>() ==
          f.at("pe").get<int64_t>() + f.at("projections").get<int64_t>() + f.at("attn_logits").get<int64_t>() +
              f.at("attn_values").get<int64_t>() + f.at("fusion").get<int64_t>() + f.at("pooling").get<int64_t>() +
              f.at("sinkhorn").get<int64_t>());

    CHECK(pf_flops("variant = bogus\n", 10, 10, &out) == PF_ERROR_CONTRACT);

    char* gc = nullptr;
    REQUIRE(pf_gradcheck("seeds = 1\n", &gc) == PF_OK);
    const json g = json::parse(take(gc));
    CHECK(g.at("pass").get<bool>());
    CHECK(g.at("checks").size() == 2);
}
