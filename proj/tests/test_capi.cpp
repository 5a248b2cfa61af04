#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "morphnas.h"

namespace fs = std::filesystem;

namespace {

morphnas_image* make_image(int h, int w, float fill) {
    std::vector<float> px(static_cast<std::size_t>(h) * w, fill);
    morphnas_image* img = nullptr;
    REQUIRE(morphnas_image_create(h, w, px.data(), &img) == MORPHNAS_OK);
    return img;
}

}  // namespace

TEST_CASE("capi: version and null-argument handling") {
    CHECK(std::string(morphnas_version()).find("morphnas") != std::string::npos);
    CHECK(morphnas_image_read_pgm(nullptr, nullptr) == MORPHNAS_EINVAL);
    CHECK(std::string(morphnas_last_error()).size() > 0);
}

TEST_CASE("capi: image create / pixels / pgm round-trip") {
    std::vector<float> px = {0, 50, 100, 150, 200, 250};
    morphnas_image* img = nullptr;
    REQUIRE(morphnas_image_create(2, 3, px.data(), &img) == MORPHNAS_OK);
    CHECK(morphnas_image_height(img) == 2);
    CHECK(morphnas_image_width(img) == 3);
    REQUIRE(morphnas_image_write_pgm(img, "capi_img.pgm", 8) == MORPHNAS_OK);
    morphnas_image* back = nullptr;
    REQUIRE(morphnas_image_read_pgm("capi_img.pgm", &back) == MORPHNAS_OK);
    std::vector<float> out(6);
    REQUIRE(morphnas_image_pixels(back, out.data(), out.size()) == MORPHNAS_OK);
    CHECK(out == px);
    CHECK(morphnas_image_pixels(back, out.data(), 2) == MORPHNAS_EINVAL);  // tiny buffer
    morphnas_image_free(img);
    morphnas_image_free(back);
    fs::remove("capi_img.pgm");
    CHECK(morphnas_image_read_pgm("no_such_file.pgm", &back) == MORPHNAS_ERUNTIME);
}

TEST_CASE("capi: mten round-trip") {
    morphnas_image* img = make_image(3, 4, 0.25f);
    REQUIRE(morphnas_image_write_mten(img, "capi_img.mten") == MORPHNAS_OK);
    morphnas_image* back = nullptr;
    REQUIRE(morphnas_image_read_mten("capi_img.mten", &back) == MORPHNAS_OK);
    CHECK(morphnas_image_height(back) == 3);
    CHECK(morphnas_image_width(back) == 4);
    morphnas_image_free(img);
    morphnas_image_free(back);
    fs::remove("capi_img.mten");
}

TEST_CASE("capi: structuring element parsing") {
    morphnas_se* se = nullptr;
    CHECK(morphnas_se_parse("disk:3", &se) == MORPHNAS_OK);
    morphnas_se_free(se);
    se = nullptr;
    CHECK(morphnas_se_parse("blob:1", &se) == MORPHNAS_EINVAL);
    CHECK(std::string(morphnas_last_error()).find("blob") != std::string::npos);
}

TEST_CASE("capi: morphology ops behave through the API") {
    // impulse image
    std::vector<float> px(49, 0.f);
    px[3 * 7 + 3] = 200.f;
    morphnas_image* img = nullptr;
    REQUIRE(morphnas_image_create(7, 7, px.data(), &img) == MORPHNAS_OK);
    morphnas_se* se = nullptr;
    REQUIRE(morphnas_se_parse("square:1", &se) == MORPHNAS_OK);

    morphnas_image* dil = nullptr;
    REQUIRE(morphnas_morph_apply("dilate", img, se, &dil) == MORPHNAS_OK);
    std::vector<float> out(49);
    REQUIRE(morphnas_image_pixels(dil, out.data(), out.size()) == MORPHNAS_OK);
    double mean_in = 0, mean_out = 0;
    for (float v : px) mean_in += v;
    for (float v : out) mean_out += v;
    CHECK(mean_out >= mean_in);  // extensivity

    // single-point SE is the identity
    morphnas_se* point = nullptr;
    REQUIRE(morphnas_se_parse("square:0", &point) == MORPHNAS_OK);
    morphnas_image* same = nullptr;
    REQUIRE(morphnas_morph_apply("erode", img, point, &same) == MORPHNAS_OK);
    REQUIRE(morphnas_image_pixels(same, out.data(), out.size()) == MORPHNAS_OK);
    CHECK(out == px);

    // opening is idempotent
    morphnas_image *open1 = nullptr, *open2 = nullptr;
    REQUIRE(morphnas_morph_apply("open", img, se, &open1) == MORPHNAS_OK);
    REQUIRE(morphnas_morph_apply("open", open1, se, &open2) == MORPHNAS_OK);
    std::vector<float> a(49), b(49);
    morphnas_image_pixels(open1, a.data(), a.size());
    morphnas_image_pixels(open2, b.data(), b.size());
    CHECK(a == b);

    morphnas_image* bad = nullptr;
    CHECK(morphnas_morph_apply("blur", img, se, &bad) == MORPHNAS_EINVAL);

    morphnas_image_free(img);
    morphnas_image_free(dil);
    morphnas_image_free(same);
    morphnas_image_free(open1);
    morphnas_image_free(open2);
    morphnas_se_free(se);
    morphnas_se_free(point);
}

TEST_CASE("capi: layer check reports PASS lines and respects the tolerance knob") {
    char report[4096];
    int all_pass = 0;
    REQUIRE(morphnas_layer_check("dilation", 5, 1e-4, report, sizeof(report), &all_pass) ==
            MORPHNAS_OK);
    CHECK(all_pass == 1);
    CHECK(std::string(report).find("PASS oracle-collapse(dilation)") != std::string::npos);

    // absurd tolerance forces a FAIL naming the gradient-check property
    REQUIRE(morphnas_layer_check("dilation", 5, 1e-12, report, sizeof(report), &all_pass) ==
            MORPHNAS_OK);
    CHECK(all_pass == 0);
    CHECK(std::string(report).find("FAIL gradient-check(dilation)") != std::string::npos);

    CHECK(morphnas_layer_check("wiggle", 5, 1e-4, report, sizeof(report), &all_pass) ==
          MORPHNAS_EINVAL);
}

TEST_CASE("capi: edge-eval on directories, perfect predictions score 1.0") {
    fs::create_directories("capi_pred");
    fs::create_directories("capi_gt");
    // two images whose predictions equal their ground truth exactly
    for (int i = 0; i < 2; ++i) {
        std::vector<float> px(64, 0.f);
        for (int k = 0; k < 8; ++k) px[8 * (2 + i) + k] = 255.f;
        morphnas_image* img = nullptr;
        REQUIRE(morphnas_image_create(8, 8, px.data(), &img) == MORPHNAS_OK);
        const std::string id = "img" + std::to_string(i);
        REQUIRE(morphnas_image_write_pgm(img, ("capi_pred/" + id + ".pgm").c_str(), 8) == MORPHNAS_OK);
        REQUIRE(morphnas_image_write_pgm(img, ("capi_gt/" + id + ".pgm").c_str(), 8) == MORPHNAS_OK);
        morphnas_image_free(img);
    }
    double metrics[4] = {0, 0, 0, 0};
    REQUIRE(morphnas_edge_eval_dirs("capi_pred", "capi_gt", 0, "capi_metrics.csv", metrics) ==
            MORPHNAS_OK);
    CHECK(metrics[0] == doctest::Approx(1.0));  // ODS
    CHECK(metrics[1] == doctest::Approx(1.0));  // OIS
    CHECK(metrics[2] == doctest::Approx(1.0));  // AP
    CHECK(fs::exists("capi_metrics.csv"));

    // a prediction without ground truth is an error naming the missing file
    {
        std::ofstream extra("capi_pred/orphan.pgm", std::ios::binary);
        extra << "P5\n2 2\n255\n";
        const char px4[4] = {0, 0, 0, 0};
        extra.write(px4, 4);
    }
    CHECK(morphnas_edge_eval_dirs("capi_pred", "capi_gt", 0, nullptr, metrics) == MORPHNAS_ERUNTIME);
    CHECK(std::string(morphnas_last_error()).find("orphan") != std::string::npos);
    fs::remove_all("capi_pred");
    fs::remove_all("capi_gt");
    fs::remove("capi_metrics.csv");
}

TEST_CASE("capi: edge-run with the classical baseline") {
    double metrics[4] = {0, 0, 0, 0};
    REQUIRE(morphnas_edge_run("baseline-grad", "synth-shapes-edge", 6, 64, 7, 0, nullptr,
                              nullptr, metrics) == MORPHNAS_OK);
    CHECK(metrics[0] >= 0.90);       // ODS on exact-gradient ground truth
    CHECK(metrics[1] >= metrics[0]);  // OIS >= ODS
    CHECK(morphnas_edge_run("baseline-grad", "mystery-set", 6, 64, 7, 0, nullptr, nullptr,
                            metrics) == MORPHNAS_EINVAL);
}

TEST_CASE("capi: a tiny search run produces history, best cell, and report") {
    {
        std::ofstream cfg("capi_search.cfg");
        cfg << "iterations = 1\ncandidates = 2\nepochs = 1\ntrain_n = 32\nval_n = 16\n"
               "nao_epochs = 5\nsize = 16\n";
    }
    double best = -1.0;
    REQUIRE(morphnas_search_run("cls-dilation", "cifar-stack", "capi_search.cfg", "capi_search_out",
                                11, 2, &best) == MORPHNAS_OK);
    CHECK(best >= 0.0);
    CHECK(best <= 1.0);
    CHECK(fs::exists("capi_search_out/history.log"));
    CHECK(fs::exists("capi_search_out/best_cell.txt"));
    CHECK(fs::exists("capi_search_out/report.txt"));
    CHECK(fs::exists("capi_search_out/best_ckpt/manifest.txt"));

    CHECK(morphnas_search_run("cls-dilation", "hourglass", nullptr, "capi_search_out", 1, 1,
                              &best) == MORPHNAS_EINVAL);
    fs::remove("capi_search.cfg");
    fs::remove_all("capi_search_out");
}
