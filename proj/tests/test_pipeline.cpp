#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pipeline/pipeline.hpp"

using namespace ccd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("ccd_pipe_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

ExperimentConfig tiny_config(const std::string& out_dir) {
    nlohmann::json j = {
        {"data",
         {{"image_size", 48},
          {"synthetic",
           {{"image_size", 48}, {"n_train", 10}, {"n_test_normal", 5}, {"n_test_abnormal", 5}}}}},
        {"model", {{"input_size", 48}, {"base_channels", 8}, {"embed_dim", 32}}},
        {"ccd", {{"epochs", 1}, {"batch_size", 5}}},
        {"detector", {{"epochs", 1}, {"batch_size", 5}, {"freeze_encoder", true}}},
        {"localization", {{"window", 16}, {"maps", "global"}}},
        {"output_dir", out_dir},
        {"seed", 11}};
    return ExperimentConfig::from_json(j);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(bool(f));
    return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("experiment config rejects unknown keys at every level") {
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"outputdir", "x"}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"data", {{"manifests", "x"}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"data", {{"synthetic", {{"ntrain", 3}}}}}}),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"augment", {{"strongk", 4}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"model", {{"widths", 3}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"ccd", {{"learning_rate", 0.1}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"detector", {{"type", "igd"}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"localization", {{"windows", 8}}}}),
                    ConfigError);
    CHECK_NOTHROW(ExperimentConfig::from_json(nlohmann::json::object()));
}

TEST_CASE("experiment config validation maps to typed errors") {
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"data", {{"image_size", 40}}}}), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"augment", {{"strong_family", "bogus"}}}}),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json(
                        {{"data", {{"image_size", 64}}}, {"model", {{"input_size", 48}}}}),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_file("/nonexistent/cfg.json"), DataError);
}

TEST_CASE("experiment config json round trip") {
    TempDir t;
    auto cfg = tiny_config((t.path / "out").string());
    auto back = ExperimentConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("end-to-end pipeline on a tiny dataset") {
    TempDir t;
    auto cfg = tiny_config((t.path / "out").string());

    const std::string manifest = pipeline::cmd_synth_data(cfg);
    CHECK(fs::exists(manifest));
    cfg.manifest_path = manifest;

    const std::string ckpt = pipeline::cmd_pretrain(cfg);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(fs::path(cfg.output_dir) / "pretrain_log.txt"));

    const std::string det = pipeline::cmd_train_detector(cfg, ckpt);
    CHECK(fs::exists(det));

    const std::string scores = pipeline::cmd_score(cfg, det);
    CHECK(fs::exists(scores));
    {
        std::ifstream f(scores);
        std::string id;
        double v;
        int n = 0;
        while (f >> id >> v) {
            CHECK(std::isfinite(v));
            ++n;
        }
        CHECK(n == 10);
    }

    const std::string heat = pipeline::cmd_localize(cfg, det, "");
    CHECK(fs::exists(fs::path(heat) / "abnormal_0000.f32"));
    CHECK(fs::exists(fs::path(heat) / "abnormal_0000.png"));
    CHECK(fs::exists(fs::path(heat) / "abnormal_0000_mask.png"));

    const std::string report_path = pipeline::cmd_evaluate_to_file(cfg, scores, heat);
    auto report = EvalReport::from_json(nlohmann::json::parse(slurp(report_path)));
    CHECK(report.auroc_value >= 0.0);
    CHECK(report.auroc_value <= 1.0);
    CHECK(report.n_pos == 5);
    CHECK(report.n_neg == 5);
    CHECK(report.mean_iou >= 0.0);

    SUBCASE("rerunning the same config overwrites with identical bytes") {
        const std::string ckpt_bytes = slurp(ckpt);
        const std::string det_bytes = slurp(det);
        const std::string score_bytes = slurp(scores);
        CHECK(slurp(pipeline::cmd_pretrain(cfg)) == ckpt_bytes);
        CHECK(slurp(pipeline::cmd_train_detector(cfg, ckpt)) == det_bytes);
        CHECK(slurp(pipeline::cmd_score(cfg, det)) == score_bytes);
    }
}

TEST_CASE("sweep writes one entry per value") {
    TempDir t;
    auto cfg = tiny_config((t.path / "out").string());
    cfg.manifest_path = pipeline::cmd_synth_data(cfg);

    const std::string path = pipeline::cmd_sweep(cfg, "loss_terms", {"con", "con+cla+pos"});
    auto j = nlohmann::json::parse(slurp(path));
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 2);
    CHECK(j[0].at("axis") == "loss_terms");
    CHECK(j[0].at("value") == "con");
    CHECK(j[1].at("value") == "con+cla+pos");
    for (const auto& run : j) {
        CHECK(run.at("auroc").get<double>() >= 0.0);
        CHECK(run.at("auroc").get<double>() <= 1.0);
    }

    CHECK_THROWS_AS(pipeline::cmd_sweep(cfg, "bogus_axis", {"1"}), ConfigError);
    CHECK_THROWS_AS(pipeline::cmd_sweep(cfg, "loss_terms", {"con+bogus"}), ConfigError);
}

TEST_CASE("commands surface data errors for broken inputs") {
    TempDir t;
    auto cfg = tiny_config((t.path / "out").string());
    cfg.manifest_path = "/nonexistent/manifest.json";
    CHECK_THROWS_AS(pipeline::cmd_pretrain(cfg), DataError);

    auto cfg2 = tiny_config((t.path / "out2").string());
    cfg2.manifest_path = pipeline::cmd_synth_data(cfg2);
    CHECK_THROWS_AS(pipeline::cmd_train_detector(cfg2, "/nonexistent/pre.ckpt"), DataError);
    CHECK_THROWS_AS(pipeline::cmd_score(cfg2, "/nonexistent/det.ckpt"), DataError);
    CHECK_THROWS_AS(pipeline::cmd_evaluate(cfg2, "/nonexistent/scores.txt", ""), DataError);
}
