#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tma/checkpoint.hpp"
#include "tma/train.hpp"

using namespace tma;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.memory_length = 1;
    cfg.key_channels = 2;
    cfg.value_channels = 8;
    cfg.num_classes = 3;
    cfg.backbone_widths = {4, 6};
    cfg.backbone_strides = {2, 2};
    return cfg;
}

Dataset tiny_dataset(int n) {
    Dataset ds;
    for (int i = 0; i < n; ++i) {
        SyntheticSceneSpec spec;
        spec.num_objects = 1;
        spec.num_classes = 3;
        spec.seed = 70 + static_cast<std::uint64_t>(i);
        LabeledVideo v = generate_video(spec, 12, 16, 16, 11);
        StoredClip c;
        c.height = c.width = 16;
        for (int f = 6; f < 11; ++f) c.history.push_back(v.frames[static_cast<std::size_t>(f)]);
        c.query = v.frames[11];
        c.label = v.labels[11];
        ds.push_back(std::move(c));
    }
    return ds;
}

struct TempFile {
    std::string path;
    explicit TempFile(const char* name) {
        path = (std::filesystem::temp_directory_path() / name).string();
    }
    ~TempFile() { std::remove(path.c_str()); }
};

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("checkpoint round-trip restores config and every parameter bitwise") {
    TMANet model(tiny_cfg(), 21);
    TempFile f("ckpt_roundtrip.tmac");
    save_checkpoint(f.path, model);

    LoadedCheckpoint lc = load_checkpoint(f.path);
    CHECK(!lc.has_state);
    const ModelConfig& a = model.config();
    const ModelConfig& b = lc.model->config();
    CHECK(b.memory_length == a.memory_length);
    CHECK(b.key_channels == a.key_channels);
    CHECK(b.value_channels == a.value_channels);
    CHECK(b.num_classes == a.num_classes);
    CHECK(b.backbone_widths == a.backbone_widths);
    CHECK(b.backbone_strides == a.backbone_strides);
    CHECK(b.aggregation == a.aggregation);
    CHECK(b.attention_scaling == a.attention_scaling);
    CHECK(b.encoder == a.encoder);
    CHECK(b.aux_loss_weight == a.aux_loss_weight);

    const auto& pa = model.params();
    const auto& pb = lc.model->params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pb[i].name == pa[i].name);
        CHECK(pb[i].value.shape == pa[i].value.shape);
        CHECK(pb[i].value.data == pa[i].value.data);  // bitwise via exact doubles
    }
}

TEST_CASE("save is byte-deterministic") {
    TMANet model(tiny_cfg(), 22);
    TempFile f1("ckpt_det_a.tmac"), f2("ckpt_det_b.tmac");
    save_checkpoint(f1.path, model);
    save_checkpoint(f2.path, model);
    CHECK(slurp(f1.path) == slurp(f2.path));
}

TEST_CASE("file header carries the TMAC magic") {
    TMANet model(tiny_cfg(), 23);
    TempFile f("ckpt_magic.tmac");
    save_checkpoint(f.path, model);
    std::vector<char> bytes = slurp(f.path);
    REQUIRE(bytes.size() >= 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TMAC");
}

TEST_CASE("loading a missing or corrupt file throws IoError") {
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/model.tmac"), IoError);

    TempFile f("ckpt_corrupt.tmac");
    std::ofstream(f.path, std::ios::binary) << "TMAXjunk";
    CHECK_THROWS_AS(load_checkpoint(f.path), IoError);
}

TEST_CASE("training state round-trips: velocities and iteration") {
    TMANet model(tiny_cfg(), 24);
    Dataset ds = tiny_dataset(2);
    TrainConfig tc;
    tc.total_iters = 4;
    tc.batch_size = 1;
    tc.seed = 3;
    SgdState state;
    std::ostringstream log;
    run_training(model, state, tc, ds, log);
    REQUIRE(state.iteration == 4);

    TempFile f("ckpt_state.tmac");
    save_checkpoint(f.path, model, &state);
    LoadedCheckpoint lc = load_checkpoint(f.path);
    CHECK(lc.has_state);
    CHECK(lc.state.iteration == 4);
    REQUIRE(lc.state.velocity.size() == state.velocity.size());
    for (const auto& [name, v] : state.velocity) {
        REQUIRE(lc.state.velocity.count(name) == 1);
        CHECK(lc.state.velocity.at(name).data == v.data);
    }
}

TEST_CASE("resumed training reproduces the unresumed loss trace bitwise") {
    Dataset ds = tiny_dataset(3);
    TrainConfig tc;
    tc.total_iters = 8;
    tc.batch_size = 2;
    tc.seed = 11;

    // reference: straight-through run
    TMANet ref(tiny_cfg(), 31);
    SgdState ref_state;
    std::ostringstream ref_log;
    run_training(ref, ref_state, tc, ds, ref_log);

    // interrupted run: stop after 3 iterations, checkpoint, reload, finish
    TMANet part(tiny_cfg(), 31);
    SgdState part_state;
    std::ostringstream log_a;
    run_training(part, part_state, tc, ds, log_a, /*stop_after=*/3);
    REQUIRE(part_state.iteration == 3);

    TempFile f("ckpt_resume.tmac");
    save_checkpoint(f.path, part, &part_state);
    LoadedCheckpoint lc = load_checkpoint(f.path);
    std::ostringstream log_b;
    run_training(*lc.model, lc.state, tc, ds, log_b);

    CHECK(log_a.str() + log_b.str() == ref_log.str());

    const auto& pa = ref.params();
    const auto& pb = lc.model->params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pb[i].value.data == pa[i].value.data);
}
