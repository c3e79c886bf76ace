#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "tma/metrics.hpp"

using namespace tma;

namespace {

// independent per-pixel set-arithmetic oracle
double miou_set_oracle(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt,
                       int num_classes) {
    double sum = 0.0;
    int included = 0;
    for (int c = 0; c < num_classes; ++c) {
        std::set<std::size_t> p, g;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (gt[i] == kIgnoreLabel) continue;
            if (pred[i] == c) p.insert(i);
            if (gt[i] == c) g.insert(i);
        }
        std::set<std::size_t> inter, uni;
        std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::inserter(inter, inter.end()));
        std::set_union(p.begin(), p.end(), g.begin(), g.end(), std::inserter(uni, uni.end()));
        if (uni.empty()) continue;
        sum += static_cast<double>(inter.size()) / static_cast<double>(uni.size());
        ++included;
    }
    return sum / included;
}

}  // namespace

TEST_CASE("perfect prediction fills only the diagonal and scores mIoU 1") {
    ConfusionMatrix cm(3);
    std::vector<std::uint8_t> labels = {0, 1, 2, 1, 0, 2};
    accumulate(cm, labels, labels);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) CHECK(cm.at(i, j) == 0);
    IouResult r = miou(cm);
    CHECK(r.mean_iou == 1.0);
    CHECK(r.pixel_acc == 1.0);
}

TEST_CASE("ignore pixels leave the matrix unchanged") {
    ConfusionMatrix cm(3);
    std::vector<std::uint8_t> gt(10, kIgnoreLabel);
    std::vector<std::uint8_t> pred(10, 1);
    accumulate(cm, pred, gt);
    for (std::int64_t c : cm.counts) CHECK(c == 0);
    CHECK_THROWS_WITH_AS(miou(cm), doctest::Contains("no evaluated classes"), ContractError);
}

TEST_CASE("hand tally: pred [[0,0],[1,1]] vs gt [[0,1],[1,1]]") {
    ConfusionMatrix cm(2);
    accumulate(cm, {0, 0, 1, 1}, {0, 1, 1, 1});
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 0);
    CHECK(cm.at(1, 0) == 1);
    CHECK(cm.at(1, 1) == 2);

    IouResult r = miou(cm);
    CHECK(r.per_class[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r.per_class[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(r.mean_iou == doctest::Approx(0.583333).epsilon(1e-5));
}

TEST_CASE("classes absent from both pred and gt are excluded, not scored zero") {
    ConfusionMatrix cm(4);
    accumulate(cm, {0, 1, 0, 1}, {0, 1, 1, 0});
    IouResult r = miou(cm);
    CHECK(!r.included[2]);
    CHECK(!r.included[3]);
    CHECK(r.mean_iou == doctest::Approx((1.0 / 3 + 1.0 / 3) / 2).epsilon(1e-12));
}

TEST_CASE("confusion-matrix mIoU equals the set-intersection oracle on random maps") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<std::uint8_t> pred(64), gt(64);
        for (std::size_t i = 0; i < 64; ++i) {
            pred[i] = static_cast<std::uint8_t>(rng() % 3);  // class 3 absent: exclusion case
            gt[i] = (rng() % 8 == 0) ? kIgnoreLabel : static_cast<std::uint8_t>(rng() % 3);
        }
        ConfusionMatrix cm(4);
        accumulate(cm, pred, gt);
        IouResult r = miou(cm);
        CHECK(std::abs(r.mean_iou - miou_set_oracle(pred, gt, 4)) < 1e-12);
        CHECK(r.mean_iou >= 0.0);
        CHECK(r.mean_iou <= 1.0);
    }
}

TEST_CASE("accumulation is order-independent and merge is exact") {
    std::mt19937_64 rng(6);
    std::vector<std::vector<std::uint8_t>> preds, gts;
    for (int i = 0; i < 6; ++i) {
        std::vector<std::uint8_t> p(32), g(32);
        for (std::size_t j = 0; j < 32; ++j) {
            p[j] = static_cast<std::uint8_t>(rng() % 4);
            g[j] = static_cast<std::uint8_t>(rng() % 4);
        }
        preds.push_back(p);
        gts.push_back(g);
    }
    ConfusionMatrix fwd(4), rev(4);
    for (std::size_t i = 0; i < preds.size(); ++i) accumulate(fwd, preds[i], gts[i]);
    for (std::size_t i = preds.size(); i-- > 0;) accumulate(rev, preds[i], gts[i]);
    CHECK(fwd.counts == rev.counts);

    // parallel merge path: per-clip matrices added elementwise
    ConfusionMatrix merged(4);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        ConfusionMatrix part(4);
        accumulate(part, preds[i], gts[i]);
        merged.merge(part);
    }
    CHECK(merged.counts == fwd.counts);
}

TEST_CASE("accumulate rejects out-of-range classes") {
    ConfusionMatrix cm(2);
    CHECK_THROWS_AS(accumulate(cm, {3}, {0}), ContractError);
    CHECK_THROWS_AS(accumulate(cm, {0}, {3}), ContractError);
}

TEST_CASE("argmax tie-breaking prefers the lowest class index") {
    Tensor logits = Tensor::zeros({3, 1, 2});
    logits.at({1, 0, 1}) = 2.0;
    std::vector<std::uint8_t> pred = argmax_labels(logits);
    CHECK(pred[0] == 0);  // all equal -> class 0
    CHECK(pred[1] == 1);
}

TEST_CASE("evaluate on a trained-free model yields mIoU within [0,1]") {
    ModelConfig cfg;
    cfg.memory_length = 1;
    cfg.key_channels = 2;
    cfg.value_channels = 8;
    cfg.num_classes = 3;
    cfg.backbone_widths = {4, 6};
    cfg.backbone_strides = {2, 2};
    TMANet model(cfg, 9);

    Dataset ds;
    for (int i = 0; i < 2; ++i) {
        SyntheticSceneSpec spec;
        spec.num_objects = 1;
        spec.num_classes = 3;
        spec.seed = 50 + static_cast<std::uint64_t>(i);
        LabeledVideo v = generate_video(spec, 10, 16, 16, 9);
        StoredClip c;
        c.height = c.width = 16;
        for (int f = 5; f < 9; ++f) c.history.push_back(v.frames[static_cast<std::size_t>(f)]);
        c.query = v.frames[9];
        c.label = v.labels[9];
        ds.push_back(std::move(c));
    }
    EvalOptions opts;
    IouResult r = evaluate(model, ds, opts);
    CHECK(r.mean_iou >= 0.0);
    CHECK(r.mean_iou <= 1.0);

    // determinism given the test seed
    IouResult r2 = evaluate(model, ds, opts);
    CHECK(r.mean_iou == r2.mean_iou);
}

TEST_CASE("report format carries per-class lines and the summary") {
    ConfusionMatrix cm(2);
    accumulate(cm, {0, 0, 1, 1}, {0, 1, 1, 1});
    const std::string report = format_report(miou(cm));
    CHECK(report.find("class  0  iou 0.500000") != std::string::npos);
    CHECK(report.find("mIoU 0.583333 pixel_acc 0.750000") != std::string::npos);
}
