#include "tma/metrics.hpp"

#include <cstdio>

namespace tma {

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.num_classes != num_classes) throw ShapeError("confusion matrix class count mismatch");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

void accumulate(ConfusionMatrix& cm, const std::vector<std::uint8_t>& pred,
                const std::vector<std::uint8_t>& gt) {
    if (pred.size() != gt.size()) throw ShapeError("pred/gt label map size mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (gt[i] == kIgnoreLabel) continue;
        if (gt[i] >= cm.num_classes)
            throw ContractError("ground-truth class " + std::to_string(gt[i]) + " out of range");
        if (pred[i] >= cm.num_classes)
            throw ContractError("predicted class " + std::to_string(pred[i]) + " out of range");
        ++cm.at(gt[i], pred[i]);
    }
}

IouResult miou(const ConfusionMatrix& cm) {
    IouResult r;
    const int c = cm.num_classes;
    r.per_class.assign(static_cast<std::size_t>(c), 0.0);
    r.included.assign(static_cast<std::size_t>(c), false);
    double sum = 0.0;
    int included = 0;
    std::int64_t total = 0, correct = 0;
    for (int i = 0; i < c; ++i) {
        std::int64_t row = 0, col = 0;
        for (int j = 0; j < c; ++j) {
            row += cm.at(i, j);
            col += cm.at(j, i);
            total += cm.at(i, j);
        }
        correct += cm.at(i, i);
        const std::int64_t uni = row + col - cm.at(i, i);
        if (uni == 0) continue;  // class absent from both: excluded, not scored 0
        r.per_class[static_cast<std::size_t>(i)] = static_cast<double>(cm.at(i, i)) / static_cast<double>(uni);
        r.included[static_cast<std::size_t>(i)] = true;
        sum += r.per_class[static_cast<std::size_t>(i)];
        ++included;
    }
    if (included == 0) throw ContractError("no evaluated classes: confusion matrix is empty");
    r.mean_iou = sum / included;
    r.pixel_acc = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    return r;
}

std::vector<std::uint8_t> argmax_labels(const Tensor& logits) {
    const int c = logits.shape[0];
    const int npix = logits.shape[1] * logits.shape[2];
    std::vector<std::uint8_t> out(static_cast<std::size_t>(npix));
    for (int p = 0; p < npix; ++p) {
        int best = 0;
        double bv = logits.data[static_cast<std::size_t>(p)];
        for (int cc = 1; cc < c; ++cc) {
            const double v = logits.data[static_cast<std::size_t>(cc) * npix + p];
            if (v > bv) {  // strict: ties go to the lowest class index
                bv = v;
                best = cc;
            }
        }
        out[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(best);
    }
    return out;
}

IouResult evaluate(TMANet& model, const Dataset& dataset, const EvalOptions& opts) {
    ConfusionMatrix cm(model.config().num_classes);
    const int t = model.config().memory_length;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        std::mt19937_64 rng(opts.seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(i) + 1)));
        VideoClip clip = make_clip(dataset[i], t, opts.sampler, rng);
        Tape tape;
        ForwardResult fwd = model.forward(tape, clip.memory, clip.query);
        accumulate(cm, argmax_labels(tape.value(fwd.main_logits)), clip.label);
    }
    return miou(cm);
}

std::string format_report(const IouResult& r) {
    std::string out;
    char buf[128];
    for (std::size_t i = 0; i < r.per_class.size(); ++i) {
        if (r.included[i])
            std::snprintf(buf, sizeof(buf), "class %2zu  iou %.6f\n", i, r.per_class[i]);
        else
            std::snprintf(buf, sizeof(buf), "class %2zu  iou -\n", i);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "mIoU %.6f pixel_acc %.6f\n", r.mean_iou, r.pixel_acc);
    out += buf;
    return out;
}

}  // namespace tma
