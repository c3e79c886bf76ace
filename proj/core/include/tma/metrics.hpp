#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tma/data.hpp"
#include "tma/model.hpp"

namespace tma {

/// Rows = ground truth, cols = prediction. Ignore pixels are skipped.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<std::int64_t> counts;  // num_classes * num_classes

    explicit ConfusionMatrix(int c) : num_classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}
    std::int64_t& at(int gt, int pred) { return counts[static_cast<std::size_t>(gt) * num_classes + pred]; }
    std::int64_t at(int gt, int pred) const {
        return counts[static_cast<std::size_t>(gt) * num_classes + pred];
    }
    void merge(const ConfusionMatrix& other);
};

void accumulate(ConfusionMatrix& cm, const std::vector<std::uint8_t>& pred,
                const std::vector<std::uint8_t>& gt);

struct IouResult {
    std::vector<double> per_class;      // NaN-free: only included classes are meaningful
    std::vector<bool> included;         // false for classes with zero union
    double mean_iou = 0.0;
    double pixel_acc = 0.0;
};

/// IoU_c = diag_c / (row_c + col_c - diag_c); zero-union classes are excluded
/// from the mean.
IouResult miou(const ConfusionMatrix& cm);

/// Per-pixel argmax over class logits; lowest class index wins ties.
std::vector<std::uint8_t> argmax_labels(const Tensor& logits);

struct EvalOptions {
    SamplerMode sampler = SamplerMode::kContinuous;
    std::uint64_t seed = 0;
};

IouResult evaluate(TMANet& model, const Dataset& dataset, const EvalOptions& opts);

/// Text table of per-class IoU (6 decimals) plus "mIoU <v> pixel_acc <v>".
std::string format_report(const IouResult& r);

}  // namespace tma
