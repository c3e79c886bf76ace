#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tma/tensor.hpp"

namespace tma {

constexpr int kIgnoreLabel = 255;

/// T memory frames plus one labeled query frame.
struct VideoClip {
    std::vector<Tensor> memory;       // each 3 x H x W
    Tensor query;                     // 3 x H x W
    std::vector<std::uint8_t> label;  // H*W, values in [0, C) or 255
    int height = 0;
    int width = 0;
    int query_index = 0;  // position of the query frame in its source video
};

enum class OccluderPolicy { kNone, kOccludeQueryOnly };

struct SyntheticSceneSpec {
    int num_objects = 1;
    int num_classes = 4;  // class 0 is background, object classes drawn from [1, num_classes)
    OccluderPolicy occluder = OccluderPolicy::kNone;
    int background_class = 0;
    std::uint64_t seed = 0;
};

/// A fully labeled synthetic video: every frame carries a label map.
struct LabeledVideo {
    std::vector<Tensor> frames;                    // 3 x H x W each
    std::vector<std::vector<std::uint8_t>> labels; // H*W each
    int height = 0;
    int width = 0;
    int query_index = 0;  // the frame the occluder (if any) is drawn on
};

/// Objects move linearly with wraparound; pixels take the topmost object's
/// class. With kOccludeQueryOnly a gray occluder patch covers part of every
/// object in frame query_index only — the label map underneath is unchanged,
/// so class evidence survives only in the other frames.
LabeledVideo generate_video(const SyntheticSceneSpec& spec, int video_length, int height, int width,
                            int query_index);

/// Checks the occluder guarantee: every occluded query pixel's class appears
/// unoccluded in at least one of the `window` frames before query_index.
bool verify_occlusion(const LabeledVideo& video, int window);

enum class SamplerMode { kContinuous, kRandom };

/// Indices of the T memory frames for a query at query_index.
/// continuous: [query_index-T, ..., query_index-1]; random: T distinct indices
/// drawn uniformly from the `window` frames before the query, sorted ascending.
std::vector<int> sample_memory(int query_index, int t, SamplerMode mode, int window,
                               std::mt19937_64& rng);

struct AugmentParams {
    double min_ratio = 0.5;
    double max_ratio = 2.0;
    int crop = 32;
    double hflip_prob = 0.5;
};

/// One resize ratio, one crop offset, and one flip decision per clip, applied
/// identically to every memory frame, the query, and the label. Labels use
/// nearest-neighbor; frames use bilinear. Crops larger than the resized clip
/// are padded with zeros (frames) and the ignore label.
VideoClip augment(const VideoClip& clip, const AugmentParams& params, std::mt19937_64& rng);

/// One clip per valid query index, ascending, memory drawn with a fixed seed.
std::vector<VideoClip> sliding_window_snippets(const LabeledVideo& video, int t, SamplerMode mode,
                                               int window = 10, std::uint64_t test_seed = 0);

/// Clip as stored on disk: a window of past frames plus the labeled query.
struct StoredClip {
    std::vector<Tensor> history;      // past frames, oldest first
    Tensor query;                     // 3 x H x W
    std::vector<std::uint8_t> label;  // query-frame labels
    int height = 0;
    int width = 0;
};

using Dataset = std::vector<StoredClip>;

/// Builds a model-facing clip by sampling T frames from the stored history.
VideoClip make_clip(const StoredClip& stored, int t, SamplerMode mode, std::mt19937_64& rng);

// TMAD dataset file format (bit-exact): magic "TMAD", u32 version=1,
// u32 clip count; per clip: u32 T, u32 H, u32 W, T+1 frames as little-endian
// f64 RGB planes (history oldest-first, query last), then H*W label bytes.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

// Frame/label resampling helpers (also used by augmentation tests).
Tensor resize_bilinear(const Tensor& frame, int out_h, int out_w);
std::vector<std::uint8_t> resize_nearest(const std::vector<std::uint8_t>& label, int h, int w, int out_h,
                                         int out_w);

}  // namespace tma
