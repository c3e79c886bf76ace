#include "tma/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace tma {

static_assert(std::endian::native == std::endian::little, "TMAD/TMAC writers assume a little-endian host");

namespace {

struct RgbColor {
    double r, g, b;
};

RgbColor palette_color(int cls) {
    static const RgbColor table[] = {
        {0.10, 0.10, 0.10},  // background
        {0.90, 0.15, 0.15}, {0.15, 0.85, 0.15}, {0.15, 0.25, 0.90}, {0.90, 0.85, 0.15},
        {0.85, 0.15, 0.85}, {0.15, 0.85, 0.85}, {0.95, 0.55, 0.15},
    };
    constexpr int n = static_cast<int>(sizeof(table) / sizeof(table[0]));
    if (cls < n) return table[cls];
    // deterministic fallback for large class counts
    std::uint64_t z = static_cast<std::uint64_t>(cls) * 0x9e3779b97f4a7c15ULL;
    auto chan = [&z]() {
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return 0.15 + 0.70 * (static_cast<double>(z >> 11) * 0x1.0p-53);
    };
    return {chan(), chan(), chan()};
}

constexpr RgbColor kOccluderColor{0.5, 0.5, 0.5};

struct SceneObject {
    bool circle;
    int cls;
    int radius;  // half-extent for rectangles
    int cx, cy;
    int vx, vy;
};

int wrap(int v, int extent) {
    v %= extent;
    return v < 0 ? v + extent : v;
}

int wrapped_delta(int a, int b, int extent) {
    int d = std::abs(a - b);
    return std::min(d, extent - d);
}

bool covers(const SceneObject& o, int ox, int oy, int x, int y, int w, int h) {
    const int dx = wrapped_delta(x, ox, w);
    const int dy = wrapped_delta(y, oy, h);
    if (o.circle) return dx * dx + dy * dy <= o.radius * o.radius;
    return dx <= o.radius && dy <= o.radius;
}

void set_pixel(Tensor& frame, int x, int y, const RgbColor& c) {
    const int h = frame.shape[1], w = frame.shape[2];
    frame.data[static_cast<std::size_t>(0) * h * w + static_cast<std::size_t>(y) * w + x] = c.r;
    frame.data[static_cast<std::size_t>(1) * h * w + static_cast<std::size_t>(y) * w + x] = c.g;
    frame.data[static_cast<std::size_t>(2) * h * w + static_cast<std::size_t>(y) * w + x] = c.b;
}

}  // namespace

LabeledVideo generate_video(const SyntheticSceneSpec& spec, int video_length, int height, int width,
                            int query_index) {
    if (video_length <= 0) throw ContractError("video_length must be positive");
    if (query_index < 0 || query_index >= video_length) throw ContractError("query_index out of range");
    std::mt19937_64 rng(spec.seed);
    auto rand_int = [&rng](int lo, int hi) {  // inclusive
        return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
    };

    std::vector<SceneObject> objects;
    for (int i = 0; i < spec.num_objects; ++i) {
        SceneObject o;
        o.circle = (rng() & 1) != 0;
        o.cls = spec.num_classes > 1 ? rand_int(1, spec.num_classes - 1) : 0;
        o.radius = rand_int(std::max(2, height / 8), std::max(3, height / 4));
        o.cx = rand_int(0, width - 1);
        o.cy = rand_int(0, height - 1);
        o.vx = rand_int(0, 1) ? rand_int(1, 2) : -rand_int(1, 2);
        o.vy = rand_int(0, 1) ? rand_int(1, 2) : -rand_int(1, 2);
        objects.push_back(o);
    }

    LabeledVideo video;
    video.height = height;
    video.width = width;
    video.query_index = query_index;
    const RgbColor bg = palette_color(spec.background_class);

    for (int f = 0; f < video_length; ++f) {
        Tensor frame = Tensor::zeros({3, height, width});
        std::vector<std::uint8_t> label(static_cast<std::size_t>(height) * width,
                                        static_cast<std::uint8_t>(spec.background_class));
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) set_pixel(frame, x, y, bg);

        for (const SceneObject& o : objects) {
            const int ox = wrap(o.cx + o.vx * f, width);
            const int oy = wrap(o.cy + o.vy * f, height);
            const RgbColor col = palette_color(o.cls);
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    if (covers(o, ox, oy, x, y, width, height)) {
                        set_pixel(frame, x, y, col);
                        label[static_cast<std::size_t>(y) * width + x] = static_cast<std::uint8_t>(o.cls);
                    }
        }

        if (spec.occluder == OccluderPolicy::kOccludeQueryOnly && f == query_index) {
            // gray patch over part of each object; labels stay untouched
            for (const SceneObject& o : objects) {
                const int ox = wrap(o.cx + o.vx * f, width);
                const int oy = wrap(o.cy + o.vy * f, height);
                const int rx = o.radius;
                const int ry = std::max(1, (o.radius * 3) / 5);
                for (int y = 0; y < height; ++y)
                    for (int x = 0; x < width; ++x)
                        if (wrapped_delta(x, ox, width) <= rx && wrapped_delta(y, oy, height) <= ry)
                            set_pixel(frame, x, y, kOccluderColor);
            }
        }

        video.frames.push_back(std::move(frame));
        video.labels.push_back(std::move(label));
    }
    return video;
}

bool verify_occlusion(const LabeledVideo& video, int window) {
    const int q = video.query_index;
    const int h = video.height, w = video.width;
    const Tensor& qf = video.frames[static_cast<std::size_t>(q)];
    const auto& ql = video.labels[static_cast<std::size_t>(q)];
    const int lo = std::max(0, q - window);
    for (int p = 0; p < h * w; ++p) {
        const int cls = ql[static_cast<std::size_t>(p)];
        if (cls == 0 || cls == kIgnoreLabel) continue;
        const RgbColor c = palette_color(cls);
        const double r = qf.data[static_cast<std::size_t>(p)];
        const double g = qf.data[static_cast<std::size_t>(h) * w + p];
        const double b = qf.data[2 * static_cast<std::size_t>(h) * w + p];
        if (r == c.r && g == c.g && b == c.b) continue;  // not occluded
        bool found = false;
        for (int f = lo; f < q && !found; ++f)
            for (std::size_t j = 0; j < video.labels[static_cast<std::size_t>(f)].size(); ++j)
                if (video.labels[static_cast<std::size_t>(f)][j] == cls) {
                    found = true;
                    break;
                }
        if (!found) return false;
    }
    return true;
}

std::vector<int> sample_memory(int query_index, int t, SamplerMode mode, int window,
                               std::mt19937_64& rng) {
    if (t == 0) return {};
    if (mode == SamplerMode::kContinuous) {
        if (query_index < t)
            throw ContractError("continuous sampler needs " + std::to_string(t) + " past frames, query at " +
                                std::to_string(query_index));
        std::vector<int> idx(static_cast<std::size_t>(t));
        for (int i = 0; i < t; ++i) idx[static_cast<std::size_t>(i)] = query_index - t + i;
        return idx;
    }
    if (window < t) throw ContractError("sampler window smaller than memory length");
    const int lo = std::max(0, query_index - window);
    const int avail = query_index - lo;
    if (avail < t)
        throw ContractError("random sampler needs " + std::to_string(t) + " past frames, has " +
                            std::to_string(avail));
    std::vector<int> pool(static_cast<std::size_t>(avail));
    for (int i = 0; i < avail; ++i) pool[static_cast<std::size_t>(i)] = lo + i;
    for (int i = 0; i < t; ++i) {  // partial Fisher-Yates
        const int j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(avail - i));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(t));
    std::sort(pool.begin(), pool.end());
    return pool;
}

Tensor resize_bilinear(const Tensor& frame, int out_h, int out_w) {
    const int c = frame.shape[0], h = frame.shape[1], w = frame.shape[2];
    if (out_h == h && out_w == w) return frame;
    Tensor out = Tensor::zeros({c, out_h, out_w});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = frame.data.data() + static_cast<std::size_t>(ch) * h * w;
        double* oplane = out.data.data() + static_cast<std::size_t>(ch) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
            const int y0 = static_cast<int>(std::floor(fy));
            const int y1 = std::min(y0 + 1, h - 1);
            const double wy = fy - y0;
            for (int x = 0; x < out_w; ++x) {
                double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
                const int x0 = static_cast<int>(std::floor(fx));
                const int x1 = std::min(x0 + 1, w - 1);
                const double wx = fx - x0;
                oplane[y * out_w + x] =
                    (1 - wy) * ((1 - wx) * plane[y0 * w + x0] + wx * plane[y0 * w + x1]) +
                    wy * ((1 - wx) * plane[y1 * w + x0] + wx * plane[y1 * w + x1]);
            }
        }
    }
    return out;
}

std::vector<std::uint8_t> resize_nearest(const std::vector<std::uint8_t>& label, int h, int w, int out_h,
                                         int out_w) {
    if (out_h == h && out_w == w) return label;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(out_h) * out_w);
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const int iy = std::min(h - 1, static_cast<int>((y + 0.5) * sy));
        for (int x = 0; x < out_w; ++x) {
            const int ix = std::min(w - 1, static_cast<int>((x + 0.5) * sx));
            out[static_cast<std::size_t>(y) * out_w + x] = label[static_cast<std::size_t>(iy) * w + ix];
        }
    }
    return out;
}

namespace {

Tensor hflip_frame(const Tensor& frame) {
    Tensor out = frame;
    const int c = frame.shape[0], h = frame.shape[1], w = frame.shape[2];
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.data[(static_cast<std::size_t>(ch) * h + y) * w + x] =
                    frame.data[(static_cast<std::size_t>(ch) * h + y) * w + (w - 1 - x)];
    return out;
}

Tensor crop_pad_frame(const Tensor& frame, int oy, int ox, int crop) {
    const int c = frame.shape[0], h = frame.shape[1], w = frame.shape[2];
    Tensor out = Tensor::zeros({c, crop, crop});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < crop; ++y) {
            const int sy = y + oy;
            if (sy < 0 || sy >= h) continue;
            for (int x = 0; x < crop; ++x) {
                const int sx = x + ox;
                if (sx < 0 || sx >= w) continue;
                out.data[(static_cast<std::size_t>(ch) * crop + y) * crop + x] =
                    frame.data[(static_cast<std::size_t>(ch) * h + sy) * w + sx];
            }
        }
    return out;
}

}  // namespace

VideoClip augment(const VideoClip& clip, const AugmentParams& params, std::mt19937_64& rng) {
    const int h = clip.height, w = clip.width;
    const double span = params.max_ratio - params.min_ratio;
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double ratio = params.min_ratio + span * u;
    const int nh = std::max(1, static_cast<int>(std::lround(h * ratio)));
    const int nw = std::max(1, static_cast<int>(std::lround(w * ratio)));
    const int crop = params.crop;

    auto offset = [&rng](int extent, int c) {
        if (extent <= c) return 0;
        return static_cast<int>(rng() % static_cast<std::uint64_t>(extent - c + 1));
    };
    const int oy = offset(nh, crop);
    const int ox = offset(nw, crop);
    const bool flip = (static_cast<double>(rng() >> 11) * 0x1.0p-53) < params.hflip_prob;

    auto transform_frame = [&](const Tensor& f) {
        Tensor out = crop_pad_frame(resize_bilinear(f, nh, nw), oy, ox, crop);
        return flip ? hflip_frame(out) : out;
    };

    VideoClip out;
    out.height = crop;
    out.width = crop;
    out.query_index = clip.query_index;
    for (const Tensor& f : clip.memory) out.memory.push_back(transform_frame(f));
    out.query = transform_frame(clip.query);

    std::vector<std::uint8_t> lbl = resize_nearest(clip.label, h, w, nh, nw);
    std::vector<std::uint8_t> cropped(static_cast<std::size_t>(crop) * crop,
                                      static_cast<std::uint8_t>(kIgnoreLabel));
    for (int y = 0; y < crop; ++y) {
        const int sy = y + oy;
        if (sy < 0 || sy >= nh) continue;
        for (int x = 0; x < crop; ++x) {
            const int sx = x + ox;
            if (sx < 0 || sx >= nw) continue;
            cropped[static_cast<std::size_t>(y) * crop + x] = lbl[static_cast<std::size_t>(sy) * nw + sx];
        }
    }
    if (flip) {
        std::vector<std::uint8_t> flipped(cropped.size());
        for (int y = 0; y < crop; ++y)
            for (int x = 0; x < crop; ++x)
                flipped[static_cast<std::size_t>(y) * crop + x] =
                    cropped[static_cast<std::size_t>(y) * crop + (crop - 1 - x)];
        cropped = std::move(flipped);
    }
    out.label = std::move(cropped);
    return out;
}

std::vector<VideoClip> sliding_window_snippets(const LabeledVideo& video, int t, SamplerMode mode,
                                               int window, std::uint64_t test_seed) {
    const int len = static_cast<int>(video.frames.size());
    if (len <= t) throw ContractError("video length must exceed memory length");
    std::vector<VideoClip> clips;
    for (int q = t; q < len; ++q) {
        std::mt19937_64 rng(test_seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(q + 1)));
        std::vector<int> idx = sample_memory(q, t, mode, window, rng);
        VideoClip clip;
        clip.height = video.height;
        clip.width = video.width;
        clip.query_index = q;
        for (int i : idx) clip.memory.push_back(video.frames[static_cast<std::size_t>(i)]);
        clip.query = video.frames[static_cast<std::size_t>(q)];
        clip.label = video.labels[static_cast<std::size_t>(q)];
        clips.push_back(std::move(clip));
    }
    return clips;
}

VideoClip make_clip(const StoredClip& stored, int t, SamplerMode mode, std::mt19937_64& rng) {
    const int hist = static_cast<int>(stored.history.size());
    std::vector<int> idx = sample_memory(hist, t, mode, hist, rng);
    VideoClip clip;
    clip.height = stored.height;
    clip.width = stored.width;
    clip.query_index = hist;
    for (int i : idx) clip.memory.push_back(stored.history[static_cast<std::size_t>(i)]);
    clip.query = stored.query;
    clip.label = stored.label;
    return clip;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& is, const std::string& path) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw IoError("truncated file: " + path);
    return v;
}

void write_doubles(std::ostream& os, const std::vector<double>& d) {
    os.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * 8));
}

void read_doubles(std::istream& is, std::vector<double>& d, const std::string& path) {
    is.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * 8));
    if (!is) throw IoError("truncated file: " + path);
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write("TMAD", 4);
    write_u32(os, 1);
    write_u32(os, static_cast<std::uint32_t>(ds.size()));
    for (const StoredClip& c : ds) {
        write_u32(os, static_cast<std::uint32_t>(c.history.size()));
        write_u32(os, static_cast<std::uint32_t>(c.height));
        write_u32(os, static_cast<std::uint32_t>(c.width));
        for (const Tensor& f : c.history) write_doubles(os, f.data);
        write_doubles(os, c.query.data);
        os.write(reinterpret_cast<const char*>(c.label.data()),
                 static_cast<std::streamsize>(c.label.size()));
    }
    if (!os) throw IoError("write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "TMAD", 4) != 0) throw IoError("not a TMAD file: " + path);
    if (read_u32(is, path) != 1) throw IoError("unsupported TMAD version: " + path);
    const std::uint32_t count = read_u32(is, path);
    Dataset ds;
    for (std::uint32_t i = 0; i < count; ++i) {
        StoredClip c;
        const std::uint32_t t = read_u32(is, path);
        c.height = static_cast<int>(read_u32(is, path));
        c.width = static_cast<int>(read_u32(is, path));
        for (std::uint32_t f = 0; f < t; ++f) {
            Tensor frame = Tensor::zeros({3, c.height, c.width});
            read_doubles(is, frame.data, path);
            c.history.push_back(std::move(frame));
        }
        c.query = Tensor::zeros({3, c.height, c.width});
        read_doubles(is, c.query.data, path);
        c.label.resize(static_cast<std::size_t>(c.height) * c.width);
        is.read(reinterpret_cast<char*>(c.label.data()), static_cast<std::streamsize>(c.label.size()));
        if (!is) throw IoError("truncated file: " + path);
        ds.push_back(std::move(c));
    }
    return ds;
}

}  // namespace tma
