// Command-line front end: dataset generation, training, evaluation,
// gradient checking, and attention-map export.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tma/checkpoint.hpp"
#include "tma/config_file.hpp"
#include "tma/data.hpp"
#include "tma/gradcheck_suite.hpp"
#include "tma/metrics.hpp"
#include "tma/model.hpp"
#include "tma/ppm.hpp"
#include "tma/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerification = 2;
constexpr int kExitIo = 3;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

bool env_seed_override(std::uint64_t& seed) {
    const char* env = std::getenv("TMA_SEED");
    if (!env || !*env) return false;
    seed = std::stoull(env);
    return true;
}

struct GenOptions {
    std::string out;
    int clips = 8;
    int size = 32;
    int length = 30;
    std::string occlude = "none";
    std::uint64_t seed = 0;
    int objects = 1;
    int classes = 4;
    bool verify = false;
};

int cmd_gen(const GenOptions& o) {
    if (o.clips <= 0) {
        std::cerr << "error: empty dataset (--clips must be positive)\n";
        return kExitUsage;
    }
    tma::OccluderPolicy policy = tma::OccluderPolicy::kNone;
    if (o.occlude == "query") policy = tma::OccluderPolicy::kOccludeQueryOnly;
    else if (o.occlude != "none") {
        std::cerr << "error: --occlude must be none or query\n";
        return kExitUsage;
    }

    std::uint64_t seed = o.seed;
    env_seed_override(seed);
    const int query_index = std::min(20, o.length - 1);
    const int window = std::min(10, query_index);

    tma::Dataset ds;
    for (int i = 0; i < o.clips; ++i) {
        tma::SyntheticSceneSpec spec;
        spec.num_objects = o.objects;
        spec.num_classes = o.classes;
        spec.occluder = policy;
        spec.seed = mix_seed(seed, static_cast<std::uint64_t>(i) + 1);
        tma::LabeledVideo video = tma::generate_video(spec, o.length, o.size, o.size, query_index);
        if (o.verify && policy != tma::OccluderPolicy::kNone && !tma::verify_occlusion(video, window)) {
            std::cerr << "verification failure: occluder invariant violated in clip " << i << "\n";
            return kExitVerification;
        }
        tma::StoredClip clip;
        clip.height = o.size;
        clip.width = o.size;
        for (int f = query_index - window; f < query_index; ++f)
            clip.history.push_back(video.frames[static_cast<std::size_t>(f)]);
        clip.query = video.frames[static_cast<std::size_t>(query_index)];
        clip.label = video.labels[static_cast<std::size_t>(query_index)];
        ds.push_back(std::move(clip));
    }
    tma::save_dataset(o.out, ds);
    std::cout << "wrote " << ds.size() << " clips to " << o.out << "\n";
    return kExitOk;
}

struct TrainOptions {
    std::string config_path;
    std::string data;
    std::string out;
    std::string resume;
    std::vector<std::string> overrides;
};

tma::RunConfig effective_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    tma::RunConfig cfg;
    if (!config_path.empty()) cfg = tma::parse_config_file(config_path);
    for (const std::string& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos) throw tma::ContractError("--set expects key=value, got '" + ov + "'");
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
            return s;
        };
        cfg.set(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
    }
    env_seed_override(cfg.train.seed);
    return cfg;
}

int cmd_train(const TrainOptions& o) {
    tma::RunConfig cfg = effective_config(o.config_path, o.overrides);
    tma::Dataset ds = tma::load_dataset(o.data);

    std::unique_ptr<tma::TMANet> model;
    tma::SgdState state;
    if (!o.resume.empty()) {
        tma::LoadedCheckpoint lc = tma::load_checkpoint(o.resume);
        model = std::move(lc.model);
        state = std::move(lc.state);
    } else {
        model = std::make_unique<tma::TMANet>(cfg.model, cfg.train.seed);
    }

    std::filesystem::create_directories(o.out);
    std::ofstream cfg_out(o.out + "/config.txt");
    cfg_out << cfg.to_text();
    std::ofstream log(o.out + "/train.log");
    if (!cfg_out || !log) throw tma::IoError("cannot write into output directory: " + o.out);

    tma::run_training(*model, state, cfg.train, ds, log);
    tma::save_checkpoint(o.out + "/checkpoint.tmac", *model, &state);
    std::cout << "checkpoint written to " << o.out << "/checkpoint.tmac\n";
    return kExitOk;
}

struct EvalOptions {
    std::string ckpt;
    std::string data;
    std::string sampler = "continuous";
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalOptions& o) {
    tma::LoadedCheckpoint lc = tma::load_checkpoint(o.ckpt);
    tma::Dataset ds = tma::load_dataset(o.data);
    tma::EvalOptions opts;
    opts.sampler = (o.sampler == "random") ? tma::SamplerMode::kRandom : tma::SamplerMode::kContinuous;
    opts.seed = o.seed;
    env_seed_override(opts.seed);
    tma::IouResult r = tma::evaluate(*lc.model, ds, opts);
    std::cout << tma::format_report(r);
    return kExitOk;
}

int cmd_gradcheck() {
    constexpr double kTol = 1e-4;
    bool ok = true;
    std::string worst_op;
    double worst_err = 0.0;
    for (const auto& [name, err] : tma::op_gradcheck_suite()) {
        const bool pass = err < kTol;
        std::printf("op %-26s max_rel_err %.3e  %s\n", name.c_str(), err, pass ? "PASS" : "FAIL");
        if (err > worst_err) {
            worst_err = err;
            worst_op = name;
        }
        ok = ok && pass;
    }
    tma::TMANet model(tma::tiny_gradcheck_config(), 7);
    const double e2e = tma::model_grad_check(model, tma::tiny_gradcheck_clip());
    const bool pass = e2e < kTol;
    std::printf("op %-26s max_rel_err %.3e  %s\n", "end_to_end_loss", e2e, pass ? "PASS" : "FAIL");
    if (e2e > worst_err) {
        worst_err = e2e;
        worst_op = "end_to_end_loss";
    }
    ok = ok && pass;
    if (!ok) {
        std::cerr << "gradcheck failed; worst op: " << worst_op << " (" << worst_err << ")\n";
        return kExitVerification;
    }
    return kExitOk;
}

struct DemoOptions {
    std::string ckpt;
    std::string data;
    std::string out = ".";
    int clip = 0;
    int pixel_x = -1;
    int pixel_y = -1;
    bool dump_attention = false;
    std::string sampler = "continuous";
};

int cmd_demo(const DemoOptions& o) {
    tma::LoadedCheckpoint lc = tma::load_checkpoint(o.ckpt);
    tma::TMANet& model = *lc.model;
    tma::Dataset ds = tma::load_dataset(o.data);
    if (o.clip < 0 || o.clip >= static_cast<int>(ds.size()))
        throw tma::IoError("clip index " + std::to_string(o.clip) + " out of range for " + o.data);

    std::mt19937_64 rng(1234567);
    tma::VideoClip clip =
        tma::make_clip(ds[static_cast<std::size_t>(o.clip)], model.config().memory_length,
                       o.sampler == "random" ? tma::SamplerMode::kRandom : tma::SamplerMode::kContinuous,
                       rng);
    tma::Tape tape;
    tma::ForwardResult fwd = model.forward(tape, clip.memory, clip.query);
    std::vector<std::uint8_t> pred = tma::argmax_labels(tape.value(fwd.main_logits));

    std::filesystem::create_directories(o.out);
    tma::write_ppm(o.out + "/query.ppm", clip.width, clip.height, tma::frame_to_rgb(clip.query));
    tma::write_ppm(o.out + "/pred.ppm", clip.width, clip.height, tma::labels_to_rgb(pred));
    tma::write_ppm(o.out + "/label.ppm", clip.width, clip.height, tma::labels_to_rgb(clip.label));

    if (o.dump_attention) {
        if (!fwd.attention) {
            std::cerr << "verification failure: baseline checkpoint (T=0) has no attention map\n";
            return kExitVerification;
        }
        const tma::Tensor& s = tape.value(*fwd.attention);
        const int os = model.config().output_stride();
        const int fh = clip.height / os, fw = clip.width / os;
        const int t = model.config().memory_length;
        int px = o.pixel_x >= 0 ? o.pixel_x : clip.width / 2;
        int py = o.pixel_y >= 0 ? o.pixel_y : clip.height / 2;
        const int row = (py / os) * fw + (px / os);
        double sum = 0.0, peak = 0.0;
        for (int j = 0; j < s.shape[1]; ++j) {
            sum += s.data[static_cast<std::size_t>(row) * s.shape[1] + j];
            peak = std::max(peak, s.data[static_cast<std::size_t>(row) * s.shape[1] + j]);
        }
        for (int f = 0; f < t; ++f) {
            std::vector<double> heat(static_cast<std::size_t>(fh) * fw);
            for (int p = 0; p < fh * fw; ++p)
                heat[static_cast<std::size_t>(p)] =
                    s.data[static_cast<std::size_t>(row) * s.shape[1] + f * fh * fw + p] / peak;
            tma::write_ppm(o.out + "/attention_t" + std::to_string(f) + ".ppm", fw, fh,
                           tma::heat_to_rgb(heat));
        }
        std::printf("attention row for pixel (%d,%d): sum %.9f over %d maps\n", px, py, sum, t);
        if (std::abs(sum - 1.0) > 1e-6) {
            std::cerr << "verification failure: attention row does not sum to 1\n";
            return kExitVerification;
        }
    }
    std::cout << "demo images written to " << o.out << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TMANet video semantic segmentation (desk scale)"};
    app.require_subcommand(1);

    GenOptions gen;
    auto* sgen = app.add_subcommand("gen", "generate a synthetic TMAD dataset");
    sgen->add_option("--out", gen.out, "output TMAD file")->required();
    sgen->add_option("--clips", gen.clips, "number of clips");
    sgen->add_option("--size", gen.size, "frame height/width");
    sgen->add_option("--length", gen.length, "source video length");
    sgen->add_option("--occlude", gen.occlude, "occluder policy: none|query");
    sgen->add_option("--seed", gen.seed, "base RNG seed");
    sgen->add_option("--objects", gen.objects, "objects per scene");
    sgen->add_option("--classes", gen.classes, "number of classes incl. background");
    sgen->add_flag("--verify", gen.verify, "check the occluder invariant");

    TrainOptions train;
    auto* strain = app.add_subcommand("train", "train a model");
    strain->add_option("--config", train.config_path, "flat key=value config file");
    strain->add_option("--data", train.data, "TMAD dataset")->required();
    strain->add_option("--out", train.out, "output directory")->required();
    strain->add_option("--resume", train.resume, "checkpoint to resume from");
    strain->add_option("--set", train.overrides, "config override key=value");

    EvalOptions eval;
    auto* seval = app.add_subcommand("eval", "evaluate a checkpoint");
    seval->add_option("--ckpt", eval.ckpt, "TMAC checkpoint")->required();
    seval->add_option("--data", eval.data, "TMAD dataset")->required();
    seval->add_option("--sampler", eval.sampler, "memory sampler: continuous|random");
    seval->add_option("--seed", eval.seed, "evaluation seed");

    std::string gradcheck_size = "tiny";
    auto* sgrad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    sgrad->add_option("--size", gradcheck_size, "suite size (tiny)");

    DemoOptions demo;
    auto* sdemo = app.add_subcommand("demo", "segment one clip and export PPM images");
    sdemo->add_option("--ckpt", demo.ckpt, "TMAC checkpoint")->required();
    sdemo->add_option("--data", demo.data, "TMAD dataset")->required();
    sdemo->add_option("--clip", demo.clip, "clip index");
    sdemo->add_option("--out", demo.out, "output directory");
    sdemo->add_option("--pixel-x", demo.pixel_x, "query pixel x for the attention dump");
    sdemo->add_option("--pixel-y", demo.pixel_y, "query pixel y for the attention dump");
    sdemo->add_flag("--dump-attention", demo.dump_attention, "export per-frame attention heat maps");
    sdemo->add_option("--sampler", demo.sampler, "memory sampler: continuous|random");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sgen->parsed()) return cmd_gen(gen);
        if (strain->parsed()) return cmd_train(train);
        if (seval->parsed()) return cmd_eval(eval);
        if (sgrad->parsed()) {
            if (gradcheck_size != "tiny") {
                std::cerr << "error: only --size tiny is supported\n";
                return kExitUsage;
            }
            return cmd_gradcheck();
        }
        if (sdemo->parsed()) return cmd_demo(demo);
    } catch (const tma::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
