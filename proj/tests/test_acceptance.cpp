#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "trear/train.hpp"

using namespace trear;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("trear_accept_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

PreparedClip random_prepared(std::uint64_t seed, std::size_t k, std::size_t side,
                             int label = 0) {
    RngStream r(seed, "accept-clip");
    PreparedClip c;
    c.k = k;
    c.side = side;
    c.label = label;
    std::size_t n = k * 3 * side * side;
    c.rgb.resize(n);
    c.depth.resize(n);
    for (double& v : c.rgb) v = r.next_double();
    for (double& v : c.depth) v = r.next_double();
    return c;
}

ForwardResult eval_forward(const TrearModel& m, const PreparedClip& c, Graph& g) {
    RngStream drop(0, "unused");
    return m.forward(g, c.rgb, c.depth, c.side, Mode::eval, drop);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(bool ok, const char* fmt, ...) {
    std::printf("[%s] ", ok ? "PASS" : "FAIL");
    va_list args;
    va_start(args, fmt);
    std::vprintf(fmt, args);
    va_end(args);
    std::printf("\n");
    std::fflush(stdout);
}

}  // namespace

TEST_CASE("C1 gradient fidelity") {
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string worst_block;
    for (std::uint64_t seed : {1ull, 2ull, 4ull, 5ull, 6ull}) {
        GradCheckReport r = grad_check(seed);
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_block = r.worst_block;
        }
    }
    double secs = seconds_since(t0);
    bool ok = worst < 1e-4 && secs < 120.0;
    report(ok, "C1 gradient fidelity: max rel err %.3g (worst block %s) over 5 seeds, %.1fs",
           worst, worst_block.c_str(), secs);
    REQUIRE(ok);
}

TEST_CASE("C2 attention stochasticity") {
    ModelConfig mc;
    mc.d_model = 16;
    mc.k = 5;
    mc.heads_encoder = 4;
    mc.heads_mutual = 2;
    mc.num_classes = 4;
    std::size_t maps_checked = 0;
    double worst_sum_err = 0.0;
    bool entries_ok = true;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        TrearModel model(mc);
        model.init(seed);
        for (std::uint64_t c = 0; c < 5; ++c) {
            Graph g;
            PreparedClip clip = random_prepared(seed * 100 + c, mc.k, 16);
            ForwardResult fr = eval_forward(model, clip, g);
            auto scan = [&](const std::vector<AttnMap>& maps) {
                for (const AttnMap& m : maps) {
                    ++maps_checked;
                    for (std::size_t i = 0; i < m.k; ++i) {
                        double sum = 0.0;
                        for (std::size_t j = 0; j < m.k; ++j) {
                            double v = m.w[i * m.k + j];
                            if (!(v > 0.0 && v < 1.0)) entries_ok = false;
                            sum += v;
                        }
                        worst_sum_err = std::max(worst_sum_err, std::fabs(sum - 1.0));
                    }
                }
            };
            scan(fr.self_maps);
            scan(fr.mutual_maps);
        }
    }
    bool ok = entries_ok && worst_sum_err < 1e-10 && maps_checked >= 50;
    report(ok,
           "C2 attention stochasticity: %zu maps over 50 forwards, worst row-sum error %.3g, "
           "entries in (0,1): %s",
           maps_checked, worst_sum_err, entries_ok ? "yes" : "no");
    REQUIRE(ok);
}

TEST_CASE("C3 permutation behavior") {
    ModelConfig mc;
    mc.d_model = 16;
    mc.k = 6;
    mc.heads_encoder = 2;
    mc.heads_mutual = 2;
    mc.num_classes = 3;

    PreparedClip clip = random_prepared(31, mc.k, 16);
    std::size_t flen = 3 * 16 * 16;
    auto permute = [&](const std::vector<std::size_t>& perm) {
        PreparedClip out = clip;
        for (std::size_t f = 0; f < perm.size(); ++f) {
            std::copy(clip.rgb.begin() + perm[f] * flen,
                      clip.rgb.begin() + (perm[f] + 1) * flen, out.rgb.begin() + f * flen);
            std::copy(clip.depth.begin() + perm[f] * flen,
                      clip.depth.begin() + (perm[f] + 1) * flen, out.depth.begin() + f * flen);
        }
        return out;
    };
    auto max_diff = [](const std::vector<double>& a, const std::vector<double>& b) {
        double m = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
        return m;
    };

    mc.use_positional_encoding = false;
    TrearModel plain(mc);
    plain.init(8);
    Graph g0;
    auto base = eval_forward(plain, clip, g0).clip_output.value();

    mc.use_positional_encoding = true;
    TrearModel with_pe(mc);
    with_pe.init(8);
    Graph g1;
    auto pe_base = eval_forward(with_pe, clip, g1).clip_output.value();

    RngStream perm_rng(9, "perm");
    std::vector<std::size_t> perm(mc.k);
    double worst_off = 0.0, best_on = 0.0;
    for (int t = 0; t < 10; ++t) {
        std::iota(perm.begin(), perm.end(), 0);
        perm_rng.shuffle(perm);
        PreparedClip shuffled = permute(perm);
        Graph ga, gb;
        worst_off = std::max(worst_off,
                             max_diff(eval_forward(plain, shuffled, ga).clip_output.value(),
                                      base));
        best_on = std::max(best_on,
                           max_diff(eval_forward(with_pe, shuffled, gb).clip_output.value(),
                                    pe_base));
    }
    bool ok = worst_off < 1e-8 && best_on > 1e-6;
    report(ok,
           "C3 permutation behavior: PE-off max logit drift %.3g over 10 permutations, "
           "PE-on max change %.3g",
           worst_off, best_on);
    REQUIRE(ok);
}

TEST_CASE("C4 positional encoding table") {
    const std::size_t k = 40, d = 16;
    PositionalEncodingTable pe = positional_encoding(k, d);
    bool row0_ok = true;
    for (std::size_t i = 0; i < d / 2; ++i)
        if (pe.at(0, 2 * i) != 0.0 || pe.at(0, 2 * i + 1) != 1.0) row0_ok = false;
    double sin1_err = std::fabs(pe.at(1, 0) - std::sin(1.0));

    double rot_err = 0.0;
    for (std::size_t i = 0; i < d / 2; ++i) {
        double omega = std::pow(10000.0, -2.0 * static_cast<double>(i) / d);
        for (std::size_t s = 1; s <= 16; ++s) {
            double cd = std::cos(s * omega), sd = std::sin(s * omega);
            for (std::size_t pos = 0; pos + s < k; ++pos) {
                double sin_shift = pe.at(pos, 2 * i) * cd + pe.at(pos, 2 * i + 1) * sd;
                double cos_shift = pe.at(pos, 2 * i + 1) * cd - pe.at(pos, 2 * i) * sd;
                rot_err = std::max(rot_err, std::fabs(pe.at(pos + s, 2 * i) - sin_shift));
                rot_err = std::max(rot_err, std::fabs(pe.at(pos + s, 2 * i + 1) - cos_shift));
            }
        }
    }
    bool ok = row0_ok && sin1_err < 1e-12 && rot_err < 1e-10;
    report(ok,
           "C4 positional encoding: row 0 alternates 0/1: %s, |PE(1,0)-sin 1| = %.3g, "
           "rotation recurrence error %.3g for shifts <= 16",
           row0_ok ? "yes" : "no", sin1_err, rot_err);
    REQUIRE(ok);
}

TEST_CASE("C5 overfit sanity") {
    auto t0 = std::chrono::steady_clock::now();
    fs::path dir = fresh_dir("c5");
    GenConfig gen;
    gen.textures = 2;
    gen.motions = 2;
    gen.clips_per_class = 2;
    gen.test_per_class = 0;
    gen.frames = 12;
    gen.side = 32;
    gen.seed = 5;
    Dataset ds = load_dataset(generate_synthetic_dataset(gen, dir), 4);

    TrainConfig cfg;
    cfg.model.d_model = 64;
    cfg.model.k = 8;
    cfg.model.heads_encoder = 8;
    cfg.model.heads_mutual = 8;
    cfg.model.num_classes = 4;
    cfg.crop.resize_side = 32;
    cfg.crop.crop_side = 28;
    cfg.epochs = 200;
    cfg.batch_size = 4;
    cfg.lr = 1e-3;
    cfg.lr_decay_epoch = -1;
    cfg.seed = 1;

    TrainResult r = train_on(cfg, ds);
    long reached = -1;
    for (const MetricsRow& row : r.log)
        if (row.train_acc == 1.0) {
            reached = static_cast<long>(row.epoch);
            break;
        }
    double secs = seconds_since(t0);
    bool ok = reached >= 0 && secs < 600.0;
    report(ok, "C5 overfit sanity: %s (epoch %ld of 200) at d_model=64 k=8, %.1fs",
           reached >= 0 ? "100% train accuracy" : "train accuracy never reached 100%",
           reached, secs);
    REQUIRE(ok);
}

TEST_CASE("C6 fusion necessity") {
    auto t0 = std::chrono::steady_clock::now();
    fs::path dir = fresh_dir("c6");
    GenConfig gen;
    gen.textures = 2;
    gen.motions = 2;
    gen.clips_per_class = 20;
    gen.test_per_class = 10;
    gen.frames = 12;
    gen.side = 32;
    gen.seed = 7;
    Dataset ds = load_dataset(generate_synthetic_dataset(gen, dir), 4);

    TrainConfig base;
    base.model.d_model = 32;
    base.model.k = 8;
    base.model.heads_encoder = 4;
    base.model.heads_mutual = 4;
    base.model.num_classes = 4;
    base.crop.resize_side = 32;
    base.crop.crop_side = 28;
    base.epochs = 30;
    base.batch_size = 4;
    base.lr = 1e-3;
    base.lr_decay_epoch = -1;

    auto run_mean = [&](Modality mo, bool mutual) {
        TrainConfig cfg = make_variant(base, mo, mutual, FusionMode::add,
                                       CropMode::random_per_frame);
        double sum = 0.0;
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            cfg.seed = seed;
            double acc = train_on(cfg, ds).final_test_acc;
            std::printf("  c6 run: %s%s seed %llu: test acc %.4f\n",
                        to_string(mo).c_str(), mutual ? "+mutual" : "",
                        static_cast<unsigned long long>(seed), acc);
            std::fflush(stdout);
            sum += acc;
        }
        return sum / 3.0;
    };

    double rgb_mean = run_mean(Modality::rgb, false);
    double depth_mean = run_mean(Modality::depth, false);
    double mutual_mean = run_mean(Modality::both, true);
    double direct_mean = run_mean(Modality::both, false);

    double single_best = std::max(rgb_mean, depth_mean);
    bool ok = rgb_mean <= 0.60 && depth_mean <= 0.60 && mutual_mean >= 0.90 &&
              mutual_mean >= direct_mean && mutual_mean - single_best >= 0.20;
    report(ok,
           "C6 fusion necessity: rgb %.3f, depth %.3f, mutual-add %.3f, direct-add %.3f "
           "(3-run means), %.0fs",
           rgb_mean, depth_mean, mutual_mean, direct_mean, seconds_since(t0));
    REQUIRE(ok);
}

TEST_CASE("C7 crop ablation harness") {
    fs::path dir = fresh_dir("c7");
    GenConfig gen;
    gen.textures = 2;
    gen.motions = 2;
    gen.clips_per_class = 2;
    gen.test_per_class = 1;
    gen.frames = 6;
    gen.side = 32;
    gen.seed = 9;
    Dataset ds = load_dataset(generate_synthetic_dataset(gen, dir), 4);

    TrainConfig base;
    base.model.d_model = 16;
    base.model.k = 4;
    base.model.heads_encoder = 2;
    base.model.heads_mutual = 2;
    base.model.ffn_hidden = 32;
    base.model.num_classes = 4;
    base.crop.resize_side = 32;
    base.crop.crop_side = 28;
    base.epochs = 2;
    base.batch_size = 4;
    base.lr = 1e-3;
    base.seed = 1;

    std::vector<AblateRow> rows = ablate(base, ds);
    bool count_ok = rows.size() == 14;
    std::size_t random_rows = 0, same_rows = 0;
    bool accs_ok = true;
    std::set<std::string> crop_variants;
    for (const AblateRow& r : rows) {
        if (!(r.test_acc >= 0.0 && r.test_acc <= 1.0)) accs_ok = false;
        if (r.section == "crop") {
            crop_variants.insert(r.variant);
            if (r.crop_mode == CropMode::random_per_frame) ++random_rows;
            if (r.crop_mode == CropMode::same_region) ++same_rows;
        }
    }
    bool modes_ok = random_rows == 3 && same_rows == 3 && crop_variants.size() == 3;
    bool ok = count_ok && modes_ok && accs_ok;
    std::printf("%s", ablate_table(rows).c_str());
    report(ok,
           "C7 crop ablation: %zu rows, crop section covers %zu variants x both modes under "
           "one seed",
           rows.size(), crop_variants.size());
    REQUIRE(ok);
}

TEST_CASE("C8 determinism and persistence") {
    fs::path dir = fresh_dir("c8");
    GenConfig gen;
    gen.textures = 2;
    gen.motions = 2;
    gen.clips_per_class = 2;
    gen.test_per_class = 1;
    gen.frames = 3;
    gen.side = 16;
    gen.seed = 3;
    Dataset ds = load_dataset(generate_synthetic_dataset(gen, dir), 4);

    TrainConfig cfg;
    cfg.model.d_model = 8;
    cfg.model.k = 2;
    cfg.model.heads_encoder = 2;
    cfg.model.heads_mutual = 2;
    cfg.model.ffn_hidden = 16;
    cfg.model.num_classes = 4;
    cfg.crop.resize_side = 16;
    cfg.crop.crop_side = 16;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.lr = 1e-3;
    cfg.seed = 1;

    TrainResult a = train_on(cfg, ds);
    TrainResult b = train_on(cfg, ds);
    save_checkpoint(a.model, cfg.crop, dir / "a.ckpt");
    save_checkpoint(b.model, cfg.crop, dir / "b.ckpt");
    bool ckpt_bitwise = read_bytes(dir / "a.ckpt") == read_bytes(dir / "b.ckpt");

    // Depth boundary values survive the on-disk clip format.
    ClipPair clip;
    clip.id = "bounds";
    clip.label = 1;
    for (int f = 0; f < 2; ++f) {
        Image img(16, 16, 128.0 / 255.0);
        img.at(0, 0, 0) = 0.0;
        img.at(1, 0, 0) = 1.0;
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 16; ++x)
                img.at(2, y, x) = static_cast<double>((y * 16 + x) % 256) / 255.0;
        DepthMap d(16, 16, static_cast<std::uint16_t>(30000 + f));
        d.at(0, 0) = 0;
        d.at(0, 1) = 65535;
        d.at(15, 15) = 1;
        clip.rgb.push_back(std::move(img));
        clip.depth.push_back(std::move(d));
    }
    fs::path root = write_clip(clip, dir);
    ClipPair back = read_clip(root);
    bool clip_bitwise = back.num_frames() == 2;
    for (std::size_t f = 0; f < 2 && clip_bitwise; ++f)
        clip_bitwise = back.rgb[f].data == clip.rgb[f].data &&
                       back.depth[f].data == clip.depth[f].data;

    // Checkpoint round-trip: reload, evaluate, and re-save.
    double acc_before = evaluate_model(a.model, ds.test, cfg.crop).accuracy;
    LoadedCheckpoint loaded = load_checkpoint(dir / "a.ckpt");
    double acc_after = evaluate_model(loaded.model, ds.test, loaded.crop).accuracy;
    save_checkpoint(loaded.model, loaded.crop, dir / "a2.ckpt");
    CropSpec center = cfg.crop;
    center.mode = CropMode::center;
    save_checkpoint(a.model, center, dir / "a_center.ckpt");
    bool roundtrip = read_bytes(dir / "a2.ckpt") == read_bytes(dir / "a_center.ckpt") &&
                     acc_before == acc_after;

    bool ok = ckpt_bitwise && clip_bitwise && roundtrip;
    report(ok,
           "C8 determinism: repeated run checkpoints bitwise-equal: %s, clip round-trip "
           "bit-exact with 0/65535 depth: %s, checkpoint reload preserves accuracy (%.4f) "
           "and bytes: %s",
           ckpt_bitwise ? "yes" : "no", clip_bitwise ? "yes" : "no", acc_after,
           roundtrip ? "yes" : "no");
    REQUIRE(ok);
}

TEST_CASE("C9 attention export") {
    fs::path dir = fresh_dir("c9");
    ModelConfig mc;
    mc.d_model = 16;
    mc.k = 8;
    mc.heads_encoder = 4;
    mc.heads_mutual = 2;
    mc.num_classes = 4;
    TrearModel model(mc);
    model.init(17);
    PreparedClip clip = random_prepared(18, 8, 16);

    auto written = export_attention(model, clip, dir / "attn");
    std::set<std::string> names;
    for (const fs::path& p : written) names.insert(p.filename().string());
    std::set<std::string> expected = {"rgb_0_0.csv",  "rgb_0_1.csv",  "rgb_0_2.csv",
                                      "rgb_0_3.csv",  "depth_0_0.csv", "depth_0_1.csv",
                                      "depth_0_2.csv", "depth_0_3.csv",
                                      "mutual_rgb2depth.csv", "mutual_depth2rgb.csv"};
    bool names_ok = names == expected;

    bool shape_ok = true, stochastic_ok = true;
    for (const fs::path& p : written) {
        std::ifstream in(p);
        std::string header;
        if (!std::getline(in, header) || header != "0,1,2,3,4,5,6,7") shape_ok = false;
        std::size_t rows = 0;
        std::string line;
        while (std::getline(in, line)) {
            ++rows;
            std::istringstream ls(line);
            std::string cell;
            double sum = 0.0;
            std::size_t cols = 0;
            while (std::getline(ls, cell, ',')) {
                sum += std::stod(cell);
                ++cols;
            }
            if (cols != 8) shape_ok = false;
            if (std::fabs(sum - 1.0) > 1e-10) stochastic_ok = false;
        }
        if (rows != 8) shape_ok = false;
    }
    bool ok = names_ok && shape_ok && stochastic_ok;
    report(ok,
           "C9 attention export: %zu csv maps for an 8-frame clip, full name set: %s, "
           "8x8 shapes: %s, rows sum to 1 within 1e-10: %s",
           written.size(), names_ok ? "yes" : "no", shape_ok ? "yes" : "no",
           stochastic_ok ? "yes" : "no");
    REQUIRE(ok);
}
