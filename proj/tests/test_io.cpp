#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "trear/checkpoint.hpp"
#include "trear/clip.hpp"
#include "trear/config.hpp"
#include "trear/image.hpp"

using namespace trear;
using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("trear_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Values already on the 1/255 grid round-trip through the 8-bit file exactly.
Image grid_image(std::size_t w, std::size_t h) {
    Image img(w, h);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                img.at(c, y, x) = static_cast<double>((c * 83 + y * 19 + x * 7) % 256) / 255.0;
    return img;
}

ClipPair grid_clip(const std::string& id, std::size_t frames, std::size_t side,
                   int label = 0) {
    ClipPair c;
    c.id = id;
    c.label = label;
    for (std::size_t i = 0; i < frames; ++i) {
        Image img = grid_image(side, side);
        img.at(0, 0, 0) = static_cast<double>(i % 256) / 255.0;
        DepthMap d(side, side, static_cast<std::uint16_t>(1000 * i));
        d.at(0, 0) = 65535;
        d.at(0, 1) = 0;
        c.rgb.push_back(std::move(img));
        c.depth.push_back(std::move(d));
    }
    return c;
}

}  // namespace

TEST_CASE("ppm round-trip") {
    fs::path dir = fresh_dir("ppm");
    Image img = grid_image(5, 3);
    img.at(0, 0, 0) = 0.0;
    img.at(1, 0, 0) = 1.0;
    write_ppm(img, dir / "a.ppm");
    Image back = read_ppm(dir / "a.ppm");
    REQUIRE(back.width == 5);
    REQUIRE(back.height == 3);
    CHECK(back.data == img.data);

    // Off-grid values land on the nearest 8-bit level.
    Image half(1, 1, 0.5);
    write_ppm(half, dir / "h.ppm");
    CHECK(read_ppm(dir / "h.ppm").at(0, 0, 0) == 128.0 / 255.0);

    // Header comments are part of the format.
    write_bytes(dir / "c.ppm", "P6\n# comment\n1 1\n255\n\0\0\0"s);
    Image commented = read_ppm(dir / "c.ppm");
    CHECK(commented.width == 1);
}

TEST_CASE("ppm rejects wrong maxval, magic, and truncation") {
    fs::path dir = fresh_dir("ppm_bad");
    write_bytes(dir / "maxval.ppm", "P6\n1 1\n254\n\0\0\0"s);
    CHECK_THROWS_AS(read_ppm(dir / "maxval.ppm"), FormatError);

    write_bytes(dir / "magic.ppm", "P5\n1 1\n255\n\0\0\0"s);
    CHECK_THROWS_AS(read_ppm(dir / "magic.ppm"), FormatError);

    write_bytes(dir / "short.ppm", "P6\n2 2\n255\n\0\0\0\0\0"s);
    CHECK_THROWS_AS(read_ppm(dir / "short.ppm"), FormatError);

    CHECK_THROWS_AS(read_ppm(dir / "absent.ppm"), IoError);
}

TEST_CASE("pgm16 round-trip keeps full range and big-endian layout") {
    fs::path dir = fresh_dir("pgm");
    DepthMap d(3, 2);
    d.at(0, 0) = 0;
    d.at(0, 1) = 65535;
    d.at(0, 2) = 0x1234;
    d.at(1, 0) = 1;
    d.at(1, 1) = 256;
    d.at(1, 2) = 40000;
    write_pgm16(d, dir / "d.pgm");
    DepthMap back = read_pgm16(dir / "d.pgm");
    REQUIRE(back.width == 3);
    REQUIRE(back.height == 2);
    CHECK(back.data == d.data);

    std::string bytes = read_bytes(dir / "d.pgm");
    std::string header = "P5\n3 2\n65535\n";
    REQUIRE(bytes.size() == header.size() + 12);
    // Third sample is 0x1234: high byte first on disk.
    CHECK(static_cast<unsigned char>(bytes[header.size() + 4]) == 0x12);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 5]) == 0x34);

    write_bytes(dir / "maxval.pgm", "P5\n1 1\n255\n\0"s);
    CHECK_THROWS_AS(read_pgm16(dir / "maxval.pgm"), FormatError);
    write_bytes(dir / "short.pgm", "P5\n2 1\n65535\n\0\0\0"s);
    CHECK_THROWS_AS(read_pgm16(dir / "short.pgm"), FormatError);
}

TEST_CASE("clip round-trip is bit-exact") {
    fs::path dir = fresh_dir("clip");
    ClipPair clip = grid_clip("0007", 4, 8, 2);
    fs::path root = write_clip(clip, dir);
    CHECK(root.filename() == "clip_0007");
    ClipPair back = read_clip(root);
    CHECK(back.id == "0007");
    CHECK(back.label == 2);
    REQUIRE(back.num_frames() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(back.rgb[i].data == clip.rgb[i].data);
        CHECK(back.depth[i].data == clip.depth[i].data);
        CHECK(back.depth[i].at(0, 0) == 65535);
    }
}

TEST_CASE("clip reader verifies the frame inventory") {
    fs::path dir = fresh_dir("clip_bad");
    ClipPair clip = grid_clip("x", 8, 8);
    fs::path root = write_clip(clip, dir);
    fs::remove(root / "depth_0007.pgm");
    CHECK_THROWS_AS(read_clip(root), FormatError);

    // Manifest missing a required field.
    fs::path broken = dir / "clip_broken";
    fs::create_directories(broken);
    write_bytes(broken / "manifest.txt", "id=broken\nlabel=0\nwidth=8\nheight=8\n");
    CHECK_THROWS_AS(read_clip(broken), FormatError);

    // A line without '='.
    write_bytes(broken / "manifest.txt", "id=broken\nlabel 0\n");
    CHECK_THROWS_AS(read_clip(broken), FormatError);
}

TEST_CASE("dataset manifest round-trip and validation") {
    fs::path dir = fresh_dir("manifest");
    std::vector<ManifestEntry> entries = {
        {"clip_0000", 0, "train"},
        {"clip_0001", 3, "test"},
        {dir / "clip_0002", 1, "train"},
    };
    fs::path man = dir / "data.tsv";
    write_dataset_manifest(entries, man);
    auto back = read_dataset_manifest(man);
    REQUIRE(back.size() == 3);
    CHECK(back[0].path == dir / "clip_0000");  // relative resolved to the manifest dir
    CHECK(back[0].label == 0);
    CHECK(back[0].split == "train");
    CHECK(back[1].label == 3);
    CHECK(back[1].split == "test");
    CHECK(back[2].path == dir / "clip_0002");  // absolute kept as is

    write_bytes(dir / "bad1.tsv", "clip_0000 0 train\n");
    CHECK_THROWS_AS(read_dataset_manifest(dir / "bad1.tsv"), FormatError);
    write_bytes(dir / "bad2.tsv", "clip_0000\tzero\ttrain\n");
    CHECK_THROWS_AS(read_dataset_manifest(dir / "bad2.tsv"), FormatError);
    write_bytes(dir / "bad3.tsv", "clip_0000\t0\tvalidation\n");
    CHECK_THROWS_AS(read_dataset_manifest(dir / "bad3.tsv"), FormatError);
}

TEST_CASE("checkpoint entries round-trip bitwise") {
    fs::path dir = fresh_dir("ckpt");
    std::vector<CkptEntry> entries = {
        {"a.w", {2, 3}, {0.0, -0.0, 1e-300, -1.5, 65535.0, 0.1}},
        {"a.b", {3}, {1.0, 2.0, 3.0}},
    };
    fs::path p = dir / "t.ckpt";
    write_checkpoint_entries(entries, p);
    auto back = read_checkpoint_entries(p);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].name == entries[i].name);
        CHECK(back[i].shape == entries[i].shape);
        REQUIRE(back[i].data.size() == entries[i].data.size());
        for (std::size_t j = 0; j < back[i].data.size(); ++j)
            CHECK(std::bit_cast<std::uint64_t>(back[i].data[j]) ==
                  std::bit_cast<std::uint64_t>(entries[i].data[j]));
    }

    write_bytes(dir / "magic.ckpt", "NOTACKPT99" + read_bytes(p).substr(10));
    CHECK_THROWS_AS(read_checkpoint_entries(dir / "magic.ckpt"), FormatError);

    std::string full = read_bytes(p);
    write_bytes(dir / "short.ckpt", full.substr(0, full.size() - 5));
    CHECK_THROWS_AS(read_checkpoint_entries(dir / "short.ckpt"), FormatError);

    // Payload size must match the declared shape on write.
    std::vector<CkptEntry> bad = {{"x", {2, 2}, {1.0}}};
    CHECK_THROWS_AS(write_checkpoint_entries(bad, dir / "bad.ckpt"), ContractError);
}

TEST_CASE("model checkpoints restore state and architecture") {
    fs::path dir = fresh_dir("model_ckpt");
    ModelConfig mc;
    mc.d_model = 8;
    mc.k = 3;
    mc.heads_encoder = 2;
    mc.heads_mutual = 2;
    mc.num_classes = 3;
    mc.fusion_mode = FusionMode::concat;
    mc.average_mode = AverageMode::probs;
    TrearModel model(mc);
    model.init(11);
    CropSpec crop;
    crop.mode = CropMode::random_per_frame;
    crop.resize_side = 40;
    crop.crop_side = 32;

    fs::path p = dir / "m.ckpt";
    save_checkpoint(model, crop, p);
    LoadedCheckpoint loaded = load_checkpoint(p);

    const ModelConfig& lc = loaded.model.config();
    CHECK(lc.d_model == 8);
    CHECK(lc.k == 3);
    CHECK(lc.fusion_mode == FusionMode::concat);
    CHECK(lc.average_mode == AverageMode::probs);
    CHECK(loaded.crop.resize_side == 40);
    CHECK(loaded.crop.crop_side == 32);
    // Restored models always evaluate with a deterministic center crop.
    CHECK(loaded.crop.mode == CropMode::center);

    const ParamStore& a = model.params();
    const ParamStore& b = loaded.model.params();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.at(i).name == b.at(i).name);
        CHECK(a.at(i).value == b.at(i).value);
    }

    // Saving the loaded model again reproduces the file byte for byte.
    fs::path p2 = dir / "m2.ckpt";
    save_checkpoint(loaded.model, loaded.crop, p2);
    CHECK(read_bytes(p) == read_bytes(p2));
}

TEST_CASE("checkpoint loader rejects structural damage") {
    fs::path dir = fresh_dir("ckpt_bad");
    // First entry must be the reserved config record.
    std::vector<CkptEntry> no_config = {{"w", {1}, {1.0}}};
    write_checkpoint_entries(no_config, dir / "nc.ckpt");
    CHECK_THROWS_AS(load_checkpoint(dir / "nc.ckpt"), FormatError);

    ModelConfig mc;
    mc.d_model = 8;
    mc.k = 2;
    mc.heads_encoder = 2;
    mc.heads_mutual = 2;
    mc.num_classes = 2;
    TrearModel model(mc);
    model.init(1);
    CropSpec crop;

    // Unknown parameter name.
    std::vector<CkptEntry> entries = {encode_config(mc, crop), {"bogus.w", {1}, {0.5}}};
    write_checkpoint_entries(entries, dir / "unknown.ckpt");
    CHECK_THROWS_AS(load_checkpoint(dir / "unknown.ckpt"), FormatError);

    // Wrong shape for a known parameter.
    entries = {encode_config(mc, crop), {"classifier.b", {3}, {0.0, 0.0, 0.0}}};
    write_checkpoint_entries(entries, dir / "shape.ckpt");
    CHECK_THROWS_AS(load_checkpoint(dir / "shape.ckpt"), FormatError);

    // Incomplete parameter set.
    entries = {encode_config(mc, crop)};
    write_checkpoint_entries(entries, dir / "empty.ckpt");
    CHECK_THROWS_AS(load_checkpoint(dir / "empty.ckpt"), FormatError);
}

TEST_CASE("train config parsing") {
    std::istringstream in(
        "# run description\n"
        "model.d_model = 16\n"
        "model.k=4\n"
        "model.fusion_mode=concat\n"
        "model.modality=both\n"
        "\n"
        "crop.mode=same_region\n"
        "crop.resize_side=32\n"
        "crop.crop_side=28\n"
        "train.epochs=7\n"
        "train.lr=0.001\n"
        "train.lr_decay_epoch=-1\n"
        "train.seed=99\n"
        "data.manifest=/tmp/m.tsv\n"
        "out.checkpoint=/tmp/m.ckpt\n");
    TrainConfig c = parse_train_config(in, "test");
    CHECK(c.model.d_model == 16);
    CHECK(c.model.k == 4);
    CHECK(c.model.fusion_mode == FusionMode::concat);
    CHECK(c.crop.mode == CropMode::same_region);
    CHECK(c.crop.resize_side == 32);
    CHECK(c.epochs == 7);
    CHECK(c.lr == 0.001);
    CHECK(c.lr_decay_epoch == -1);
    CHECK(c.seed == 99);
    CHECK(c.manifest == "/tmp/m.tsv");
    CHECK(c.checkpoint_out == "/tmp/m.ckpt");

    // Defaults survive when a key is absent.
    CHECK(c.batch_size == 4);
    CHECK(c.model.heads_encoder == 8);
}

TEST_CASE("train config round-trips through its own serialization") {
    TrainConfig c;
    c.model.d_model = 32;
    c.model.k = 6;
    c.model.heads_encoder = 4;
    c.model.dropout_rate = 0.25;
    c.model.fusion_mode = FusionMode::multiply;
    c.model.average_mode = AverageMode::probs;
    c.crop.mode = CropMode::center;
    c.lr = 3e-4;
    c.lr_decay_epoch = 12;
    c.seed = 5;
    c.manifest = "data/m.tsv";
    c.table_out = "out/table.txt";
    std::string text = serialize(c);
    std::istringstream in(text);
    TrainConfig back = parse_train_config(in, "roundtrip");
    CHECK(serialize(back) == text);
}

TEST_CASE("train config rejects malformed input") {
    std::istringstream no_eq("model.d_model=8\njust words\n");
    try {
        parse_train_config(no_eq, "cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("cfg:2") != std::string::npos);
    }

    std::istringstream unknown("model.depth=8\n");
    CHECK_THROWS_AS(parse_train_config(unknown, "cfg"), ConfigError);

    std::istringstream bad_num("train.lr=fast\n");
    CHECK_THROWS_AS(parse_train_config(bad_num, "cfg"), ConfigError);

    std::istringstream bad_bool("model.use_mutual=maybe\n");
    CHECK_THROWS_AS(parse_train_config(bad_bool, "cfg"), ConfigError);

    CHECK_THROWS_AS(load_train_config("/nonexistent/trear.cfg"), IoError);
}

TEST_CASE("learning rate schedule") {
    TrainConfig c;
    c.lr = 0.01;
    c.lr_decay_factor = 0.1;
    c.lr_decay_epoch = 3;
    CHECK(c.lr_at(0) == 0.01);
    CHECK(c.lr_at(2) == 0.01);
    CHECK(c.lr_at(3) == Catch::Approx(0.001));
    CHECK(c.lr_at(10) == Catch::Approx(0.001));
    c.lr_decay_epoch = -1;
    CHECK(c.lr_at(100) == 0.01);

    TrainConfig bad;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.crop.crop_side = 8;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
