#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "trear/trear.hpp"

namespace {

int cmd_gen_data(const trear::GenConfig& gen, const std::string& out_dir) {
    std::filesystem::path manifest = trear::generate_synthetic_dataset(gen, out_dir);
    std::size_t total = gen.num_classes() * (gen.clips_per_class + gen.test_per_class);
    std::printf("wrote %zu clips (%zu classes) under %s\n", total, gen.num_classes(),
                out_dir.c_str());
    std::printf("manifest: %s\n", manifest.string().c_str());
    return 0;
}

int cmd_train(const std::string& config_path) {
    trear::TrainConfig cfg = trear::load_train_config(config_path);
    trear::TrainResult result = trear::train(cfg);
    if (!result.log.empty()) {
        const trear::MetricsRow& last = result.log.back();
        std::printf("epoch %zu  loss %.6f  train_acc %.4f  test_acc %.4f\n", last.epoch,
                    last.train_loss, last.train_acc, last.test_acc);
    }
    std::printf("final train_acc %.4f  test_acc %.4f\n", result.final_train_acc,
                result.final_test_acc);
    if (!cfg.checkpoint_out.empty())
        std::printf("checkpoint: %s\n", cfg.checkpoint_out.c_str());
    if (!cfg.metrics_out.empty()) std::printf("metrics: %s\n", cfg.metrics_out.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest,
             const std::string& split) {
    trear::LoadedCheckpoint loaded = trear::load_checkpoint(ckpt_path);
    const trear::ModelConfig& mc = loaded.model.config();
    trear::Dataset ds = trear::load_dataset(manifest, mc.num_classes);
    const std::vector<trear::ClipPair>& clips = split == "train" ? ds.train : ds.test;
    if (clips.empty()) throw trear::DataError("split '" + split + "' is empty");
    trear::EvalResult r = trear::evaluate_model(loaded.model, clips, loaded.crop);
    std::printf("%s accuracy: %.4f (%zu/%zu)\n", split.c_str(), r.accuracy, r.correct,
                r.total);
    std::printf("confusion (rows=true, cols=pred):\n");
    for (std::size_t i = 0; i < mc.num_classes; ++i) {
        for (std::size_t j = 0; j < mc.num_classes; ++j)
            std::printf("%s%zu", j ? " " : "  ", r.confusion[i * mc.num_classes + j]);
        std::printf("\n");
    }
    return 0;
}

int cmd_grad_check(std::uint64_t seed, std::size_t count) {
    bool all_ok = true;
    for (std::size_t i = 0; i < count; ++i) {
        trear::GradCheckReport report = trear::grad_check(seed + i);
        bool ok = report.ok();
        all_ok = all_ok && ok;
        std::printf("seed %llu: max rel err %.3e (%s) [%s]\n",
                    static_cast<unsigned long long>(seed + i), report.max_rel_err,
                    report.worst_block.c_str(), ok ? "ok" : "FAIL");
    }
    return all_ok ? 0 : 1;
}

int cmd_export_attn(const std::string& ckpt_path, const std::string& clip_dir,
                    const std::string& out_dir) {
    trear::LoadedCheckpoint loaded = trear::load_checkpoint(ckpt_path);
    trear::ClipPair clip = trear::read_clip(clip_dir);
    trear::RngStream unused(0, "export-crop");
    trear::PreparedClip prep =
        trear::preprocess_clip(clip, loaded.model.config().k, loaded.crop, unused);
    auto written = trear::export_attention(loaded.model, prep, out_dir);
    for (const auto& p : written) std::printf("%s\n", p.string().c_str());
    return 0;
}

int cmd_ablate(const std::string& config_path) {
    trear::TrainConfig cfg = trear::load_train_config(config_path);
    if (cfg.manifest.empty()) throw trear::ConfigError("data.manifest is required");
    trear::Dataset ds = trear::load_dataset(cfg.manifest, cfg.model.num_classes);
    std::vector<trear::AblateRow> rows = trear::ablate(cfg, ds);
    std::string table = trear::ablate_table(rows);
    std::fputs(table.c_str(), stdout);
    if (!cfg.table_out.empty()) {
        std::ofstream out(cfg.table_out);
        if (!out) throw trear::IoError("cannot open for writing: " + cfg.table_out);
        out << table;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RGB-D clip classifier: data generation, training, evaluation"};
    app.require_subcommand(1);

    trear::GenConfig gen;
    std::string gen_out = "data";
    std::vector<std::size_t> gen_classes;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic RGB-D dataset");
    gen_cmd->add_option("--classes", gen_classes, "texture and motion class counts")
        ->expected(2);
    gen_cmd->add_option("--clips-per-class", gen.clips_per_class, "train clips per class");
    gen_cmd->add_option("--test-per-class", gen.test_per_class, "test clips per class");
    gen_cmd->add_option("--frames", gen.frames, "frames per clip");
    gen_cmd->add_option("--side", gen.side, "frame side length");
    gen_cmd->add_option("--seed", gen.seed, "generator seed");
    gen_cmd->add_option("--out", gen_out, "output directory");

    std::string train_config;
    auto* train_cmd = app.add_subcommand("train", "train from a config file");
    train_cmd->add_option("--config", train_config, "config file")->required();

    std::string eval_ckpt, eval_manifest, eval_split = "test";
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest split");
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest")->required();
    eval_cmd->add_option("--split", eval_split, "train or test");

    std::uint64_t gc_seed = 1;
    std::size_t gc_count = 1;
    auto* gc_cmd = app.add_subcommand("grad-check", "compare backward against finite differences");
    gc_cmd->add_option("--seed", gc_seed, "first seed");
    gc_cmd->add_option("--count", gc_count, "number of seeds");

    std::string ea_ckpt, ea_clip, ea_out = "attn";
    auto* ea_cmd = app.add_subcommand("export-attn", "write attention maps for one clip");
    ea_cmd->add_option("--ckpt", ea_ckpt, "checkpoint file")->required();
    ea_cmd->add_option("--clip", ea_clip, "clip directory")->required();
    ea_cmd->add_option("--out", ea_out, "output directory");

    std::string ablate_config;
    auto* ablate_cmd = app.add_subcommand("ablate", "train the fusion and crop variants");
    ablate_cmd->add_option("--config", ablate_config, "config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) {
            if (gen_classes.size() == 2) {
                gen.textures = gen_classes[0];
                gen.motions = gen_classes[1];
            }
            return cmd_gen_data(gen, gen_out);
        }
        if (train_cmd->parsed()) return cmd_train(train_config);
        if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_manifest, eval_split);
        if (gc_cmd->parsed()) return cmd_grad_check(gc_seed, gc_count);
        if (ea_cmd->parsed()) return cmd_export_attn(ea_ckpt, ea_clip, ea_out);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_config);
    } catch (const trear::TrearError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
