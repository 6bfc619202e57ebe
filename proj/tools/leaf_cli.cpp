#include "leaf/checkpoint.hpp"
#include "leaf/image_io.hpp"
#include "leaf/metrics.hpp"
#include "leaf/scan_paths.hpp"
#include "leaf/synthetic.hpp"
#include "leaf/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::pair<leaf::Index, leaf::Index> parse_size(const std::string& s) {
    const auto x = s.find('x');
    try {
        if (x == std::string::npos) {
            const leaf::Index n = std::stol(s);
            return {n, n};
        }
        return {std::stol(s.substr(0, x)), std::stol(s.substr(x + 1))};
    } catch (const std::exception&) {
        throw leaf::ConfigError("--size expects HxW, got '" + s + "'");
    }
}

struct TrainArgs {
    std::string config;
    std::string data;
    std::string out;
    std::optional<long> iterations;
};

int run_train(const TrainArgs& a) {
    leaf::RunConfig cfg = a.config.empty() ? leaf::RunConfig{} : leaf::load_run_config(a.config);
    if (!a.data.empty()) cfg.train.data_dir = a.data;
    if (a.iterations) cfg.train.iterations = *a.iterations;
    cfg.train.validate();
    if (cfg.train.data_dir.empty()) throw leaf::ConfigError("no training data: pass --data or set data_dir");

    auto samples = leaf::load_dataset(cfg.train.data_dir);
    std::vector<leaf::Sample> val;
    if (!cfg.train.val_dir.empty()) {
        val = leaf::load_dataset(cfg.train.val_dir);
    } else if (cfg.train.val_count > 0) {
        std::tie(samples, val) = leaf::split_validation(std::move(samples), cfg.train.val_count);
    }
    for (const auto& s : samples) {
        if (s.rgb.dim(1) != cfg.model.input_size || s.rgb.dim(2) != cfg.model.input_size) {
            throw leaf::DataError("sample " + s.id + " is not " + std::to_string(cfg.model.input_size) +
                                  " pixels square as input_size requires");
        }
    }

    fs::create_directories(a.out);
    std::ofstream log(fs::path(a.out) / "metrics.tsv", std::ios::binary);
    if (!log) throw leaf::DataError("cannot write " + (fs::path(a.out) / "metrics.tsv").string());
    {
        std::ofstream cfg_out(fs::path(a.out) / "config.txt", std::ios::binary);
        cfg_out << leaf::format_config(leaf::run_config_to_map(cfg));
    }
    leaf::LeafModel model(cfg.model);
    leaf::train(model, cfg.train, samples, val, [&](const leaf::EpochRecord& r) {
        log << leaf::format_epoch(r);
        log.flush();
    });
    leaf::save_checkpoint(fs::path(a.out) / "model.ckpt", model);
    std::cout << "wrote " << (fs::path(a.out) / "model.ckpt").string() << "\n";
    return kExitOk;
}

int run_infer(const std::string& ckpt, const std::string& rgb, const std::string& depth, const std::string& out) {
    const auto model = leaf::load_model(ckpt);
    const leaf::Tensor p = leaf::predict(*model, leaf::read_ppm(rgb), leaf::read_pgm(depth));
    if (!leaf::all_finite(p)) throw leaf::NumericError("prediction contains non-finite values");
    leaf::write_pgm(out, p);
    return kExitOk;
}

// Ground-truth files are `<id>_gt.pgm` (or any .pgm when none use that suffix);
// predictions are looked up as `<id>.pgm`, `<id>_pred.pgm` or the gt file name.
int run_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& name) {
    if (!fs::is_directory(gt_dir)) throw leaf::DataError("not a directory: " + gt_dir);
    if (!fs::is_directory(pred_dir)) throw leaf::DataError("not a directory: " + pred_dir);
    std::vector<std::string> gt_files;
    std::vector<std::string> any_pgm;
    for (const auto& e : fs::directory_iterator(gt_dir)) {
        const std::string f = e.path().filename().string();
        if (f.size() > 4 && f.ends_with(".pgm")) any_pgm.push_back(f);
        if (f.size() > 7 && f.ends_with("_gt.pgm")) gt_files.push_back(f);
    }
    if (gt_files.empty()) gt_files = any_pgm;
    std::sort(gt_files.begin(), gt_files.end());
    if (gt_files.empty()) throw leaf::DataError("no ground-truth .pgm files in " + gt_dir);

    leaf::metrics::Evaluator ev;
    for (const auto& f : gt_files) {
        const std::string id = f.ends_with("_gt.pgm") ? f.substr(0, f.size() - 7) : f.substr(0, f.size() - 4);
        std::optional<fs::path> pred;
        for (const auto& cand : {id + ".pgm", id + "_pred.pgm", f}) {
            if (fs::exists(fs::path(pred_dir) / cand)) {
                pred = fs::path(pred_dir) / cand;
                break;
            }
        }
        if (!pred) throw leaf::DataError("no prediction for " + id + " in " + pred_dir);
        ev.add(id, leaf::read_pgm(*pred), leaf::read_pgm(fs::path(gt_dir) / f));
    }
    std::cout << leaf::metrics::format_report(name, ev.report());
    return kExitOk;
}

int run_eval_real(const std::string& ckpt, const std::string& real_dir, const std::string& name,
                  const std::string& save_dir) {
    const auto model = leaf::load_model(ckpt);
    const auto samples = leaf::load_dataset(real_dir);
    if (!save_dir.empty()) fs::create_directories(save_dir);
    leaf::metrics::Evaluator ev;
    for (const auto& s : samples) {
        const leaf::Tensor p = leaf::predict(*model, s.rgb, s.depth);
        if (!leaf::all_finite(p)) throw leaf::NumericError("prediction for " + s.id + " contains non-finite values");
        if (!save_dir.empty()) leaf::write_pgm(fs::path(save_dir) / (s.id + ".pgm"), p);
        ev.add(s.id, p, s.gt);
    }
    std::cout << leaf::metrics::format_report(name, ev.report());
    return kExitOk;
}

int run_paths_dump(const std::string& spec_text, const std::string& size) {
    const auto spec = leaf::parse_scan_spec(spec_text);
    const auto [h, w] = parse_size(size);
    const auto perm = leaf::build_scan(spec, h, w);
    std::string line;
    for (std::size_t i = 0; i < perm.forward.size(); ++i) line += (i ? "," : "") + std::to_string(perm.forward[i]);
    std::cout << line << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RGB-D salient object detection with selective state space models"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "write a synthetic RGB-D saliency dataset");
    long gen_n = 16;
    long gen_size = 64;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--n", gen_n, "number of samples")->check(CLI::PositiveNumber);
    gen->add_option("--size", gen_size, "image side in pixels")->check(CLI::Range(8L, 4096L));
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output directory")->required();

    auto* tr = app.add_subcommand("train", "train a model and write model.ckpt + metrics.tsv");
    TrainArgs targs;
    long iters = -1;
    tr->add_option("--config", targs.config, "key = value config file");
    tr->add_option("--data", targs.data, "training directory of <id>_{rgb.ppm,depth.pgm,gt.pgm}");
    tr->add_option("--out", targs.out, "output directory")->required();
    tr->add_option("--iterations", iters, "override the configured iteration count");

    auto* inf = app.add_subcommand("infer", "predict a saliency map as an 8-bit PGM");
    std::string inf_ckpt, inf_rgb, inf_depth, inf_out;
    inf->add_option("--ckpt", inf_ckpt, "checkpoint file")->required();
    inf->add_option("--rgb", inf_rgb, "input P6 image")->required();
    inf->add_option("--depth", inf_depth, "input P5 depth map")->required();
    inf->add_option("--out", inf_out, "output P5 path")->required();

    auto* ev = app.add_subcommand("eval", "print F-measure, S-measure, E-measure and MAE");
    std::string ev_pred, ev_gt, ev_name = "dataset", ev_ckpt, ev_real, ev_save;
    ev->add_option("--pred-dir", ev_pred, "directory of predicted maps");
    ev->add_option("--gt-dir", ev_gt, "directory of ground-truth maps");
    ev->add_option("--ckpt", ev_ckpt, "checkpoint used with --real-dir");
    ev->add_option("--real-dir", ev_real, "directory of <id>_rgb.ppm/_depth.pgm/_gt.pgm triples to predict and score");
    ev->add_option("--save-pred", ev_save, "with --real-dir, also write predictions here");
    ev->add_option("--name", ev_name, "dataset label in the report");

    auto* paths = app.add_subcommand("paths", "scan path utilities");
    paths->require_subcommand(1);
    auto* dump = paths->add_subcommand("dump", "print a scan permutation as comma-separated indices");
    std::string dump_spec, dump_size = "8x8";
    dump->add_option("--spec", dump_spec, "direction,flip|noflip,window e.g. H,flip,4")->required();
    dump->add_option("--size", dump_size, "grid extent HxW");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*gen) {
            leaf::gen_synthetic(gen_n, gen_size, gen_seed, gen_out);
            return kExitOk;
        }
        if (*tr) {
            if (iters >= 0) targs.iterations = iters;
            return run_train(targs);
        }
        if (*inf) return run_infer(inf_ckpt, inf_rgb, inf_depth, inf_out);
        if (*ev) {
            if (!ev_real.empty()) {
                if (ev_ckpt.empty()) throw leaf::ConfigError("--real-dir requires --ckpt");
                return run_eval_real(ev_ckpt, ev_real, ev_name, ev_save);
            }
            if (ev_pred.empty() || ev_gt.empty()) throw leaf::ConfigError("eval needs --pred-dir and --gt-dir, or --real-dir");
            return run_eval(ev_pred, ev_gt, ev_name);
        }
        if (*dump) return run_paths_dump(dump_spec, dump_size);
    } catch (const leaf::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const leaf::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
