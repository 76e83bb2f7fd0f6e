#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "dekan/config_io.hpp"
#include "dekan/error.hpp"
#include "dekan/selfcheck.hpp"
#include "dekan/train.hpp"

using namespace dekan;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

int run_train(const std::string& config_path, const std::vector<std::string>& settings, bool quiet) {
    TrainConfig config = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
    for (const auto& s : settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        apply_setting(config, s.substr(0, eq), s.substr(eq + 1));
    }
    if (config.data_root.empty()) throw ConfigError("no dataset given (set data = <dir> or --data)");
    const auto result = train(config, quiet ? nullptr : &std::cout);
    const auto& best = result.best;
    std::printf("best epoch %d  val_loss %.6f%s\nwrote %s\n", best.epoch, best.best_val_loss,
                result.early_stopped ? "  (early stopped)" : "", config.output_dir.c_str());
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& csv, double threshold) {
    Dekan<float> model = model_from_checkpoint(load_checkpoint(ckpt));
    const auto samples = load_dataset(data);
    const auto report = evaluate(model, samples, threshold);
    std::cout << report.text();
    if (!csv.empty()) {
        std::ofstream out(csv, std::ios::trunc);
        out << report.csv();
        if (!out) throw DataError("cannot write " + csv);
    }
    return 0;
}

int run_predict(const std::string& ckpt, const std::string& image, const std::string& out, double threshold) {
    Dekan<float> model = model_from_checkpoint(load_checkpoint(ckpt));
    std::cout << predict_to_files(model, image, out, threshold).string() << "\n";
    return 0;
}

int run_synth(int count, int size, std::uint64_t seed, const std::string& out) {
    save_dataset(synth_generate(count, size, seed), out);
    std::printf("wrote %d samples (%dx%d) to %s\n", count, size, size, out.c_str());
    return 0;
}

int run_gradcheck(double tolerance, double model_tolerance) {
    bool ok = true;
    for (const auto& e : run_gradient_suite(tolerance, model_tolerance)) {
        const bool pass = e.report.max_rel_error < e.tolerance;
        ok = ok && pass;
        std::printf("%-40s max_rel %.3e  (< %.0e)  %-4s  %zu entries, worst %s[%zu]\n", e.name.c_str(),
                    e.report.max_rel_error, e.tolerance, pass ? "ok" : "FAIL", e.report.checked,
                    e.report.worst_name.c_str(), e.report.worst_index);
    }
    std::printf("%s\n", ok ? "all gradient checks passed" : "gradient check FAILED");
    return ok ? 0 : kExitNumerical;
}

int run_info(const std::string& ckpt_path) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    Dekan<float> model = model_from_checkpoint(ckpt);
    std::cout << model_config_text(ckpt.model);
    std::printf("parameters = %zu\nepoch = %d\nbest_val_loss = %.9g\nmomentum_buffers = %zu\n",
                model.parameter_count(), ckpt.epoch, ckpt.best_val_loss, ckpt.momentum.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DE-KAN dual-encoder segmentation: train, evaluate, predict"};
    app.require_subcommand(1);

    std::string config_path, data, out, ckpt, image, csv, import_weights;
    std::vector<std::string> settings;
    bool quiet = false;
    int epochs = 0, count = 8, size = 64;
    std::uint64_t seed = 42;
    double threshold = 0.5, tolerance = 1e-4, model_tolerance = 1e-3;

    auto* train_cmd = app.add_subcommand("train", "train from a config file");
    train_cmd->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    train_cmd->add_option("--set", settings, "override one setting, key=value (repeatable)");
    train_cmd->add_option("--data", data, "dataset root (images/, masks/)");
    train_cmd->add_option("--out", out, "output directory");
    train_cmd->add_option("--epochs", epochs, "override epochs");
    train_cmd->add_option("--import-weights", import_weights, "parameter table for the residual encoder");
    train_cmd->add_flag("--quiet", quiet, "no per-epoch progress");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--data", data, "dataset root")->required();
    eval_cmd->add_option("--csv", csv, "write per-sample rows here");
    eval_cmd->add_option("--threshold", threshold, "foreground probability threshold");

    auto* predict_cmd = app.add_subcommand("predict", "write mask and overlay PNGs for one image");
    predict_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
    predict_cmd->add_option("--image", image, "input image")->required();
    predict_cmd->add_option("--out", out, "output directory")->required();
    predict_cmd->add_option("--threshold", threshold, "foreground probability threshold");

    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
    synth_cmd->add_option("--count", count, "number of samples");
    synth_cmd->add_option("--size", size, "image side (multiple of 32)");
    synth_cmd->add_option("--seed", seed, "generator seed");
    synth_cmd->add_option("--out", out, "dataset root")->required();

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
    grad_cmd->add_option("--tolerance", tolerance, "max relative error for single ops");
    grad_cmd->add_option("--model-tolerance", model_tolerance, "max relative error end to end");

    auto* info_cmd = app.add_subcommand("info", "print a checkpoint's config and parameter count");
    info_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        if (*train_cmd) {
            if (!data.empty()) settings.push_back("data=" + data);
            if (!out.empty()) settings.push_back("output=" + out);
            if (epochs > 0) settings.push_back("epochs=" + std::to_string(epochs));
            if (!import_weights.empty()) settings.push_back("import_weights=" + import_weights);
            return run_train(config_path, settings, quiet);
        }
        if (*eval_cmd) return run_eval(ckpt, data, csv, threshold);
        if (*predict_cmd) return run_predict(ckpt, image, out, threshold);
        if (*synth_cmd) return run_synth(count, size, seed, out);
        if (*grad_cmd) return run_gradcheck(tolerance, model_tolerance);
        if (*info_cmd) return run_info(ckpt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return 0;
}
