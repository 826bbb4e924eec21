#include "postnet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "postnet/data.hpp"
#include "postnet/errors.hpp"
#include "postnet/metrics.hpp"
#include "postnet/model.hpp"
#include "postnet/train.hpp"

namespace postnet::cli {

namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::vector<int> map_labels_to_model(const LabeledDataset& ds, const PosteriorModel& model) {
    std::vector<int> remap(ds.class_names.size(), -1);
    for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
        for (std::size_t mc = 0; mc < model.class_names.size(); ++mc)
            if (model.class_names[mc] == ds.class_names[c]) {
                remap[c] = static_cast<int>(mc);
                break;
            }
        if (remap[c] < 0)
            throw DataError("eval: class '" + ds.class_names[c] + "' is unknown to the model");
    }
    std::vector<int> out(ds.y.size());
    for (std::size_t i = 0; i < ds.y.size(); ++i) out[i] = remap[static_cast<std::size_t>(ds.y[i])];
    return out;
}

Array scale_for_model(const PosteriorModel& model, const Array& x) {
    return model.scaler.empty() ? x : model.scaler.transform(x);
}

void write_training_log(const TrainResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("train: cannot open log file " + path);
    for (const auto& rec : result.log) {
        ordered_json j;
        j["epoch"] = rec.epoch;
        j["train_loss"] = rec.train_loss;
        if (rec.val_loss) j["val_loss"] = *rec.val_loss;
        out << j.dump() << '\n';
    }
}

int run_synth(const std::string& dataset, int n, std::uint64_t seed, const std::string& out_path) {
    if (dataset != "three-gaussians") throw DataError("synth: unknown dataset '" + dataset + "'");
    write_csv(generate_three_gaussians(n, seed), out_path);
    return 0;
}

int run_train(const std::string& data_path, const std::string& config_path, const std::string& out_path,
              std::string log_path, const std::string& export_prefix, std::int64_t seed_override) {
    std::ifstream cfg_in(config_path);
    if (!cfg_in) throw DataError("train: cannot open config " + config_path);
    ordered_json cfg_json;
    try {
        cfg_in >> cfg_json;
    } catch (const std::exception& e) {
        throw DataError("train: invalid JSON in " + config_path + ": " + e.what());
    }
    TrainConfig cfg = train_config_from_json(cfg_json);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);

    const LabeledDataset full = load_csv(data_path);
    PipelineResult pipe = run_training_pipeline(full, cfg);
    save_model(pipe.result.model, out_path);
    if (log_path.empty()) log_path = out_path + ".log";
    write_training_log(pipe.result, log_path);
    if (!export_prefix.empty()) {
        write_csv(pipe.raw_splits.train, export_prefix + ".train.csv");
        write_csv(pipe.raw_splits.val, export_prefix + ".val.csv");
        write_csv(pipe.raw_splits.test, export_prefix + ".test.csv");
    }
    return 0;
}

int run_eval(const std::string& model_path, const std::string& test_path,
             const std::vector<std::string>& ood_specs, double oodom_factor,
             const std::string& report_path) {
    const PosteriorModel model = load_model(model_path);
    const LabeledDataset test = load_csv(test_path);
    const std::vector<int> y = map_labels_to_model(test, model);
    const Array x_test = scale_for_model(model, test.X);

    std::vector<std::pair<std::string, Array>> ood_sets;
    for (const auto& spec : ood_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
            throw DataError("eval: --ood expects name=path, got '" + spec + "'");
        const std::string name = spec.substr(0, eq);
        const LabeledDataset ood = load_csv(spec.substr(eq + 1));
        ood_sets.emplace_back(name, scale_for_model(model, ood.X));
    }
    if (oodom_factor > 0.0) {
        Array oodom = x_test;
        for (double& v : oodom.v) v *= oodom_factor;
        ood_sets.emplace_back("oodom", std::move(oodom));
    }

    const EvalReport report = evaluate(model, x_test, y, ood_sets);
    save_report(report, report_path);
    return 0;
}

int run_grid(const std::string& model_path, const std::string& bounds_spec, int resolution,
             const std::string& out_path) {
    const PosteriorModel model = load_model(model_path);
    GridBounds b{};
    {
        std::vector<double> vals;
        std::string cur;
        for (char c : bounds_spec + ",") {
            if (c == ',') {
                try {
                    vals.push_back(std::stod(cur));
                } catch (const std::exception&) {
                    throw InvalidArgument("grid: malformed --bounds '" + bounds_spec + "'");
                }
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (vals.size() != 4) throw InvalidArgument("grid: --bounds needs x1min,x1max,x2min,x2max");
        b = GridBounds{vals[0], vals[1], vals[2], vals[3]};
    }
    std::ofstream out(out_path);
    if (!out) throw DataError("grid: cannot open " + out_path + " for writing");
    export_uncertainty_grid(model, b, resolution, out);
    if (!out) throw DataError("grid: write failed for " + out_path);
    return 0;
}

int run_convert(const std::string& dataset, std::vector<std::string> in_paths, const std::string& out_path,
                const std::vector<std::string>& holdout, const std::string& ood_out) {
    LabeledDataset ds;
    if (dataset == "segment") {
        if (in_paths.size() == 1 && fs::is_directory(in_paths[0])) {
            const fs::path dir(in_paths[0]);
            in_paths.clear();
            for (const char* name : {"segmentation.data", "segmentation.test"}) {
                const fs::path p = dir / name;
                if (fs::exists(p)) in_paths.push_back(p.string());
            }
            if (in_paths.empty())
                throw DataError("convert-uci: no segmentation.data/segmentation.test under " + dir.string());
        }
        ds = convert_uci_segment(in_paths);
    } else if (dataset == "sensorless") {
        if (in_paths.size() != 1) throw DataError("convert-uci: sensorless expects exactly one input file");
        ds = convert_uci_sensorless(in_paths[0]);
    } else {
        throw DataError("convert-uci: unknown dataset '" + dataset + "'");
    }

    if (holdout.empty()) {
        write_csv(ds, out_path);
        return 0;
    }
    std::set<std::string> names(holdout.begin(), holdout.end());
    auto [id, ood] = leave_out_classes(ds, names);
    write_csv(id, out_path);
    if (!ood_out.empty()) write_csv(ood, ood_out);
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"Dirichlet posterior networks over latent normalizing flows"};
    app.name("postnet");
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset as CSV");
    std::string synth_dataset = "three-gaussians", synth_out;
    int synth_n = 1500;
    std::uint64_t synth_seed = 0;
    synth->add_option("--dataset", synth_dataset, "Dataset name (three-gaussians)");
    synth->add_option("--n", synth_n, "Number of samples");
    synth->add_option("--seed", synth_seed, "Random seed");
    synth->add_option("--out", synth_out, "Output CSV path")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model from CSV data");
    std::string train_data, train_config, train_out, train_log, train_export;
    std::int64_t train_seed = -1;
    train_cmd->add_option("--data", train_data, "Input CSV (all rows; split happens internally)")->required();
    train_cmd->add_option("--config", train_config, "Training config JSON")->required();
    train_cmd->add_option("--out", train_out, "Output model archive path")->required();
    train_cmd->add_option("--log", train_log, "Training log path (default: <out>.log)");
    train_cmd->add_option("--export-splits", train_export, "Prefix for writing the raw train/val/test splits");
    train_cmd->add_option("--seed", train_seed, "Override the seed from the config");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained model");
    std::string eval_model, eval_test, eval_report;
    std::vector<std::string> eval_ood;
    double eval_oodom = 0.0;
    eval_cmd->add_option("--model", eval_model, "Model archive")->required();
    eval_cmd->add_option("--test", eval_test, "Test CSV")->required();
    eval_cmd->add_option("--ood", eval_ood, "OOD set as name=path (repeatable)");
    eval_cmd->add_option("--oodom-factor", eval_oodom, "Scale factor for the out-of-domain set (0 = off)");
    eval_cmd->add_option("--report", eval_report, "Output report path")->required();

    // grid
    auto* grid_cmd = app.add_subcommand("grid", "Export the 2D uncertainty grid as CSV");
    std::string grid_model, grid_bounds, grid_out;
    int grid_res = 100;
    grid_cmd->add_option("--model", grid_model, "Model archive")->required();
    grid_cmd->add_option("--bounds", grid_bounds, "x1min,x1max,x2min,x2max")->required();
    grid_cmd->add_option("--res", grid_res, "Grid resolution per axis");
    grid_cmd->add_option("--out", grid_out, "Output CSV path")->required();

    // convert-uci
    auto* conv_cmd = app.add_subcommand("convert-uci", "Convert raw UCI files to the CSV contract");
    std::string conv_dataset, conv_out, conv_ood_out;
    std::vector<std::string> conv_in, conv_holdout;
    conv_cmd->add_option("--dataset", conv_dataset, "segment or sensorless")->required();
    conv_cmd->add_option("--in", conv_in, "Raw input file(s) or directory")->required();
    conv_cmd->add_option("--out", conv_out, "Output CSV path")->required();
    conv_cmd->add_option("--holdout", conv_holdout, "Class names to split out as OOD (repeatable)");
    conv_cmd->add_option("--ood-out", conv_ood_out, "CSV path for the held-out rows");

    try {
        // CLI11's vector overload consumes arguments from the back.
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help() << std::flush;
            return 0;
        }
        std::cerr << "postnet: " << e.what() << std::endl;
        return 2;
    }

    try {
        if (synth->parsed()) return run_synth(synth_dataset, synth_n, synth_seed, synth_out);
        if (train_cmd->parsed())
            return run_train(train_data, train_config, train_out, train_log, train_export, train_seed);
        if (eval_cmd->parsed()) return run_eval(eval_model, eval_test, eval_ood, eval_oodom, eval_report);
        if (grid_cmd->parsed()) return run_grid(grid_model, grid_bounds, grid_res, grid_out);
        if (conv_cmd->parsed()) return run_convert(conv_dataset, conv_in, conv_out, conv_holdout, conv_ood_out);
        std::cerr << "postnet: no subcommand given" << std::endl;
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "postnet: " << e.what() << std::endl;
        return 4;
    } catch (const DataError& e) {
        std::cerr << "postnet: " << e.what() << std::endl;
        return 3;
    } catch (const InvalidArgument& e) {
        std::cerr << "postnet: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "postnet: " << e.what() << std::endl;
        return 3;
    }
}

int dispatch(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args);
}

}  // namespace postnet::cli
