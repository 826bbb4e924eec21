#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "postnet/data.hpp"
#include "postnet/model.hpp"

namespace postnet {

enum class TrainMode { kJoint, kSequential, kNoFlow, kNoBayesLoss };

std::string train_mode_name(TrainMode m);
TrainMode train_mode_from_name(const std::string& s);

struct TrainConfig {
    TrainMode mode = TrainMode::kJoint;
    DensityKind density_type = DensityKind::kRadial;  // radial or mog
    double entropy_weight = 1e-5;
    double lr = 1e-3;
    int batch_size = 64;
    int max_epochs = 500;
    int eval_every = 2;   // epochs between validation checks
    int patience = 10;    // non-improving checks before stopping
    std::uint64_t seed = 0;
    bool use_batchnorm = true;
    int flow_length = 6;
    int mog_components = 0;  // 0 means one component per class
    int latent_dim = 6;
    std::vector<int> hidden_dims = {64, 64, 64};
    Activation activation = Activation::kRelu;
    double leaky_slope = 0.01;

    void validate() const;
};

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);

struct EpochRecord {
    int epoch;
    double train_loss;
    std::optional<double> val_loss;
};

struct TrainResult {
    PosteriorModel model;
    std::vector<EpochRecord> log;
    double best_val_loss = 0.0;
    int epochs_run = 0;
};

// Train on already-scaled splits. Joint mode optimizes encoder and densities
// together; sequential pretrains a no-flow model, freezes its encoder and
// fits the densities on top; no_flow swaps the densities for a linear
// evidence head; no_bayes_loss keeps the architecture but trains with plain
// cross-entropy on the Dirichlet mean.
TrainResult train(const LabeledDataset& train_ds, const LabeledDataset& val_ds, const TrainConfig& cfg);

// Runs train() once per learning rate and keeps the best validation loss;
// ties go to the smaller rate.
TrainResult train_with_lr_grid(const LabeledDataset& train_ds, const LabeledDataset& val_ds,
                               TrainConfig cfg, const std::vector<double>& lrs);

struct PipelineResult {
    TrainResult result;
    SplitResult raw_splits;  // unscaled rows, for export or later evaluation
};

// The end-to-end path behind the CLI: split 60/20/20 by the run seed, fit
// the min-max scaler on the train split, train, and attach scaler and class
// names to the returned model.
PipelineResult run_training_pipeline(const LabeledDataset& full, const TrainConfig& cfg,
                                     std::array<double, 3> ratios = {0.6, 0.2, 0.2});

}  // namespace postnet
