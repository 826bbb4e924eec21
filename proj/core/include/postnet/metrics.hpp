#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "postnet/dirichlet.hpp"
#include "postnet/model.hpp"

namespace postnet {

// Average precision over descending unique score thresholds, ties grouped:
// AP = sum_n (R_n - R_{n-1}) P_n. Labels are 0/1 and both must be present.
double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels);

// Paper variant of the Brier score: mean (unsquared) Euclidean distance
// between the predicted probability vector and the one-hot label, times 100.
double brier(const Array& prob, const std::vector<int>& labels);

enum class Score { kAleatoric, kEpistemic };

// Per-sample uncertainty scores. Aleatoric: max mean probability. Epistemic:
// max alpha for confidence, alpha_0 for OOD detection.
std::vector<double> aleatoric_scores(const DirichletBatch& d);
std::vector<double> epistemic_conf_scores(const DirichletBatch& d);
std::vector<double> alpha0_scores(const DirichletBatch& d);
std::vector<int> predicted_classes(const DirichletBatch& d);

// AUC-PR of confidence vs correctness (1 = correct). Undefined (nullopt)
// when predictions are all correct or all incorrect.
std::optional<double> confidence_calibration(const DirichletBatch& d, const std::vector<int>& truths,
                                             Score kind);

// AUC-PR with labels 1 for ID and 0 for OOD rows.
double ood_detection(const DirichletBatch& id, const DirichletBatch& ood, Score kind);

// mean(alpha_0 over shifted) / mean(alpha_0 over base).
double confidence_ratio(const DirichletBatch& base, const DirichletBatch& shifted);

struct OodResult {
    std::string name;
    double alea_auc_pr = 0.0;   // x100
    double epist_auc_pr = 0.0;  // x100
    double mean_entropy = 0.0;  // x100
};

// All values scaled by 100.
struct EvalReport {
    double accuracy = 0.0;
    std::optional<double> alea_conf;
    std::optional<double> epist_conf;
    double brier_score = 0.0;
    double id_mean_entropy = 0.0;
    double id_mean_alpha0 = 0.0;  // unscaled; convenience for budget checks
    std::vector<OodResult> ood;
};

nlohmann::ordered_json report_to_json(const EvalReport& r);
void save_report(const EvalReport& r, const std::string& path);

// The evaluation protocol on a trained model: accuracy, confidence
// calibration, Brier, per-OOD-set detection AUC-PRs and mean categorical
// entropies. Inputs must already be scaled consistently with the model.
EvalReport evaluate(const PosteriorModel& model, const Array& x_test, const std::vector<int>& y_test,
                    const std::vector<std::pair<std::string, Array>>& ood_sets);

struct GridBounds {
    double x1_min, x1_max, x2_min, x2_max;
};

// CSV rows (x1, x2, alpha0, max_prob, pred, entropy) over a regular
// resolution x resolution grid in raw input coordinates; 2D models only.
void export_uncertainty_grid(const PosteriorModel& model, const GridBounds& bounds, int resolution,
                             std::ostream& out);

// Mean and standard error of the mean, the paper's aggregation across seeds.
std::pair<double, double> mean_sem(const std::vector<double>& xs);

}  // namespace postnet
