#include "postnet/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "postnet/errors.hpp"

namespace postnet {

using ordered_json = nlohmann::ordered_json;

double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw InvalidArgument("auc_pr: need matching non-empty scores and labels");
    std::size_t positives = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw InvalidArgument("auc_pr: labels must be 0/1");
        positives += static_cast<std::size_t>(l);
    }
    if (positives == 0 || positives == labels.size())
        throw InvalidArgument("auc_pr: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double threshold = scores[order[i]];
        // Consume the whole tie group at this threshold.
        while (i < order.size() && scores[order[i]] == threshold) {
            if (labels[order[i]] == 1)
                ++tp;
            else
                ++fp;
            ++i;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = static_cast<double>(tp) / static_cast<double>(positives);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

double brier(const Array& prob, const std::vector<int>& labels) {
    if (prob.rank() != 2 || static_cast<int>(labels.size()) != prob.rows())
        throw InvalidArgument("brier: need [B,K] probabilities with one label per row");
    const int k = prob.cols();
    double acc = 0.0;
    for (int i = 0; i < prob.rows(); ++i) {
        double row_sum = 0.0, dist2 = 0.0;
        for (int c = 0; c < k; ++c) {
            const double p = prob.at(i, c);
            row_sum += p;
            const double target = c == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
            dist2 += (p - target) * (p - target);
        }
        if (std::fabs(row_sum - 1.0) > 1e-6) throw InvalidArgument("brier: row is not a probability vector");
        acc += std::sqrt(dist2);
    }
    return 100.0 * acc / prob.rows();
}

std::vector<double> aleatoric_scores(const DirichletBatch& d) {
    std::vector<double> out(static_cast<std::size_t>(d.batch()));
    for (int i = 0; i < d.batch(); ++i) {
        const double a0 = d.alpha0(i);
        double mx = 0.0;
        for (int c = 0; c < d.num_classes(); ++c) mx = std::max(mx, d.alpha.at(i, c) / a0);
        out[static_cast<std::size_t>(i)] = mx;
    }
    return out;
}

std::vector<double> epistemic_conf_scores(const DirichletBatch& d) {
    std::vector<double> out(static_cast<std::size_t>(d.batch()));
    for (int i = 0; i < d.batch(); ++i) {
        double mx = 0.0;
        for (int c = 0; c < d.num_classes(); ++c) mx = std::max(mx, d.alpha.at(i, c));
        out[static_cast<std::size_t>(i)] = mx;
    }
    return out;
}

std::vector<double> alpha0_scores(const DirichletBatch& d) {
    std::vector<double> out(static_cast<std::size_t>(d.batch()));
    for (int i = 0; i < d.batch(); ++i) out[static_cast<std::size_t>(i)] = d.alpha0(i);
    return out;
}

std::vector<int> predicted_classes(const DirichletBatch& d) {
    std::vector<int> out(static_cast<std::size_t>(d.batch()));
    for (int i = 0; i < d.batch(); ++i) {
        int best = 0;
        for (int c = 1; c < d.num_classes(); ++c)
            if (d.alpha.at(i, c) > d.alpha.at(i, best)) best = c;
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

std::optional<double> confidence_calibration(const DirichletBatch& d, const std::vector<int>& truths,
                                             Score kind) {
    if (static_cast<int>(truths.size()) != d.batch())
        throw InvalidArgument("confidence_calibration: one truth per row required");
    const std::vector<int> preds = predicted_classes(d);
    std::vector<int> correct(truths.size());
    std::size_t n_correct = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        correct[i] = preds[i] == truths[i] ? 1 : 0;
        n_correct += static_cast<std::size_t>(correct[i]);
    }
    if (n_correct == 0 || n_correct == truths.size()) return std::nullopt;
    const std::vector<double> scores =
        kind == Score::kAleatoric ? aleatoric_scores(d) : epistemic_conf_scores(d);
    return auc_pr(scores, correct);
}

double ood_detection(const DirichletBatch& id, const DirichletBatch& ood, Score kind) {
    if (id.batch() == 0 || ood.batch() == 0) throw InvalidArgument("ood_detection: empty set");
    auto score_of = [&](const DirichletBatch& d) {
        return kind == Score::kAleatoric ? aleatoric_scores(d) : alpha0_scores(d);
    };
    std::vector<double> scores = score_of(id);
    std::vector<int> labels(scores.size(), 1);
    const std::vector<double> ood_scores = score_of(ood);
    scores.insert(scores.end(), ood_scores.begin(), ood_scores.end());
    labels.insert(labels.end(), ood_scores.size(), 0);
    return auc_pr(scores, labels);
}

double confidence_ratio(const DirichletBatch& base, const DirichletBatch& shifted) {
    if (base.batch() == 0 || shifted.batch() == 0) throw InvalidArgument("confidence_ratio: empty set");
    double mb = 0.0, ms = 0.0;
    for (int i = 0; i < base.batch(); ++i) mb += base.alpha0(i);
    for (int i = 0; i < shifted.batch(); ++i) ms += shifted.alpha0(i);
    mb /= base.batch();
    ms /= shifted.batch();
    return ms / mb;
}

namespace {

double mean_categorical_entropy(const DirichletBatch& d) {
    double acc = 0.0;
    for (int i = 0; i < d.batch(); ++i) acc += categorical_entropy(dirichlet_mean(d.row(i)));
    return acc / d.batch();
}

}  // namespace

EvalReport evaluate(const PosteriorModel& model, const Array& x_test, const std::vector<int>& y_test,
                    const std::vector<std::pair<std::string, Array>>& ood_sets) {
    if (x_test.rows() == 0) throw InvalidArgument("evaluate: empty test set");
    if (static_cast<int>(y_test.size()) != x_test.rows())
        throw InvalidArgument("evaluate: one label per test row required");

    const DirichletBatch id = model.posterior(x_test);
    const std::vector<int> preds = predicted_classes(id);

    EvalReport r;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y_test.size(); ++i)
        if (preds[i] == y_test[i]) ++correct;
    r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(y_test.size());

    if (auto a = confidence_calibration(id, y_test, Score::kAleatoric)) r.alea_conf = 100.0 * *a;
    if (auto e = confidence_calibration(id, y_test, Score::kEpistemic)) r.epist_conf = 100.0 * *e;

    Array prob({id.batch(), id.num_classes()});
    for (int i = 0; i < id.batch(); ++i) {
        const double a0 = id.alpha0(i);
        for (int c = 0; c < id.num_classes(); ++c) prob.at(i, c) = id.alpha.at(i, c) / a0;
    }
    r.brier_score = brier(prob, y_test);
    r.id_mean_entropy = 100.0 * mean_categorical_entropy(id);
    double a0_acc = 0.0;
    for (int i = 0; i < id.batch(); ++i) a0_acc += id.alpha0(i);
    r.id_mean_alpha0 = a0_acc / id.batch();

    for (const auto& [name, x_ood] : ood_sets) {
        const DirichletBatch ood = model.posterior(x_ood);
        OodResult res;
        res.name = name;
        res.alea_auc_pr = 100.0 * ood_detection(id, ood, Score::kAleatoric);
        res.epist_auc_pr = 100.0 * ood_detection(id, ood, Score::kEpistemic);
        res.mean_entropy = 100.0 * mean_categorical_entropy(ood);
        r.ood.push_back(std::move(res));
    }
    return r;
}

ordered_json report_to_json(const EvalReport& r) {
    ordered_json j;
    j["format_version"] = 1;
    j["accuracy"] = r.accuracy;
    j["alea_conf"] = r.alea_conf ? ordered_json(*r.alea_conf) : ordered_json(nullptr);
    j["epist_conf"] = r.epist_conf ? ordered_json(*r.epist_conf) : ordered_json(nullptr);
    j["brier"] = r.brier_score;
    j["id_mean_entropy"] = r.id_mean_entropy;
    j["id_mean_alpha0"] = r.id_mean_alpha0;
    if (!r.ood.empty()) {
        ordered_json ood;
        for (const auto& o : r.ood)
            ood[o.name] = {{"alea_auc_pr", o.alea_auc_pr},
                           {"epist_auc_pr", o.epist_auc_pr},
                           {"mean_entropy", o.mean_entropy}};
        j["ood"] = ood;
    }
    return j;
}

void save_report(const EvalReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_report: cannot open " + path + " for writing");
    out << report_to_json(r).dump(2) << '\n';
    if (!out) throw DataError("save_report: write failed for " + path);
}

namespace {

std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace

void export_uncertainty_grid(const PosteriorModel& model, const GridBounds& bounds, int resolution,
                             std::ostream& out) {
    if (model.input_dim() != 2) throw InvalidArgument("export_uncertainty_grid: model input space must be 2D");
    if (resolution < 1) throw InvalidArgument("export_uncertainty_grid: resolution must be >= 1");

    auto coord = [&](double lo, double hi, int i) {
        if (resolution == 1) return 0.5 * (lo + hi);
        return lo + (hi - lo) * static_cast<double>(i) / (resolution - 1);
    };

    Array raw({resolution * resolution, 2});
    int row = 0;
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j, ++row) {
            raw.at(row, 0) = coord(bounds.x1_min, bounds.x1_max, i);
            raw.at(row, 1) = coord(bounds.x2_min, bounds.x2_max, j);
        }
    const Array x = model.scaler.empty() ? raw : model.scaler.transform(raw);
    const DirichletBatch d = model.posterior(x);

    out << "x1,x2,alpha0,max_prob,pred,entropy\n";
    for (int i = 0; i < d.batch(); ++i) {
        const DirichletParams p = d.row(i);
        const std::vector<double> mean = dirichlet_mean(p);
        const int pred = predict_class(p);
        out << fmt(raw.at(i, 0)) << ',' << fmt(raw.at(i, 1)) << ',' << fmt(p.alpha0()) << ','
            << fmt(mean[static_cast<std::size_t>(pred)]) << ',' << pred << ','
            << fmt(categorical_entropy(mean)) << '\n';
    }
}

std::pair<double, double> mean_sem(const std::vector<double>& xs) {
    if (xs.empty()) throw InvalidArgument("mean_sem: empty sample");
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() == 1) return {mean, 0.0};
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1);
    return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

}  // namespace postnet
