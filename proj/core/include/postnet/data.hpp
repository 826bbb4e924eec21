#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "postnet/array.hpp"

namespace postnet {

struct LabeledDataset {
    Array X;                               // [N,D]
    std::vector<int> y;                    // dense labels in [0,K)
    std::vector<std::string> class_names;  // index -> token
    std::vector<std::string> feature_names;
    std::string provenance;

    int size() const { return X.rows(); }
    int dim() const { return X.cols(); }
    int num_classes() const { return static_cast<int>(class_names.size()); }
    void validate() const;
};

// Per-dimension min/max from a training split; constant dimensions map to 0.
struct MinMaxScaler {
    std::vector<double> min;
    std::vector<double> max;

    static MinMaxScaler fit(const Array& x);
    Array transform(const Array& x) const;
    Array inverse(const Array& x) const;
    bool empty() const { return min.empty(); }
};

// Three isotropic 2D Gaussians (variance 0.2) at (0,2), (-1.73205081,-1),
// (1.73205081,-1); n/3 draws per class, remainder round-robin.
LabeledDataset generate_three_gaussians(int n, std::uint64_t seed);

// Comma-separated, UTF-8, header row required, label in the last column.
// String labels map to dense indices in order of first appearance.
LabeledDataset load_csv(const std::string& path);
void write_csv(const LabeledDataset& ds, const std::string& path);

struct SplitResult {
    LabeledDataset train, val, test;
};

SplitResult split(const LabeledDataset& ds, std::array<double, 3> ratios, std::uint64_t seed);

// Fit on train, transform all three splits in place; returns the scaler.
MinMaxScaler fit_apply_minmax(LabeledDataset& train, LabeledDataset& val, LabeledDataset& test);

// Moves every row of the named classes into the OOD set; ID labels are
// re-indexed densely. At least two ID classes must remain.
std::pair<LabeledDataset, LabeledDataset> leave_out_classes(const LabeledDataset& ds,
                                                            const std::set<std::string>& names);

// Multiplies (already scaled) features by the factor, simulating inputs from
// an unscaled value range.
LabeledDataset make_oodom(const LabeledDataset& scaled, double factor = 255.0);

// UCI converters to the CSV contract above. Segment takes the directory (or
// files) holding segmentation.data / segmentation.test; the constant
// region-pixel-count attribute is dropped, giving 18 features and labels in
// {brickface, sky, foliage, cement, window, path, grass}. Sensorless takes
// the whitespace-separated drive diagnosis file: 48 features, labels "1".."11".
LabeledDataset convert_uci_segment(const std::vector<std::string>& raw_paths);
LabeledDataset convert_uci_sensorless(const std::string& raw_path);

}  // namespace postnet
