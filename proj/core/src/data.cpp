#include "postnet/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "postnet/errors.hpp"
#include "postnet/rng.hpp"

namespace postnet {

void LabeledDataset::validate() const {
    if (X.rank() != 2) throw DataError("dataset: feature matrix must be rank 2");
    if (static_cast<int>(y.size()) != X.rows()) throw DataError("dataset: one label per row required");
    const int k = num_classes();
    for (int label : y)
        if (label < 0 || label >= k) throw DataError("dataset: label out of range");
    for (double v : X.v)
        if (!std::isfinite(v)) throw DataError("dataset: non-finite feature");
}

MinMaxScaler MinMaxScaler::fit(const Array& x) {
    if (x.rank() != 2 || x.rows() == 0) throw DataError("MinMaxScaler: need a non-empty [N,D] matrix");
    MinMaxScaler s;
    const int d = x.cols();
    s.min.assign(static_cast<std::size_t>(d), 0.0);
    s.max.assign(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < d; ++j) {
        double lo = x.at(0, j), hi = x.at(0, j);
        for (int i = 1; i < x.rows(); ++i) {
            lo = std::min(lo, x.at(i, j));
            hi = std::max(hi, x.at(i, j));
        }
        s.min[static_cast<std::size_t>(j)] = lo;
        s.max[static_cast<std::size_t>(j)] = hi;
    }
    return s;
}

Array MinMaxScaler::transform(const Array& x) const {
    if (x.cols() != static_cast<int>(min.size())) throw DataError("MinMaxScaler: dimension mismatch");
    Array out = x;
    for (int j = 0; j < x.cols(); ++j) {
        const double lo = min[static_cast<std::size_t>(j)];
        const double range = max[static_cast<std::size_t>(j)] - lo;
        for (int i = 0; i < x.rows(); ++i)
            out.at(i, j) = range > 0.0 ? (x.at(i, j) - lo) / range : 0.0;
    }
    return out;
}

Array MinMaxScaler::inverse(const Array& x) const {
    if (x.cols() != static_cast<int>(min.size())) throw DataError("MinMaxScaler: dimension mismatch");
    Array out = x;
    for (int j = 0; j < x.cols(); ++j) {
        const double lo = min[static_cast<std::size_t>(j)];
        const double range = max[static_cast<std::size_t>(j)] - lo;
        for (int i = 0; i < x.rows(); ++i) out.at(i, j) = range > 0.0 ? x.at(i, j) * range + lo : lo;
    }
    return out;
}

LabeledDataset generate_three_gaussians(int n, std::uint64_t seed) {
    if (n < 3) throw InvalidArgument("generate_three_gaussians: n must be >= 3");
    static const double kMeans[3][2] = {{0.0, 2.0}, {-1.73205081, -1.0}, {1.73205081, -1.0}};
    const double sigma = std::sqrt(0.2);
    std::vector<int> per_class(3, n / 3);
    for (int r = 0; r < n % 3; ++r) per_class[static_cast<std::size_t>(r)] += 1;

    LabeledDataset ds;
    ds.provenance = "three-gaussians";
    ds.class_names = {"0", "1", "2"};
    ds.feature_names = {"x1", "x2"};
    ds.X = Array({n, 2});
    ds.y.resize(static_cast<std::size_t>(n));
    Rng rng(derive_seed(seed, "three_gaussians"));
    int row = 0;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < per_class[static_cast<std::size_t>(c)]; ++i, ++row) {
            ds.X.at(row, 0) = kMeans[c][0] + sigma * rng.normal();
            ds.X.at(row, 1) = kMeans[c][1] + sigma * rng.normal();
            ds.y[static_cast<std::size_t>(row)] = c;
        }
    return ds;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

bool parse_double(const std::string& tok, double* out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
    if (first == last) return false;
    auto [ptr, ec] = std::from_chars(first, last, *out);
    return ec == std::errc() && ptr == last && std::isfinite(*out);
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace

LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("load_csv: empty file " + path);

    const auto header = split_line(line, ',');
    if (header.size() < 2) throw DataError("load_csv: need at least one feature and a label column");
    {
        // A header whose cells all parse as numbers is data, i.e. the header is missing.
        bool all_numeric = true;
        double tmp = 0.0;
        for (const auto& tok : header)
            if (!parse_double(tok, &tmp)) {
                all_numeric = false;
                break;
            }
        if (all_numeric) throw DataError("load_csv: missing header row in " + path);
    }
    const std::size_t n_cols = header.size();
    const int d = static_cast<int>(n_cols) - 1;

    LabeledDataset ds;
    ds.provenance = path;
    ds.feature_names.assign(header.begin(), header.end() - 1);
    std::map<std::string, int> label_ids;
    std::vector<double> xs;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto toks = split_line(line, ',');
        if (toks.size() != n_cols)
            throw DataError("load_csv: row " + std::to_string(line_no) + " has " + std::to_string(toks.size()) +
                            " columns, expected " + std::to_string(n_cols));
        for (int j = 0; j < d; ++j) {
            double v = 0.0;
            if (!parse_double(toks[static_cast<std::size_t>(j)], &v))
                throw DataError("load_csv: non-numeric feature '" + toks[static_cast<std::size_t>(j)] +
                                "' at row " + std::to_string(line_no));
            xs.push_back(v);
        }
        const std::string& tok = toks.back();
        auto it = label_ids.find(tok);
        if (it == label_ids.end()) {
            it = label_ids.emplace(tok, static_cast<int>(ds.class_names.size())).first;
            ds.class_names.push_back(tok);
        }
        ds.y.push_back(it->second);
    }
    if (ds.y.empty()) throw DataError("load_csv: no data rows in " + path);
    ds.X = Array({static_cast<int>(ds.y.size()), d}, std::move(xs));
    return ds;
}

void write_csv(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_csv: cannot open " + path + " for writing");
    const int d = ds.dim();
    for (int j = 0; j < d; ++j) {
        if (j < static_cast<int>(ds.feature_names.size()) && !ds.feature_names[static_cast<std::size_t>(j)].empty())
            out << ds.feature_names[static_cast<std::size_t>(j)];
        else
            out << "f" << (j + 1);
        out << ',';
    }
    out << "label\n";
    for (int i = 0; i < ds.size(); ++i) {
        for (int j = 0; j < d; ++j) out << format_double(ds.X.at(i, j)) << ',';
        out << ds.class_names[static_cast<std::size_t>(ds.y[static_cast<std::size_t>(i)])] << '\n';
    }
    if (!out) throw DataError("write_csv: write failed for " + path);
}

namespace {

LabeledDataset take_rows(const LabeledDataset& ds, const std::vector<int>& rows) {
    LabeledDataset out;
    out.class_names = ds.class_names;
    out.feature_names = ds.feature_names;
    out.provenance = ds.provenance;
    out.X = Array({static_cast<int>(rows.size()), ds.dim()});
    out.y.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        for (int j = 0; j < ds.dim(); ++j) out.X.at(static_cast<int>(i), j) = ds.X.at(r, j);
        out.y[i] = ds.y[static_cast<std::size_t>(r)];
    }
    return out;
}

}  // namespace

SplitResult split(const LabeledDataset& ds, std::array<double, 3> ratios, std::uint64_t seed) {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::fabs(sum - 1.0) > 1e-9) throw InvalidArgument("split: ratios must sum to 1");
    const int n = ds.size();
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(seed, "split"));
    rng.shuffle(idx);

    int n0 = static_cast<int>(std::llround(ratios[0] * n));
    int n1 = static_cast<int>(std::llround(ratios[1] * n));
    n0 = std::clamp(n0, 0, n);
    n1 = std::clamp(n1, 0, n - n0);
    const int n2 = n - n0 - n1;
    (void)n2;

    SplitResult out;
    out.train = take_rows(ds, {idx.begin(), idx.begin() + n0});
    out.val = take_rows(ds, {idx.begin() + n0, idx.begin() + n0 + n1});
    out.test = take_rows(ds, {idx.begin() + n0 + n1, idx.end()});
    return out;
}

MinMaxScaler fit_apply_minmax(LabeledDataset& train, LabeledDataset& val, LabeledDataset& test) {
    MinMaxScaler s = MinMaxScaler::fit(train.X);
    train.X = s.transform(train.X);
    if (val.size() > 0) val.X = s.transform(val.X);
    if (test.size() > 0) test.X = s.transform(test.X);
    return s;
}

std::pair<LabeledDataset, LabeledDataset> leave_out_classes(const LabeledDataset& ds,
                                                            const std::set<std::string>& names) {
    std::vector<bool> held(ds.class_names.size(), false);
    for (const auto& name : names) {
        bool found = false;
        for (std::size_t c = 0; c < ds.class_names.size(); ++c)
            if (ds.class_names[c] == name) {
                held[c] = true;
                found = true;
            }
        if (!found) throw DataError("leave_out_classes: unknown class '" + name + "'");
    }
    int remaining = 0;
    for (bool h : held)
        if (!h) ++remaining;
    if (remaining < 2) throw DataError("leave_out_classes: at least two ID classes must remain");

    std::vector<int> id_rows, ood_rows;
    for (int i = 0; i < ds.size(); ++i)
        (held[static_cast<std::size_t>(ds.y[static_cast<std::size_t>(i)])] ? ood_rows : id_rows).push_back(i);

    LabeledDataset id = take_rows(ds, id_rows);
    LabeledDataset ood = take_rows(ds, ood_rows);

    // Re-index both sides densely over the classes they actually hold.
    std::vector<int> id_map(ds.class_names.size(), -1), ood_map(ds.class_names.size(), -1);
    std::vector<std::string> id_names, ood_names;
    for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
        if (held[c]) {
            ood_map[c] = static_cast<int>(ood_names.size());
            ood_names.push_back(ds.class_names[c]);
        } else {
            id_map[c] = static_cast<int>(id_names.size());
            id_names.push_back(ds.class_names[c]);
        }
    }
    for (int& label : id.y) label = id_map[static_cast<std::size_t>(label)];
    for (int& label : ood.y) label = ood_map[static_cast<std::size_t>(label)];
    id.class_names = std::move(id_names);
    ood.class_names = std::move(ood_names);
    return {std::move(id), std::move(ood)};
}

LabeledDataset make_oodom(const LabeledDataset& scaled, double factor) {
    if (!(factor > 0.0)) throw InvalidArgument("make_oodom: factor must be > 0");
    LabeledDataset out = scaled;
    for (double& v : out.X.v) v *= factor;
    out.provenance = scaled.provenance + ":oodom";
    return out;
}

namespace {

std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

LabeledDataset convert_uci_segment(const std::vector<std::string>& raw_paths) {
    // 19 attributes, class token first; attribute 3 (region-pixel-count) is
    // constant and dropped.
    static const char* kFeatures[] = {
        "region-centroid-col", "region-centroid-row", "region-pixel-count", "short-line-density-5",
        "short-line-density-2", "vedge-mean", "vedge-sd", "hedge-mean", "hedge-sd", "intensity-mean",
        "rawred-mean", "rawblue-mean", "rawgreen-mean", "exred-mean", "exblue-mean", "exgreen-mean",
        "value-mean", "saturation-mean", "hue-mean"};
    constexpr int kRawFeatures = 19;
    constexpr int kDropped = 2;  // region-pixel-count

    LabeledDataset ds;
    ds.provenance = "uci-segment";
    for (int j = 0; j < kRawFeatures; ++j)
        if (j != kDropped) ds.feature_names.push_back(kFeatures[j]);

    std::map<std::string, int> label_ids;
    std::vector<double> xs;
    for (const auto& path : raw_paths) {
        std::ifstream in(path);
        if (!in) throw DataError("convert_uci_segment: cannot open " + path);
        std::string line;
        while (std::getline(in, line)) {
            const auto toks = split_line(line, ',');
            if (toks.size() != kRawFeatures + 1) continue;  // header/meta lines
            double probe = 0.0;
            if (parse_double(toks[0], &probe)) continue;  // label must be a word
            bool ok = true;
            std::vector<double> row;
            row.reserve(kRawFeatures - 1);
            for (int j = 0; j < kRawFeatures; ++j) {
                double v = 0.0;
                if (!parse_double(toks[static_cast<std::size_t>(j) + 1], &v)) {
                    ok = false;
                    break;
                }
                if (j != kDropped) row.push_back(v);
            }
            if (!ok) throw DataError("convert_uci_segment: malformed row in " + path);
            const std::string label = to_lower(toks[0]);
            auto it = label_ids.find(label);
            if (it == label_ids.end()) {
                it = label_ids.emplace(label, static_cast<int>(ds.class_names.size())).first;
                ds.class_names.push_back(label);
            }
            ds.y.push_back(it->second);
            xs.insert(xs.end(), row.begin(), row.end());
        }
    }
    if (ds.y.empty()) throw DataError("convert_uci_segment: no data rows found");
    ds.X = Array({static_cast<int>(ds.y.size()), kRawFeatures - 1}, std::move(xs));
    return ds;
}

LabeledDataset convert_uci_sensorless(const std::string& raw_path) {
    std::ifstream in(raw_path);
    if (!in) throw DataError("convert_uci_sensorless: cannot open " + raw_path);

    LabeledDataset ds;
    ds.provenance = "uci-sensorless";
    std::map<std::string, int> label_ids;
    std::vector<double> xs;
    std::string line;
    int n_features = -1;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::vector<std::string> toks;
        std::string tok;
        while (ss >> tok) toks.push_back(tok);
        if (toks.empty()) continue;
        if (n_features < 0) n_features = static_cast<int>(toks.size()) - 1;
        if (static_cast<int>(toks.size()) != n_features + 1)
            throw DataError("convert_uci_sensorless: ragged row in " + raw_path);
        for (int j = 0; j < n_features; ++j) {
            double v = 0.0;
            if (!parse_double(toks[static_cast<std::size_t>(j)], &v))
                throw DataError("convert_uci_sensorless: non-numeric value '" + toks[static_cast<std::size_t>(j)] +
                                "'");
            xs.push_back(v);
        }
        // Labels are integers 1..11; keep the token as the class name.
        std::string label = toks.back();
        if (label.size() >= 2 && label.substr(label.size() - 2) == ".0") label = label.substr(0, label.size() - 2);
        auto it = label_ids.find(label);
        if (it == label_ids.end()) {
            it = label_ids.emplace(label, static_cast<int>(ds.class_names.size())).first;
            ds.class_names.push_back(label);
        }
        ds.y.push_back(it->second);
    }
    if (ds.y.empty()) throw DataError("convert_uci_sensorless: no data rows found");
    for (int j = 0; j < n_features; ++j) ds.feature_names.push_back("f" + std::to_string(j + 1));
    ds.X = Array({static_cast<int>(ds.y.size()), n_features}, std::move(xs));
    return ds;
}

}  // namespace postnet
