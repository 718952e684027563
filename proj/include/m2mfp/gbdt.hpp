#pragma once

// Histogram-based gradient-boosted trees with logistic loss, used as the
// time-patch classifier, plus DIMM-grouped cross-validated threshold
// selection and split-gain feature importance.
//
// Sample weights are normalised to sum to one (positives scaled by the
// positive-class weight first), so replicating the whole training set leaves
// every gradient statistic unchanged. Split candidates come from per-feature
// quantile bins (at most 256) computed on value counts, so any strictly
// monotone rescaling of a feature bins the training rows identically.

#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "m2mfp/eval.hpp"
#include "m2mfp/hierarchy.hpp"

namespace m2mfp {

struct TrainConfig {
  int n_trees = 200;
  int max_depth = 6;
  double learning_rate = 0.05;
  int min_samples_leaf = 20;
  double l2_regularization = 1e-4;  // in units of normalised sample weight
  std::optional<double> positive_weight;  // nullopt: |neg| / |pos|
  int max_bins = 256;
  std::uint64_t seed = 42;

  void validate() const {
    if (n_trees < 0) fail(ErrorKind::Config, "n_trees must be non-negative");
    if (max_depth <= 0) fail(ErrorKind::Config, "max_depth must be positive");
    if (!(learning_rate > 0.0)) fail(ErrorKind::Config, "learning_rate must be positive");
    if (min_samples_leaf <= 0) fail(ErrorKind::Config, "min_samples_leaf must be positive");
    if (l2_regularization < 0.0) fail(ErrorKind::Config, "l2_regularization must be non-negative");
    if (positive_weight && !(*positive_weight > 0.0)) {
      fail(ErrorKind::Config, "positive_weight must be positive");
    }
    if (max_bins < 2 || max_bins > 256) fail(ErrorKind::Config, "max_bins must be in [2, 256]");
  }
};

struct RegressionTree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // go left iff x <= threshold
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf output (before learning-rate scaling)
    double gain = 0.0;
  };
  std::vector<Node> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }
};

struct GbdtModel {
  std::vector<RegressionTree> trees;
  double learning_rate = 0.05;
  double base_score = 0.0;  // log-odds of the weighted positive prior
  FeatureSchema schema;
  TrainConfig config;
  std::optional<double> threshold;  // decision threshold, when selected

  double raw_score(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return base_score + learning_rate * sum;
  }
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Probability in [0, 1]. The caller's schema fingerprint must match the
/// model's.
inline double predict_score(const GbdtModel& model, std::string_view schema_fingerprint,
                            std::span<const double> features) {
  if (schema_fingerprint != model.schema.fingerprint()) {
    fail(ErrorKind::Config, "feature schema fingerprint mismatch: model " +
                                model.schema.fingerprint() + ", input " + std::string(schema_fingerprint));
  }
  if (features.size() != model.schema.names.size()) {
    fail(ErrorKind::Config, "feature vector length does not match the model schema");
  }
  return sigmoid(model.raw_score(features));
}

namespace detail {

struct BinnedFeature {
  std::vector<double> cuts;  // bin b holds values in (cuts[b-1], cuts[b]]
};

inline BinnedFeature make_bins(std::vector<double> values, int max_bins) {
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, std::uint64_t>> distinct;
  for (double v : values) {
    if (!distinct.empty() && distinct.back().first == v) {
      ++distinct.back().second;
    } else {
      distinct.emplace_back(v, 1);
    }
  }
  BinnedFeature out;
  if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
    for (const auto& [v, n] : distinct) out.cuts.push_back(v);
    return out;
  }
  const auto total = static_cast<std::uint64_t>(values.size());
  const auto bins = static_cast<std::uint64_t>(max_bins);
  std::uint64_t acc = 0;
  std::uint64_t next = 1;
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    acc += distinct[i].second;
    if (i + 1 == distinct.size()) {
      out.cuts.push_back(distinct[i].first);
    } else if (acc * bins >= total * next) {
      out.cuts.push_back(distinct[i].first);
      while (acc * bins >= total * next) ++next;
    }
  }
  return out;
}

struct HistBin {
  double grad = 0.0;
  double hess = 0.0;
  std::uint32_t count = 0;
};

// One flat histogram covering every active feature; feature a owns bins
// [offsets[a], offsets[a + 1]).
using Histogram = std::vector<HistBin>;

struct SplitChoice {
  int feature = -1;  // index into the active feature list
  int bin = -1;
  double gain = 0.0;
};

// Bin codes in compressed row form. Each feature has a default bin (its
// most frequent one); a row stores only the (feature, code) pairs that
// differ from the default, packed as feature << 8 | code.
struct BinnedRows {
  std::vector<std::uint32_t> entries;
  std::vector<std::size_t> row_start;  // n + 1 offsets into entries
  std::vector<std::uint8_t> default_bin;
  std::vector<std::size_t> offsets;  // histogram offsets, n_active + 1
  std::size_t n_active = 0;

  std::uint8_t code(std::uint32_t row, std::size_t feature) const {
    const auto* first = entries.data() + row_start[row];
    const auto* last = entries.data() + row_start[row + 1];
    const auto key = static_cast<std::uint32_t>(feature) << 8;
    const auto* it = std::lower_bound(first, last, key);
    if (it != last && (*it >> 8) == feature) return static_cast<std::uint8_t>(*it & 0xff);
    return default_bin[feature];
  }
};

class TreeGrower {
 public:
  TreeGrower(const BinnedRows& binned, const std::vector<BinnedFeature>& features,
             const std::vector<int>& active, const TrainConfig& cfg)
      : binned_(binned), features_(features), active_(active), cfg_(cfg) {}

  RegressionTree grow(std::vector<std::uint32_t> rows, const std::vector<double>& grad,
                      const std::vector<double>& hess) {
    grad_ = &grad;
    hess_ = &hess;
    RegressionTree tree;
    tree.nodes.emplace_back();
    auto hist = build(rows);
    expand(tree, 0, rows, std::move(hist), 0);
    return tree;
  }

 private:
  Histogram build(std::span<const std::uint32_t> rows) const {
    Histogram hist(binned_.offsets.back());
    const std::size_t* offsets = binned_.offsets.data();
    HistBin* out = hist.data();
    double g_total = 0.0, h_total = 0.0;
    for (std::uint32_t r : rows) {
      const double g = (*grad_)[r];
      const double h = (*hess_)[r];
      g_total += g;
      h_total += h;
      const std::uint32_t* e = binned_.entries.data() + binned_.row_start[r];
      const std::uint32_t* end = binned_.entries.data() + binned_.row_start[r + 1];
      for (; e != end; ++e) {
        HistBin& bin = out[offsets[*e >> 8] + (*e & 0xff)];
        bin.grad += g;
        bin.hess += h;
        ++bin.count;
      }
    }
    // Default bins receive whatever the stored entries did not.
    const auto n = static_cast<std::uint32_t>(rows.size());
    for (std::size_t a = 0; a < binned_.n_active; ++a) {
      double g = g_total, h = h_total;
      std::uint32_t c = n;
      const std::size_t d = offsets[a] + binned_.default_bin[a];
      for (std::size_t b = offsets[a]; b < offsets[a + 1]; ++b) {
        if (b == d) continue;
        g -= out[b].grad;
        h -= out[b].hess;
        c -= out[b].count;
      }
      out[d] = {g, h, c};
    }
    return hist;
  }

  double objective(double g, double h) const { return g * g / (h + cfg_.l2_regularization); }

  SplitChoice best_split(const Histogram& hist, double g_total, double h_total,
                         std::uint32_t n_total) const {
    SplitChoice best;
    const double parent = objective(g_total, h_total);
    const auto min_leaf = static_cast<std::uint32_t>(cfg_.min_samples_leaf);
    for (std::size_t a = 0; a < binned_.n_active; ++a) {
      double gl = 0.0, hl = 0.0;
      std::uint32_t nl = 0;
      const std::size_t first = binned_.offsets[a];
      const std::size_t n_bins = binned_.offsets[a + 1] - first;
      for (std::size_t b = 0; b + 1 < n_bins; ++b) {
        const HistBin& bin = hist[first + b];
        gl += bin.grad;
        hl += bin.hess;
        nl += bin.count;
        if (nl < min_leaf) continue;
        if (n_total - nl < min_leaf) break;
        const double gain = objective(gl, hl) + objective(g_total - gl, h_total - hl) - parent;
        if (gain > best.gain + 1e-15) {
          best = {static_cast<int>(a), static_cast<int>(b), gain};
        }
      }
    }
    return best;
  }

  void expand(RegressionTree& tree, std::size_t node, std::vector<std::uint32_t>& rows, Histogram hist,
              int depth) {
    double g = 0.0, h = 0.0;
    for (std::uint32_t r : rows) {
      g += (*grad_)[r];
      h += (*hess_)[r];
    }
    tree.nodes[node].value = -g / (h + cfg_.l2_regularization);
    if (depth >= cfg_.max_depth || rows.size() < 2 * static_cast<std::size_t>(cfg_.min_samples_leaf)) {
      return;
    }
    const SplitChoice split = best_split(hist, g, h, static_cast<std::uint32_t>(rows.size()));
    if (split.feature < 0) return;

    const auto a = static_cast<std::size_t>(split.feature);
    const int feature = active_[a];
    std::vector<std::uint32_t> left_rows, right_rows;
    for (std::uint32_t r : rows) {
      const std::uint8_t code = binned_.code(r, a);
      (code <= split.bin ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    auto& n = tree.nodes[node];
    n.feature = feature;
    n.threshold = features_[static_cast<std::size_t>(feature)].cuts[static_cast<std::size_t>(split.bin)];
    n.gain = split.gain;
    n.left = static_cast<int>(tree.nodes.size());
    n.right = n.left + 1;
    const auto left_index = static_cast<std::size_t>(n.left);
    const auto right_index = static_cast<std::size_t>(n.right);
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();

    // Build the smaller child's histogram and derive the sibling by
    // subtraction from the parent.
    const bool left_small = left_rows.size() <= right_rows.size();
    auto small_hist = build(left_small ? left_rows : right_rows);
    for (std::size_t i = 0; i < hist.size(); ++i) {
      hist[i].grad -= small_hist[i].grad;
      hist[i].hess -= small_hist[i].hess;
      hist[i].count -= small_hist[i].count;
    }
    auto& large_hist = hist;
    if (left_small) {
      expand(tree, left_index, left_rows, std::move(small_hist), depth + 1);
      expand(tree, right_index, right_rows, std::move(large_hist), depth + 1);
    } else {
      expand(tree, left_index, left_rows, std::move(large_hist), depth + 1);
      expand(tree, right_index, right_rows, std::move(small_hist), depth + 1);
    }
  }

  const BinnedRows& binned_;
  const std::vector<BinnedFeature>& features_;
  const std::vector<int>& active_;
  const TrainConfig& cfg_;
  const std::vector<double>* grad_ = nullptr;
  const std::vector<double>* hess_ = nullptr;
};

}  // namespace detail

/// Trains on the given rows of `set` (all rows when `rows` is empty).
inline GbdtModel train(const SampleSet& set, const TrainConfig& cfg,
                       std::span<const std::size_t> rows = {}) {
  cfg.validate();
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(set.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows = all;
  }
  const std::size_t n = rows.size();
  const std::size_t n_features = set.schema.names.size();
  std::size_t n_pos = 0;
  for (std::size_t r : rows) n_pos += set.samples[r].label == 1 ? 1 : 0;
  if (n_pos == 0 || n_pos == n) fail(ErrorKind::Data, "training data must contain both classes");

  const double pos_weight =
      cfg.positive_weight.value_or(static_cast<double>(n - n_pos) / static_cast<double>(n_pos));
  const double total_weight = static_cast<double>(n - n_pos) + pos_weight * static_cast<double>(n_pos);
  std::vector<double> weight(n), label(n);
  for (std::size_t i = 0; i < n; ++i) {
    label[i] = set.samples[rows[i]].label == 1 ? 1.0 : 0.0;
    weight[i] = (label[i] == 1.0 ? pos_weight : 1.0) / total_weight;
  }

  std::vector<detail::BinnedFeature> features(n_features);
  std::vector<std::vector<std::uint8_t>> columns;
  std::vector<int> active;
  std::vector<double> column(n);
  for (std::size_t f = 0; f < n_features; ++f) {
    for (std::size_t i = 0; i < n; ++i) column[i] = set.samples[rows[i]].features[f];
    features[f] = detail::make_bins(column, cfg.max_bins);
    const auto& cuts = features[f].cuts;
    if (cuts.size() < 2) continue;  // constant feature: no split candidates
    std::vector<std::uint8_t> codes(n);
    for (std::size_t i = 0; i < n; ++i) {
      codes[i] = static_cast<std::uint8_t>(std::lower_bound(cuts.begin(), cuts.end(), column[i]) - cuts.begin());
    }
    columns.push_back(std::move(codes));
    active.push_back(static_cast<int>(f));
  }
  detail::BinnedRows binned;
  binned.n_active = active.size();
  binned.offsets.push_back(0);
  for (std::size_t a = 0; a < active.size(); ++a) {
    const auto& cuts = features[static_cast<std::size_t>(active[a])].cuts;
    binned.offsets.push_back(binned.offsets.back() + cuts.size());
    std::vector<std::size_t> freq(cuts.size(), 0);
    for (std::uint8_t c : columns[a]) ++freq[c];
    binned.default_bin.push_back(
        static_cast<std::uint8_t>(std::max_element(freq.begin(), freq.end()) - freq.begin()));
  }
  binned.row_start.reserve(n + 1);
  binned.row_start.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < columns.size(); ++a) {
      if (columns[a][i] != binned.default_bin[a]) {
        binned.entries.push_back(static_cast<std::uint32_t>(a) << 8 | columns[a][i]);
      }
    }
    binned.row_start.push_back(binned.entries.size());
  }
  columns.clear();

  GbdtModel model;
  model.learning_rate = cfg.learning_rate;
  model.schema = set.schema;
  model.config = cfg;
  const double prior = pos_weight * static_cast<double>(n_pos) / total_weight;
  model.base_score = std::log(prior / (1.0 - prior));

  std::vector<double> margin(n, model.base_score), grad(n), hess(n);
  std::vector<std::uint32_t> all_rows(n);
  for (std::size_t i = 0; i < n; ++i) all_rows[i] = static_cast<std::uint32_t>(i);
  detail::TreeGrower grower(binned, features, active, cfg);
  for (int t = 0; t < cfg.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = weight[i] * (p - label[i]);
      hess[i] = weight[i] * p * (1.0 - p);
    }
    RegressionTree tree = grower.grow(all_rows, grad, hess);
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += cfg.learning_rate * tree.predict(set.samples[rows[i]].features);
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

/// Total split gain per feature, sorted by gain descending (ties by name).
inline std::vector<std::pair<std::string, double>> feature_importance(const GbdtModel& model) {
  std::map<std::string, double> totals;
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes) {
      if (node.feature >= 0) totals[model.schema.names[static_cast<std::size_t>(node.feature)]] += node.gain;
    }
  }
  std::vector<std::pair<std::string, double>> out(totals.begin(), totals.end());
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

/// Picks the threshold maximising the mean of per-fold F1 curves. Candidate
/// cuts are the distinct scores plus "above every score"; among equally good
/// candidates the highest (fewest alarms) wins, and the returned threshold is
/// the midpoint between it and the next lower distinct score.
inline double choose_threshold(std::span<const ThresholdCurve> folds, std::vector<double> scores) {
  if (folds.empty()) fail(ErrorKind::Config, "choose_threshold: no folds");
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  const double above = scores.empty() ? 1.0 : std::nextafter(scores.back(), 2.0);
  std::vector<double> candidates(scores);
  candidates.push_back(above);

  auto mean_f1 = [&](double tau) {
    double sum = 0.0;
    for (const auto& fold : folds) sum += fold.at(tau).f1;
    return sum / static_cast<double>(folds.size());
  };
  std::size_t best = candidates.size() - 1;
  double best_f1 = mean_f1(candidates[best]);
  for (std::size_t i = candidates.size() - 1; i-- > 0;) {
    const double f1 = mean_f1(candidates[i]);
    if (f1 > best_f1 + 1e-12) {
      best_f1 = f1;
      best = i;
    }
  }
  const double lower = best == 0 ? 0.0 : candidates[best - 1];
  const double upper = best + 1 == candidates.size() ? 1.0 : candidates[best];
  return 0.5 * (lower + upper);
}

struct ThresholdSelection {
  double threshold = 0.5;
  double mean_f1 = 0.0;
};

/// k-fold cross-validated threshold. Folds partition DIMMs, stratified by
/// whether a DIMM has any positive sample; folds are scored with the DIMM
/// level F1 of evaluate() under `eval` (its test period is ignored).
inline ThresholdSelection select_threshold(const SampleSet& set,
                                           const std::vector<FailureRecord>& failures,
                                           const TrainConfig& cfg, EvalConfig eval, int k_folds = 5) {
  if (k_folds < 2) fail(ErrorKind::Config, "select_threshold: k_folds must be at least 2");
  eval.test_start = std::numeric_limits<Timestamp>::min();
  eval.test_end = std::numeric_limits<Timestamp>::max();

  std::map<std::string, bool> dimm_positive;
  for (const auto& s : set.samples) {
    auto& p = dimm_positive[s.dimm_uid];
    p = p || s.label == 1;
  }
  std::vector<std::string> positives, negatives;
  for (const auto& [uid, p] : dimm_positive) (p ? positives : negatives).push_back(uid);
  if (positives.size() < static_cast<std::size_t>(k_folds)) {
    fail(ErrorKind::Data, "select_threshold: need at least " + std::to_string(k_folds) +
                              " DIMMs with positive samples, have " + std::to_string(positives.size()));
  }
  Rng rng(cfg.seed ^ 0x5eedf01dULL);
  rng.shuffle(positives);
  rng.shuffle(negatives);
  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < positives.size(); ++i) fold_of[positives[i]] = static_cast<int>(i % k_folds);
  for (std::size_t i = 0; i < negatives.size(); ++i) fold_of[negatives[i]] = static_cast<int>(i % k_folds);

  std::vector<ThresholdCurve> curves;
  std::vector<double> all_scores;
  for (int k = 0; k < k_folds; ++k) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
      (fold_of[set.samples[i].dimm_uid] == k ? test_rows : train_rows).push_back(i);
    }
    const GbdtModel model = train(set, cfg, train_rows);
    const std::string fp = model.schema.fingerprint();
    std::vector<ThresholdCurve::Scored> scored;
    std::set<std::string> fold_dimms;
    for (std::size_t i : test_rows) {
      const auto& s = set.samples[i];
      const double score = predict_score(model, fp, s.features);
      scored.push_back({s.dimm_uid, s.sample_time, score});
      all_scores.push_back(score);
      fold_dimms.insert(s.dimm_uid);
    }
    std::vector<FailureRecord> fold_failures;
    // Only failures that some training sample can reach count toward recall.
    for (const auto& f : failures) {
      if (fold_dimms.count(f.dimm_uid) && dimm_positive[f.dimm_uid]) fold_failures.push_back(f);
    }
    curves.emplace_back(scored, fold_failures, eval);
  }
  ThresholdSelection out;
  out.threshold = choose_threshold(curves, std::move(all_scores));
  double sum = 0.0;
  for (const auto& c : curves) sum += c.at(out.threshold).f1;
  out.mean_f1 = sum / static_cast<double>(curves.size());
  return out;
}

// Persistence: a versioned JSON document with nested split/leaf records.

namespace detail {

inline nlohmann::ordered_json tree_to_json(const GbdtModel& m, const RegressionTree& t, int i) {
  const auto& n = t.nodes[static_cast<std::size_t>(i)];
  nlohmann::ordered_json j;
  if (n.feature < 0) {
    j["leaf"] = n.value;
    return j;
  }
  j["feature"] = n.feature;
  j["name"] = m.schema.names[static_cast<std::size_t>(n.feature)];
  j["threshold"] = n.threshold;
  j["gain"] = n.gain;
  j["value"] = n.value;
  j["left"] = tree_to_json(m, t, n.left);
  j["right"] = tree_to_json(m, t, n.right);
  return j;
}

inline int tree_from_json(const nlohmann::json& j, RegressionTree& t) {
  const int index = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  if (j.contains("leaf")) {
    t.nodes.back().value = j.at("leaf").get<double>();
    return index;
  }
  RegressionTree::Node n;
  n.feature = j.at("feature").get<int>();
  n.threshold = j.at("threshold").get<double>();
  n.gain = j.at("gain").get<double>();
  n.value = j.value("value", 0.0);
  t.nodes[static_cast<std::size_t>(index)] = n;
  const int left = tree_from_json(j.at("left"), t);
  const int right = tree_from_json(j.at("right"), t);
  t.nodes[static_cast<std::size_t>(index)].left = left;
  t.nodes[static_cast<std::size_t>(index)].right = right;
  return index;
}

}  // namespace detail

inline nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["n_trees"] = c.n_trees;
  j["max_depth"] = c.max_depth;
  j["learning_rate"] = c.learning_rate;
  j["min_samples_leaf"] = c.min_samples_leaf;
  j["l2_regularization"] = c.l2_regularization;
  j["positive_weight"] = c.positive_weight ? nlohmann::ordered_json(*c.positive_weight)
                                           : nlohmann::ordered_json("auto");
  j["max_bins"] = c.max_bins;
  j["seed"] = c.seed;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.n_trees = j.value("n_trees", c.n_trees);
  c.max_depth = j.value("max_depth", c.max_depth);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
  c.l2_regularization = j.value("l2_regularization", c.l2_regularization);
  if (j.contains("positive_weight") && j.at("positive_weight").is_number()) {
    c.positive_weight = j.at("positive_weight").get<double>();
  }
  c.max_bins = j.value("max_bins", c.max_bins);
  c.seed = j.value("seed", c.seed);
  return c;
}

inline void save_model(std::ostream& out, const GbdtModel& m,
                       const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
  nlohmann::ordered_json j;
  j["format"] = "m2mfp.gbdt";
  j["version"] = 1;
  j["generator"] = std::string(kVersion);
  j["schema_fingerprint"] = m.schema.fingerprint();
  j["config"] = train_config_to_json(m.config);
  j["learning_rate"] = m.learning_rate;
  j["base_score"] = m.base_score;
  j["threshold"] = m.threshold ? nlohmann::ordered_json(*m.threshold) : nlohmann::ordered_json();
  for (const auto& [k, v] : extra.items()) j[k] = v;
  j["features"] = m.schema.names;
  auto& trees = j["trees"] = nlohmann::ordered_json::array();
  for (const auto& t : m.trees) trees.push_back(detail::tree_to_json(m, t, 0));
  out << j.dump(1) << '\n';
}

inline GbdtModel load_model(std::istream& in) {
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || j.value("format", "") != "m2mfp.gbdt") {
    fail(ErrorKind::Data, "not an m2mfp gbdt model document");
  }
  if (j.value("version", 0) != 1) fail(ErrorKind::Data, "unsupported gbdt model version");
  GbdtModel m;
  m.config = train_config_from_json(j.at("config"));
  m.learning_rate = j.at("learning_rate").get<double>();
  m.base_score = j.at("base_score").get<double>();
  if (j.contains("threshold") && j.at("threshold").is_number()) m.threshold = j.at("threshold").get<double>();
  m.schema.names = j.at("features").get<std::vector<std::string>>();
  if (m.schema.fingerprint() != j.value("schema_fingerprint", "")) {
    fail(ErrorKind::Data, "model feature list does not match its schema fingerprint");
  }
  for (const auto& tj : j.at("trees")) {
    RegressionTree t;
    detail::tree_from_json(tj, t);
    m.trees.push_back(std::move(t));
  }
  return m;
}

}  // namespace m2mfp
