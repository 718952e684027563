#pragma once

// Time-point module: a decision tree whose impurity is measured over the set
// of distinct DIMMs reaching a node, not over samples. A split (f, v) sends a
// DIMM left when any of its samples has x_f == v. Positive leaves are read
// off as conjunctive rules and matched against single CEs in a stream.

#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "m2mfp/hierarchy.hpp"

namespace m2mfp {

struct TimePointSample {
  std::string dimm_uid;
  std::vector<double> features;
  int dimm_label = 0;
};

/// Schema of time-point features: the event's bit-level 2d-BSFE then CE type.
inline FeatureSchema time_point_schema() {
  FeatureSchema s;
  s.names = bsfe_2d_feature_names(kDefaultPooling, "bit.");
  s.names.emplace_back("ce_type");
  return s;
}

inline std::vector<double> time_point_features(const CeEvent& e, BitFeatureCache& cache) {
  std::vector<double> out = cache.get(e.bit_matrix);
  out.push_back(e.error_type == ErrorType::Scrub ? 1.0 : 0.0);
  return out;
}

/// 1 - p+^2 - p-^2 over DIMM counts; 0 for an empty set.
inline double dimm_gini(std::size_t n_pos, std::size_t n_neg) {
  const std::size_t n = n_pos + n_neg;
  if (n == 0) return 0.0;
  const double p = static_cast<double>(n_pos) / static_cast<double>(n);
  const double q = static_cast<double>(n_neg) / static_cast<double>(n);
  return 1.0 - p * p - q * q;
}

struct DimmTreeConfig {
  double theta = 50.0;  // purity ratio that ends growth
  int max_depth = 4;
  int max_candidates = 64;  // distinct split values kept per feature

  void validate() const {
    if (!(theta > 0.0)) fail(ErrorKind::Config, "theta must be positive");
    if (max_depth < 0) fail(ErrorKind::Config, "tree max_depth must be non-negative");
    if (max_candidates <= 0) fail(ErrorKind::Config, "max_candidates must be positive");
  }
};

struct DimmTree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double value = 0.0;
    int left = -1;   // DIMMs containing x_f == value
    int right = -1;  // DIMMs that never do
    int label = 0;   // leaf output
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
  };
  std::vector<Node> nodes;  // nodes[0] is the root
  FeatureSchema schema;
  DimmTreeConfig config;

  int depth(int i = 0) const {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    if (n.feature < 0) return 0;
    return 1 + std::max(depth(n.left), depth(n.right));
  }
};

namespace detail {

class DimmTreeBuilder {
 public:
  DimmTreeBuilder(std::span<const TimePointSample> samples, const DimmTreeConfig& cfg) : cfg_(cfg) {
    std::map<std::string, std::size_t> index;
    for (const auto& s : samples) {
      auto [it, inserted] = index.emplace(s.dimm_uid, labels_.size());
      if (inserted) {
        labels_.push_back(s.dimm_label);
      } else if (labels_[it->second] != s.dimm_label) {
        fail(ErrorKind::Data, "DIMM " + s.dimm_uid + " has samples with different labels");
      }
      if (n_features_ == 0) n_features_ = s.features.size();
      if (s.features.size() != n_features_) fail(ErrorKind::Data, "time-point samples differ in length");
    }
    // Distinct values per (DIMM, feature).
    std::vector<std::vector<std::vector<double>>> values(
        labels_.size(), std::vector<std::vector<double>>(n_features_));
    for (const auto& s : samples) {
      auto& per_dimm = values[index.at(s.dimm_uid)];
      for (std::size_t f = 0; f < n_features_; ++f) per_dimm[f].push_back(s.features[f]);
    }
    for (auto& per_dimm : values) {
      for (auto& v : per_dimm) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
      }
    }
    // Candidate values: the most frequent (by DIMM count) per feature, kept
    // in ascending order.
    candidates_.resize(n_features_);
    members_.resize(n_features_);
    for (std::size_t f = 0; f < n_features_; ++f) {
      std::map<double, std::size_t> frequency;
      for (const auto& per_dimm : values) {
        for (double v : per_dimm[f]) ++frequency[v];
      }
      std::vector<std::pair<double, std::size_t>> ranked(frequency.begin(), frequency.end());
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      if (ranked.size() > static_cast<std::size_t>(cfg_.max_candidates)) {
        ranked.resize(static_cast<std::size_t>(cfg_.max_candidates));
      }
      for (const auto& [v, count] : ranked) candidates_[f].push_back(v);
      std::sort(candidates_[f].begin(), candidates_[f].end());
      for (double v : candidates_[f]) {
        std::vector<std::uint8_t> contains(labels_.size(), 0);
        for (std::size_t d = 0; d < labels_.size(); ++d) {
          contains[d] = std::binary_search(values[d][f].begin(), values[d][f].end(), v) ? 1 : 0;
        }
        members_[f].push_back(std::move(contains));
      }
    }
  }

  DimmTree build(FeatureSchema schema) {
    DimmTree tree;
    tree.schema = std::move(schema);
    tree.config = cfg_;
    if (labels_.empty()) fail(ErrorKind::Data, "build_tree: no samples");
    std::vector<std::size_t> all(labels_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    tree.nodes.emplace_back();
    grow(tree, 0, all, 0);
    return tree;
  }

 private:
  void grow(DimmTree& tree, std::size_t node, const std::vector<std::size_t>& dimms, int depth) {
    std::size_t pos = 0;
    for (std::size_t d : dimms) pos += labels_[d] == 1 ? 1 : 0;
    const std::size_t neg = dimms.size() - pos;
    auto& n = tree.nodes[node];
    n.n_pos = pos;
    n.n_neg = neg;
    n.label = pos >= neg ? 1 : 0;

    // A class of size zero counts as an infinite purity ratio.
    const bool pure = pos == 0 || neg == 0 ||
                      static_cast<double>(pos) / static_cast<double>(neg) > cfg_.theta ||
                      static_cast<double>(neg) / static_cast<double>(pos) > cfg_.theta;
    if (pure || depth >= cfg_.max_depth || dimms.size() <= 1) return;

    const double parent = dimm_gini(pos, neg);
    const double total = static_cast<double>(dimms.size());
    int best_f = -1;
    std::size_t best_v = 0;
    double best = parent - 1e-12;  // must strictly improve
    for (std::size_t f = 0; f < n_features_; ++f) {
      for (std::size_t v = 0; v < candidates_[f].size(); ++v) {
        const auto& contains = members_[f][v];
        std::size_t lp = 0, ln = 0;
        for (std::size_t d : dimms) {
          if (!contains[d]) continue;
          (labels_[d] == 1 ? lp : ln) += 1;
        }
        const std::size_t rp = pos - lp, rn = neg - ln;
        const double weighted = (static_cast<double>(lp + ln) / total) * dimm_gini(lp, ln) +
                                (static_cast<double>(rp + rn) / total) * dimm_gini(rp, rn);
        if (weighted < best - 1e-12 || (best_f < 0 && weighted < best)) {
          best = weighted;
          best_f = static_cast<int>(f);
          best_v = v;
        }
      }
    }
    if (best_f < 0) return;

    const auto& contains = members_[static_cast<std::size_t>(best_f)][best_v];
    std::vector<std::size_t> left, right;
    for (std::size_t d : dimms) (contains[d] ? left : right).push_back(d);

    const int left_index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& split = tree.nodes[node];
    split.feature = best_f;
    split.value = candidates_[static_cast<std::size_t>(best_f)][best_v];
    split.left = left_index;
    split.right = left_index + 1;
    grow(tree, static_cast<std::size_t>(left_index), left, depth + 1);
    grow(tree, static_cast<std::size_t>(left_index + 1), right, depth + 1);
  }

  DimmTreeConfig cfg_;
  std::vector<int> labels_;
  std::size_t n_features_ = 0;
  std::vector<std::vector<double>> candidates_;
  std::vector<std::vector<std::vector<std::uint8_t>>> members_;  // [feature][candidate][dimm]
};

}  // namespace detail

inline DimmTree build_tree(std::span<const TimePointSample> samples, const DimmTreeConfig& cfg = {},
                           FeatureSchema schema = time_point_schema()) {
  cfg.validate();
  if (samples.empty()) fail(ErrorKind::Data, "build_tree: no samples");
  if (schema.names.size() != samples.front().features.size()) {
    schema.names.clear();
    for (std::size_t i = 0; i < samples.front().features.size(); ++i) {
      schema.names.push_back("f" + std::to_string(i));
    }
  }
  return detail::DimmTreeBuilder(samples, cfg).build(std::move(schema));
}

enum class Polarity { Contains, NotContains };

struct Literal {
  int feature = 0;
  double value = 0.0;
  Polarity polarity = Polarity::Contains;

  bool holds(std::span<const double> x) const {
    const bool equal = x[static_cast<std::size_t>(feature)] == value;
    return polarity == Polarity::Contains ? equal : !equal;
  }
  bool operator==(const Literal&) const = default;
};

struct Rule {
  std::vector<Literal> literals;  // empty: always true

  bool holds(std::span<const double> x) const {
    return std::all_of(literals.begin(), literals.end(), [&](const Literal& l) { return l.holds(x); });
  }
  bool operator==(const Rule&) const = default;
};

struct RuleBase {
  FeatureSchema schema;
  std::vector<Rule> rules;

  bool operator==(const RuleBase&) const = default;
};

/// One rule per positive leaf, in left-to-right leaf order.
inline RuleBase extract_rules(const DimmTree& tree) {
  RuleBase out;
  out.schema = tree.schema;
  std::vector<Literal> path;
  auto walk = [&](auto&& self, int i) -> void {
    const auto& n = tree.nodes[static_cast<std::size_t>(i)];
    if (n.feature < 0) {
      if (n.label == 1) out.rules.push_back({path});
      return;
    }
    path.push_back({n.feature, n.value, Polarity::Contains});
    self(self, n.left);
    path.back().polarity = Polarity::NotContains;
    self(self, n.right);
    path.pop_back();
  };
  walk(walk, 0);
  return out;
}

/// True iff some rule holds for this single event's features.
inline bool match_event(const RuleBase& rules, std::string_view schema_fingerprint,
                        std::span<const double> features) {
  if (schema_fingerprint != rules.schema.fingerprint() || features.size() != rules.schema.names.size()) {
    fail(ErrorKind::Config, "event features do not match the rule base schema");
  }
  return std::any_of(rules.rules.begin(), rules.rules.end(),
                     [&](const Rule& r) { return r.holds(features); });
}

inline std::string describe(const Literal& l, const FeatureSchema& schema) {
  return std::string(l.polarity == Polarity::Contains ? "contains(" : "not_contains(") +
         schema.names[static_cast<std::size_t>(l.feature)] + " = " + format_number(l.value) + ")";
}

/// Human-readable, versioned text: one `rule` record per line.
inline void write_rule_base(std::ostream& out, const RuleBase& rb, std::string_view stamp = "") {
  out << "# m2mfp " << kVersion << " time-point rule base";
  if (!stamp.empty()) out << ' ' << stamp;
  out << '\n';
  out << "# A rule fires on a CE when all of its literals hold for that CE.\n";
  out << "format m2mfp.rules 1\n";
  out << "schema " << rb.schema.fingerprint() << ' ' << rb.schema.names.size() << '\n';
  for (std::size_t i = 0; i < rb.schema.names.size(); ++i) {
    out << "feature " << i << ' ' << rb.schema.names[i] << '\n';
  }
  for (std::size_t i = 0; i < rb.rules.size(); ++i) {
    out << "rule " << i + 1 << ':';
    if (rb.rules[i].literals.empty()) out << " TRUE";
    for (std::size_t k = 0; k < rb.rules[i].literals.size(); ++k) {
      out << (k == 0 ? " " : " AND ") << describe(rb.rules[i].literals[k], rb.schema);
    }
    out << '\n';
  }
}

inline RuleBase read_rule_base(std::istream& in) {
  if (!in) fail(ErrorKind::Data, "rule base is not readable");
  RuleBase rb;
  std::string line, fingerprint_text;
  bool format_seen = false;
  std::map<std::string, int> by_name;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string name;
      int version = 0;
      ls >> name >> version;
      if (name != "m2mfp.rules" || version != 1) fail(ErrorKind::Data, "unsupported rule base format");
      format_seen = true;
    } else if (tag == "schema") {
      ls >> fingerprint_text;
    } else if (tag == "feature") {
      std::size_t index = 0;
      std::string name;
      ls >> index >> name;
      if (index != rb.schema.names.size()) fail(ErrorKind::Data, "rule base feature list out of order");
      by_name[name] = static_cast<int>(index);
      rb.schema.names.push_back(name);
    } else if (tag == "rule") {
      const auto colon = line.find(':');
      if (colon == std::string::npos) fail(ErrorKind::Data, "malformed rule line");
      std::string body = line.substr(colon + 1);
      Rule rule;
      std::size_t pos = 0;
      while ((pos = body.find('(', pos)) != std::string::npos) {
        const std::size_t start = body.rfind(' ', pos);
        const std::string kind = body.substr(start + 1, pos - start - 1);
        const std::size_t close = body.find(')', pos);
        const std::size_t eq = body.find(" = ", pos);
        if (close == std::string::npos || eq == std::string::npos || eq > close) {
          fail(ErrorKind::Data, "malformed rule literal");
        }
        const std::string name = body.substr(pos + 1, eq - pos - 1);
        auto value = parse_double(body.substr(eq + 3, close - eq - 3));
        auto it = by_name.find(name);
        if (!value || it == by_name.end()) fail(ErrorKind::Data, "unknown feature in rule: " + name);
        rule.literals.push_back(
            {it->second, *value, kind == "contains" ? Polarity::Contains : Polarity::NotContains});
        pos = close;
      }
      rb.rules.push_back(std::move(rule));
    }
  }
  if (!format_seen) fail(ErrorKind::Data, "rule base has no format line");
  if (rb.schema.fingerprint() != fingerprint_text) {
    fail(ErrorKind::Data, "rule base feature list does not match its schema fingerprint");
  }
  return rb;
}

inline nlohmann::ordered_json tree_to_json(const DimmTree& tree, int i = 0) {
  const auto& n = tree.nodes[static_cast<std::size_t>(i)];
  nlohmann::ordered_json j;
  j["dimms_faulty"] = n.n_pos;
  j["dimms_healthy"] = n.n_neg;
  if (n.feature < 0) {
    j["leaf"] = n.label;
    return j;
  }
  j["feature"] = tree.schema.names[static_cast<std::size_t>(n.feature)];
  j["value"] = n.value;
  j["contains"] = tree_to_json(tree, n.left);
  j["not_contains"] = tree_to_json(tree, n.right);
  return j;
}

}  // namespace m2mfp
