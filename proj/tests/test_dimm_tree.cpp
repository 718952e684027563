#include <gtest/gtest.h>

#include <sstream>

#include "m2mfp/dimm_tree.hpp"
#include "oracles.hpp"

using namespace m2mfp;

namespace {

FeatureSchema schema_of(std::size_t n) {
  FeatureSchema s;
  for (std::size_t i = 0; i < n; ++i) s.names.push_back("f" + std::to_string(i + 1));
  return s;
}

std::string dump(const DimmTree& t) { return tree_to_json(t).dump(); }

std::string text_of(const RuleBase& rb) {
  std::ostringstream out;
  write_rule_base(out, rb);
  return out.str();
}

// DIMM-level reading of a rule: contains literals need some sample with the
// value, not_contains literals need none.
bool dimm_matches(const Rule& rule, const std::vector<const TimePointSample*>& samples) {
  for (const auto& l : rule.literals) {
    bool seen = false;
    for (const auto* s : samples) seen = seen || s->features[static_cast<std::size_t>(l.feature)] == l.value;
    if (seen != (l.polarity == Polarity::Contains)) return false;
  }
  return true;
}

int route(const DimmTree& tree, const std::vector<const TimePointSample*>& samples, bool& contains_only) {
  int i = 0;
  contains_only = true;
  while (tree.nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& n = tree.nodes[static_cast<std::size_t>(i)];
    bool seen = false;
    for (const auto* s : samples) seen = seen || s->features[static_cast<std::size_t>(n.feature)] == n.value;
    contains_only = contains_only && seen;
    i = seen ? n.left : n.right;
  }
  return tree.nodes[static_cast<std::size_t>(i)].label;
}

std::vector<TimePointSample> random_instance(Rng& rng, int n_dimms, int n_features, int n_values) {
  std::vector<TimePointSample> out;
  for (int d = 0; d < n_dimms; ++d) {
    const int label = rng.bernoulli(0.4) ? 1 : 0;
    const int n = static_cast<int>(rng.uniform_int(1, 6));
    for (int k = 0; k < n; ++k) {
      TimePointSample s{"dimm" + std::to_string(d), {}, label};
      for (int f = 0; f < n_features; ++f) {
        const int biased = label == 1 && f == 0 ? n_values - 1 : 0;
        s.features.push_back(static_cast<double>(rng.bernoulli(0.5) ? biased : rng.uniform_int(0, n_values - 1)));
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace

TEST(DimmGini, Values) {
  EXPECT_EQ(dimm_gini(1, 1), 0.5);
  EXPECT_EQ(dimm_gini(4, 0), 0.0);
  EXPECT_EQ(dimm_gini(0, 0), 0.0);
  EXPECT_EQ(dimm_gini(3, 1), 0.375);
}

TEST(DimmTree, TwoDimmInstance) {
  const std::vector<TimePointSample> samples = {{"A", {1}, 1}, {"B", {0}, 0}};
  const auto tree = build_tree(samples, {}, schema_of(1));
  ASSERT_EQ(tree.nodes.size(), 3u);
  const auto& root = tree.nodes[0];
  EXPECT_EQ(root.feature, 0);
  // Both values separate the DIMMs perfectly; the declared tie rule keeps the
  // smaller one, so A ends up on the not-contains side.
  EXPECT_EQ(root.value, 0.0);
  EXPECT_EQ(tree.nodes[static_cast<std::size_t>(root.left)].label, 0);
  EXPECT_EQ(tree.nodes[static_cast<std::size_t>(root.right)].label, 1);

  const auto rules = extract_rules(tree);
  ASSERT_EQ(rules.rules.size(), 1u);
  const auto fp = rules.schema.fingerprint();
  EXPECT_TRUE(match_event(rules, fp, std::vector<double>{1}));
  EXPECT_FALSE(match_event(rules, fp, std::vector<double>{0}));
}

TEST(DimmTree, AllFaultyIsSingleLeaf) {
  const std::vector<TimePointSample> samples = {{"A", {1, 0}, 1}, {"B", {0, 1}, 1}, {"C", {2, 2}, 1}};
  const auto tree = build_tree(samples, {}, schema_of(2));
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_EQ(tree.nodes[0].label, 1);
  EXPECT_EQ(tree.depth(), 0);
}

TEST(DimmTree, TieGoesToLowestFeatureThenSmallestValue) {
  // f1 and f2 are copies, so every split on f2 ties with one on f1.
  const std::vector<TimePointSample> samples = {
      {"A", {3, 3}, 1}, {"B", {3, 3}, 1}, {"C", {5, 5}, 0}, {"D", {7, 7}, 0}};
  const auto tree = build_tree(samples, {}, schema_of(2));
  EXPECT_EQ(tree.nodes[0].feature, 0);
  EXPECT_EQ(tree.nodes[0].value, 3.0);

  // Values 1 and 4 give the same partition quality; 1 wins.
  const std::vector<TimePointSample> two = {{"A", {1}, 1}, {"B", {4}, 0}, {"C", {4}, 0}, {"D", {1}, 1}};
  EXPECT_EQ(build_tree(two, {}, schema_of(1)).nodes[0].value, 1.0);
}

TEST(DimmTree, MaxDepthAndNoValidSplit) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto samples = random_instance(rng, 12, 4, 4);
    DimmTreeConfig cfg;
    cfg.max_depth = static_cast<int>(rng.uniform_int(0, 4));
    EXPECT_LE(build_tree(samples, cfg, schema_of(4)).depth(), cfg.max_depth);
  }
  // Identical DIMMs with different labels cannot be separated.
  const std::vector<TimePointSample> same = {{"A", {1}, 1}, {"B", {1}, 0}};
  const auto tree = build_tree(same, {}, schema_of(1));
  EXPECT_EQ(tree.nodes.size(), 1u);
  EXPECT_EQ(tree.nodes[0].label, 1);  // ties go to the faulty class
}

TEST(DimmTree, PurityRatioStopsGrowth) {
  std::vector<TimePointSample> samples;
  for (int d = 0; d < 11; ++d) samples.push_back({"p" + std::to_string(d), {double(d % 2)}, 1});
  samples.push_back({"n0", {1}, 0});
  DimmTreeConfig cfg;
  cfg.theta = 10.0;  // 11:1 exceeds the ratio
  EXPECT_EQ(build_tree(samples, cfg, schema_of(1)).nodes.size(), 1u);
  cfg.theta = 50.0;
  EXPECT_GT(build_tree(samples, cfg, schema_of(1)).nodes.size(), 1u);
}

TEST(DimmTree, InconsistentDimmLabelIsDataError) {
  const std::vector<TimePointSample> samples = {{"A", {1}, 1}, {"A", {0}, 0}};
  try {
    build_tree(samples, {}, schema_of(1));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
  }
  EXPECT_THROW(build_tree(std::vector<TimePointSample>{}), Error);
}

TEST(DimmTree, DuplicatingADimmsSamplesKeepsTree) {
  Rng rng(17);
  for (int i = 0; i < 300; ++i) {
    const auto samples = random_instance(rng, static_cast<int>(rng.uniform_int(2, 15)), 3, 3);
    const auto base = dump(build_tree(samples, {}, schema_of(3)));
    const std::string victim = samples[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(samples.size()) - 1))].dimm_uid;
    auto more = samples;
    const int copies = static_cast<int>(rng.uniform_int(1, 5));
    for (int c = 0; c < copies; ++c) {
      for (const auto& s : samples) {
        if (s.dimm_uid == victim) more.push_back(s);
      }
    }
    ASSERT_EQ(dump(build_tree(more, {}, schema_of(3))), base);
  }
}

TEST(DimmTree, MatchesExhaustiveOracleOnSmallInstances) {
  DimmTreeConfig cfg;
  cfg.max_depth = 2;
  std::size_t checked = 0;
  for (int n_features = 1; n_features <= 3; ++n_features) {
    checked += oracle::for_each_tree_instance(4, n_features, [&](const std::vector<TimePointSample>& s) {
      const auto tree = build_tree(s, cfg, schema_of(static_cast<std::size_t>(n_features)));
      ASSERT_EQ(oracle::from_tree(tree), oracle::build_tree(s, cfg.theta, cfg.max_depth));
    });
  }
  EXPECT_GT(checked, 400000u);
}

TEST(DimmTree, MatchesOracleWithTightPurityRatio) {
  Rng rng(23);
  for (int i = 0; i < 400; ++i) {
    const auto samples = random_instance(rng, static_cast<int>(rng.uniform_int(1, 9)), 3, 3);
    DimmTreeConfig cfg;
    cfg.theta = 1.5 + rng.uniform() * 2;
    cfg.max_depth = static_cast<int>(rng.uniform_int(1, 4));
    ASSERT_EQ(oracle::from_tree(build_tree(samples, cfg, schema_of(3))),
              oracle::build_tree(samples, cfg.theta, cfg.max_depth));
  }
}

TEST(DimmTree, CandidateCapKeepsMostFrequentValues) {
  std::vector<TimePointSample> samples;
  for (int v = 0; v < 100; ++v) samples.push_back({"n" + std::to_string(v), {double(v)}, 0});
  samples.push_back({"p0", {99}, 1});
  samples.push_back({"p1", {99}, 1});
  DimmTreeConfig cfg;
  cfg.max_candidates = 1;  // only 99 (three DIMMs) survives
  const auto tree = build_tree(samples, cfg, schema_of(1));
  EXPECT_EQ(tree.nodes[0].feature, 0);
  EXPECT_EQ(tree.nodes[0].value, 99.0);
}

TEST(Rules, LeafCountsAndDimmLevelReplay) {
  bool saw_two = false;
  DimmTreeConfig cfg;
  cfg.max_depth = 2;
  oracle::for_each_tree_instance(4, 2, [&](const std::vector<TimePointSample>& s) {
    const auto tree = build_tree(s, cfg, schema_of(2));
    const auto rules = extract_rules(tree);
    std::size_t positive_leaves = 0;
    for (const auto& n : tree.nodes) positive_leaves += n.feature < 0 && n.label == 1 ? 1 : 0;
    ASSERT_EQ(rules.rules.size(), positive_leaves);
    saw_two = saw_two || (tree.depth() == 2 && rules.rules.size() == 2);

    std::map<std::string, std::vector<const TimePointSample*>> by_dimm;
    for (const auto& x : s) by_dimm[x.dimm_uid].push_back(&x);
    for (const auto& [uid, members] : by_dimm) {
      bool contains_only = false;
      const int leaf = route(tree, members, contains_only);
      bool any = false;
      for (const auto& r : rules.rules) any = any || dimm_matches(r, members);
      ASSERT_EQ(any, leaf == 1);
      if (contains_only && leaf == 1 && rules.rules.size() == 1 && rules.rules[0].literals.size() <= 1) {
        // One contains literal: some single event of the DIMM fires.
        bool fired = false;
        for (const auto* m : members) fired = fired || match_event(rules, rules.schema.fingerprint(), m->features);
        ASSERT_TRUE(fired);
      }
    }
  });
  EXPECT_TRUE(saw_two);
}

TEST(Rules, SingleNegativeLeafGivesNoRules) {
  const std::vector<TimePointSample> samples = {{"A", {1}, 0}};
  const auto rules = extract_rules(build_tree(samples, {}, schema_of(1)));
  EXPECT_TRUE(rules.rules.empty());
  EXPECT_FALSE(match_event(rules, rules.schema.fingerprint(), std::vector<double>{1}));
}

TEST(Rules, ConjunctionFiresOnlyWhenAllLiteralsHold) {
  RuleBase rb;
  rb.schema = time_point_schema();
  auto index = [&](std::string_view name) {
    return static_cast<int>(std::find(rb.schema.names.begin(), rb.schema.names.end(), name) - rb.schema.names.begin());
  };
  const int a = index("bit.bsfe.row.atr.element");
  const int b = index("bit.bsfe.col.atr.element");
  const int c = index("bit.bsfe.row.rta.max.element");
  rb.rules.push_back({{{a, 2, Polarity::Contains}, {b, 2, Polarity::Contains}, {c, 1, Polarity::Contains}}});
  const auto fp = rb.schema.fingerprint();
  for (int mask = 0; mask < 8; ++mask) {
    std::vector<double> x(rb.schema.names.size(), 0.0);
    x[static_cast<std::size_t>(a)] = (mask & 1) ? 2 : 3;
    x[static_cast<std::size_t>(b)] = (mask & 2) ? 2 : 1;
    x[static_cast<std::size_t>(c)] = (mask & 4) ? 1 : 2;
    EXPECT_EQ(match_event(rb, fp, x), mask == 7);
  }
  // A CE with two bits on distinct beats and DQs, e.g. (0,0) and (1,1), meets all three.
  BitFeatureCache cache;
  CeEvent e;
  e.bit_matrix = oracle::matrix_of({{0, 0}, {1, 1}});
  EXPECT_TRUE(match_event(rb, fp, time_point_features(e, cache)));
}

TEST(Rules, NotContainsIsPerEventInequality) {
  RuleBase rb;
  rb.schema = schema_of(2);
  rb.rules.push_back({{{0, 1, Polarity::Contains}, {1, 5, Polarity::NotContains}}});
  const auto fp = rb.schema.fingerprint();
  EXPECT_TRUE(match_event(rb, fp, std::vector<double>{1, 4}));
  EXPECT_FALSE(match_event(rb, fp, std::vector<double>{1, 5}));
  EXPECT_FALSE(match_event(rb, fp, std::vector<double>{0, 4}));
}

TEST(Rules, SchemaMismatchIsConfigError) {
  RuleBase rb;
  rb.schema = schema_of(2);
  try {
    match_event(rb, schema_of(3).fingerprint(), std::vector<double>{1, 2, 3});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
  EXPECT_THROW(match_event(rb, rb.schema.fingerprint(), std::vector<double>{1}), Error);
}

TEST(Rules, TextRoundTripAndDeterminism) {
  Rng rng(41);
  for (int i = 0; i < 100; ++i) {
    const auto samples = random_instance(rng, 10, 3, 4);
    const auto a = extract_rules(build_tree(samples, {}, schema_of(3)));
    const auto b = extract_rules(build_tree(samples, {}, schema_of(3)));
    ASSERT_EQ(text_of(a), text_of(b));
    std::istringstream in(text_of(a));
    ASSERT_EQ(read_rule_base(in), a);
  }
}

TEST(Rules, HumanReadableText) {
  const std::vector<TimePointSample> samples = {{"A", {1, 0}, 1}, {"B", {0, 2}, 0}};
  const auto text = text_of(extract_rules(build_tree(samples, {}, schema_of(2))));
  EXPECT_NE(text.find("format m2mfp.rules 1"), std::string::npos);
  EXPECT_NE(text.find("rule 1: not_contains(f1 = 0)"), std::string::npos);
  std::istringstream junk("rule 1: contains(zzz = 1)\n");
  EXPECT_THROW(read_rule_base(junk), Error);
}

TEST(TimePoint, FeaturesAndSchema) {
  const auto schema = time_point_schema();
  EXPECT_EQ(schema.names.size(), 31u);
  EXPECT_EQ(schema.names.back(), "ce_type");
  BitFeatureCache cache;
  CeEvent e;
  e.bit_matrix = oracle::matrix_of({{2, 3}});
  e.error_type = ErrorType::Scrub;
  const auto x = time_point_features(e, cache);
  ASSERT_EQ(x.size(), 31u);
  EXPECT_EQ(x.back(), 1.0);
  EXPECT_EQ(x[0], 1.0);
}
