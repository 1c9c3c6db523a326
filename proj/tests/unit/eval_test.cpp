#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "support.hpp"
#include "zeta/error.hpp"
#include "zeta/eval.hpp"

namespace {

using namespace zeta;
using namespace zeta::eval;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Usage;
}

// O(n^2) pairwise oracle: a win counts 1, a tie 1/2.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

struct Sample {
  std::vector<double> scores;
  std::vector<int> labels;
};

Sample random_sample(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_dist(2, 200);
  // Coarse grid so ties are common.
  std::uniform_int_distribution<int> grid(0, 20);
  std::bernoulli_distribution coin(0.5);
  Sample s;
  const int n = n_dist(rng);
  for (int i = 0; i < n; ++i) {
    s.scores.push_back(grid(rng) / 20.0);
    s.labels.push_back(coin(rng));
  }
  s.labels[0] = 1;
  s.labels[1] = 0;
  return s;
}

TEST(RocAuc, Examples) {
  EXPECT_EQ(roc_auc(std::vector<double>{0.9, 0.8, 0.3, 0.2}, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1, 0}), 0.5);
  EXPECT_EQ(roc_auc(std::vector<double>{0.9, 0.6, 0.7, 0.2}, std::vector<int>{1, 1, 0, 0}), 0.75);
}

TEST(RocAuc, Errors) {
  EXPECT_EQ(code_of([] { roc_auc(std::vector<double>{0.1}, std::vector<int>{1, 0}); }), ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([] { roc_auc(std::vector<double>{}, std::vector<int>{}); }), ErrorCode::Empty);
  EXPECT_EQ(code_of([] { roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}); }),
            ErrorCode::DegenerateClass);
  EXPECT_EQ(code_of([] { roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 2}); }),
            ErrorCode::InvalidFormat);
  EXPECT_EQ(code_of([] { roc_auc(std::vector<double>{0.1, NAN}, std::vector<int>{1, 0}); }),
            ErrorCode::InvalidFormat);
}

TEST(RocAuc, MatchesPairwiseOracle) {
  std::mt19937_64 rng(2024);
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = random_sample(rng);
    ASSERT_NEAR(roc_auc(s.scores, s.labels), pairwise_auc(s.scores, s.labels), 1e-12) << trial;
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 5.0);
}

TEST(RocAuc, Invariances) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_sample(rng);
    const double auc = roc_auc(s.scores, s.labels);

    for (const auto& f : std::vector<std::function<double(double)>>{
             [](double x) { return 1 / (1 + std::exp(-x)); },
             [](double x) { return 3 * x - 7; },
             [](double x) { return x * x * x; }}) {
      std::vector<double> t;
      for (double x : s.scores) t.push_back(f(x));
      ASSERT_EQ(roc_auc(t, s.labels), auc) << trial;
    }

    std::vector<int> flipped;
    for (int y : s.labels) flipped.push_back(1 - y);
    ASSERT_EQ(auc + roc_auc(s.scores, flipped), 1.0) << trial;

    std::vector<std::size_t> order(s.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Sample p;
    for (auto i : order) {
      p.scores.push_back(s.scores[i]);
      p.labels.push_back(s.labels[i]);
    }
    ASSERT_EQ(roc_auc(p.scores, p.labels), auc) << trial;
  }
}

TEST(MacroAuc, Examples) {
  EXPECT_EQ(macro_auc({{"A", 0.9}}), 0.9);
  EXPECT_EQ(macro_auc({{"A", 1.0}, {"B", 0.5}, {"C", 0.75}}), 0.75);
  EXPECT_EQ(code_of([] { macro_auc({}); }), ErrorCode::AllClassesSkipped);
}

// The printed average for this row is 77.1; the mean of the six printed
// values is 463.2 / 6 = 77.2. The engine shows what it computes.
TEST(MacroAuc, DisplayRoundingFollowsComputedMean) {
  const std::map<std::string, double> row{{"c1", 0.762}, {"c2", 0.759}, {"c3", 0.661},
                                          {"c4", 0.886}, {"c5", 0.801}, {"c6", 0.763}};
  const double mean = macro_auc(row);
  EXPECT_NEAR(mean, 4.632 / 6, 1e-12);
  EXPECT_EQ(format_percent(mean), "77.2");
  EXPECT_NE(format_percent(mean), "77.1");
}

TEST(Confusion, BinaryExamples) {
  const std::vector<int> labels{1, 0, 1, 1, 0, 0};
  const auto perfect = confusion_metrics(labels, labels);
  EXPECT_EQ(*perfect.accuracy, 1.0);
  EXPECT_EQ(*perfect.f1, 1.0);

  const auto m = metrics_from_counts({6, 2, 1, 3});
  EXPECT_DOUBLE_EQ(*m.accuracy, 7.0 / 12);
  EXPECT_DOUBLE_EQ(*m.sensitivity, 0.75);
  EXPECT_DOUBLE_EQ(*m.specificity, 0.25);
  EXPECT_DOUBLE_EQ(*m.f1, 12.0 / 17);

  const auto none = metrics_from_counts({0, 0, 4, 0});
  EXPECT_FALSE(none.sensitivity.has_value());
  EXPECT_FALSE(none.f1.has_value());
  EXPECT_EQ(*none.specificity, 1.0);
  EXPECT_EQ(render_metrics_row("X", none), "X 100.0 - 100.0 -");

  EXPECT_EQ(code_of([] { confusion_metrics(std::vector<int>{1}, std::vector<int>{1, 0}); }), ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([] { confusion_metrics(std::vector<int>{}, std::vector<int>{}); }), ErrorCode::Empty);
}

TEST(Confusion, PermutationInvariant) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.4);
  std::vector<int> p, y;
  for (int i = 0; i < 300; ++i) {
    p.push_back(coin(rng));
    y.push_back(coin(rng));
  }
  const auto base = confusion_metrics(p, y);
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> p2, y2;
  for (auto i : order) {
    p2.push_back(p[i]);
    y2.push_back(y[i]);
  }
  const auto shuffled = confusion_metrics(p2, y2);
  EXPECT_EQ(shuffled.counts, base.counts);
  EXPECT_EQ(shuffled.accuracy, base.accuracy);
  EXPECT_EQ(shuffled.f1, base.f1);
}

// Support-weighted metrics over the two classes, written out independently.
struct Weighted {
  double acc, sens, spec, f1;
};

Weighted weighted_oracle(double tp, double fn, double tn, double fp) {
  const double np = tp + fn, nn = tn + fp, n = np + nn;
  const double sens_pos = tp / (tp + fn), sens_neg = tn / (tn + fp);
  const double f1_pos = 2 * tp / (2 * tp + fp + fn), f1_neg = 2 * tn / (2 * tn + fn + fp);
  return {(tp + tn) / n, (np * sens_pos + nn * sens_neg) / n, (np * sens_neg + nn * sens_pos) / n,
          (np * f1_pos + nn * f1_neg) / n};
}

std::vector<int> expand(const Counts& c, std::vector<int>& labels) {
  std::vector<int> preds;
  auto push = [&](std::uint64_t n, int p, int y) {
    for (std::uint64_t i = 0; i < n; ++i) {
      preds.push_back(p);
      labels.push_back(y);
    }
  };
  push(c.tp, 1, 1);
  push(c.fn, 0, 1);
  push(c.tn, 0, 0);
  push(c.fp, 1, 0);
  return preds;
}

TEST(Confusion, WeightedRowsFromConstructedCounts) {
  struct Row {
    std::string label;
    Counts counts;
    std::string expected;
  };
  const std::vector<Row> rows{
      {"Guidance", {138, 10, 18, 15}, "Guidance 86.2 86.2 61.6 85.7"},
      {"Misleading", {279, 19, 17, 24}, "Misleading 87.3 87.3 47.8 87.0"},
      {"ZETA", {51, 22, 12, 3}, "ZETA 71.6 71.6 78.3 75.0"},
      {"Expert + ZETA", {150, 10, 17, 16}, "Expert + ZETA 86.5 86.5 58.7 86.0"},
  };
  for (const auto& [label, counts, expected] : rows) {
    std::vector<int> labels;
    const auto preds = expand(counts, labels);
    const auto m = confusion_metrics(preds, labels, Averaging::Weighted);
    EXPECT_EQ(m.counts, counts);
    const auto o = weighted_oracle(counts.tp, counts.fn, counts.tn, counts.fp);
    EXPECT_NEAR(*m.accuracy, o.acc, 1e-15);
    EXPECT_NEAR(*m.sensitivity, o.sens, 1e-15);
    EXPECT_NEAR(*m.specificity, o.spec, 1e-15);
    EXPECT_NEAR(*m.f1, o.f1, 1e-15);
    EXPECT_EQ(render_metrics_row(label, m), expected);
  }
}

TEST(Confusion, AveragingStrings) {
  EXPECT_EQ(averaging_from_string("weighted"), Averaging::Weighted);
  EXPECT_EQ(to_string(Averaging::Binary), "binary");
  EXPECT_EQ(code_of([] { averaging_from_string("micro"); }), ErrorCode::InvalidConfig);
}

TEST(Labels, CsvParseAndErrors) {
  const auto t = parse_labels_csv("sample_id,labels\na,AMI;SR\nb,\nc,SR\n");
  EXPECT_EQ(t.sample_ids, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(t.labels.at("a"), (std::set<std::string>{"AMI", "SR"}));
  EXPECT_TRUE(t.labels.at("b").empty());
  EXPECT_EQ(parse_labels_csv(serialize_labels_csv(t)).labels, t.labels);
  EXPECT_EQ(code_of([] { parse_labels_csv("id,x\na,SR\n"); }), ErrorCode::InvalidFormat);
  EXPECT_EQ(code_of([] { parse_labels_csv("sample_id,labels\na,SR\na,AMI\n"); }), ErrorCode::DuplicateId);
}

TEST(Labels, AliasMapping) {
  const auto alias = read_alias_map(test::fixtures_dir() / "alias_example.json");
  const auto raw = parse_labels_csv(
      "sample_id,labels\ns1,AFIB\ns2,atrial fibrillation\ns3,unknown\ns4,NORM;unknown\n");
  const auto mapped = map_labels(raw, alias);
  EXPECT_EQ(mapped.table.labels.at("s1"), std::set<std::string>{"AFIB"});
  EXPECT_EQ(mapped.table.labels.at("s2"), std::set<std::string>{"AFIB"});
  EXPECT_EQ(mapped.table.labels.count("s3"), 0u);
  EXPECT_EQ(mapped.table.labels.at("s4"), std::set<std::string>{"SR"});
  EXPECT_EQ(mapped.dropped_samples, 1u);

  const auto odd = parse_labels_csv("sample_id,labels\ns1,AFIB\ns2,LBBB\n");
  try {
    map_labels(odd, alias, true);
    FAIL() << "expected UnmappedLabel";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnmappedLabel);
    EXPECT_NE(std::string(e.what()).find("LBBB"), std::string::npos);
  }
  const auto lenient = map_labels(odd, alias, false);
  EXPECT_EQ(lenient.table.labels.at("s2"), std::set<std::string>{"LBBB"});
  EXPECT_EQ(lenient.passed_through, std::set<std::string>{"LBBB"});
}

LabelTable planted_labels(const std::vector<std::string>& codes, int per_class,
                          std::map<std::string, std::string>& planted) {
  LabelTable t;
  for (int i = 0; i < per_class; ++i) {
    for (const auto& c : codes) {
      const auto id = fmt::format("{}-{:03}", c, i);
      t.sample_ids.push_back(id);
      t.labels[id] = {c};
      planted[id] = c;
    }
  }
  return t;
}

TEST(Benchmark, PlantedSyntheticRecoversConditions) {
  const auto kb = std::make_shared<const kb::KnowledgeBase>(test::pipeline_kb());
  std::vector<std::string> codes;
  for (const auto& [code, _] : kb->conditions) codes.push_back(code);
  ASSERT_EQ(codes.size(), 4u);

  std::map<std::string, std::string> planted;
  const auto labels = planted_labels(codes, 50, planted);
  const auto start = std::chrono::steady_clock::now();
  embed::SyntheticProvider noisy({42, 64, 0.1}, kb, planted);
  const auto result = run_benchmark(noisy, labels, *kb, {}, {}, 4);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
  EXPECT_GE(result.report.macro_auc, 0.95);
  EXPECT_EQ(result.report.n_samples, 200u);
  EXPECT_TRUE(result.report.skipped_classes.empty());

  embed::SyntheticProvider exact({42, 64, 0.0}, kb, planted);
  const auto clean = run_benchmark(exact, labels, *kb, {}, {}, 4);
  std::size_t hits = 0;
  for (const auto& c : clean.scores) {
    const auto best = std::max_element(c.scores.begin(), c.scores.end(), [](const auto& a, const auto& b) {
      return a.possibility < b.possibility;
    });
    hits += best->condition == planted.at(c.ecg_id);
  }
  EXPECT_EQ(hits, clean.scores.size());
}

TEST(Benchmark, OrderInvariantAndEmbedsOnce) {
  const auto kb = std::make_shared<const kb::KnowledgeBase>(test::pipeline_kb());
  std::vector<std::string> codes;
  for (const auto& [code, _] : kb->conditions) codes.push_back(code);
  std::map<std::string, std::string> planted;
  auto labels = planted_labels(codes, 10, planted);
  test::CountingProvider counting(
      std::make_shared<embed::SyntheticProvider>(embed::SyntheticConfig{42, 64, 0.3}, kb, planted));
  const auto a = run_benchmark(counting, labels, *kb, {}, {}, 3);
  for (const auto& [text, n] : counting.text_counts()) EXPECT_EQ(n, 1u) << text;

  std::mt19937_64 rng(8);
  std::shuffle(labels.sample_ids.begin(), labels.sample_ids.end(), rng);
  const auto b = run_benchmark(counting, labels, *kb, {}, {}, 1);
  EXPECT_EQ(to_json(a.report).dump(), to_json(b.report).dump());
}

TEST(Benchmark, MissingConditionIsNamed) {
  auto kb = test::pipeline_kb();
  const LabelTable labels = parse_labels_csv("sample_id,labels\na,AMI\nb,AFIB\n");
  embed::SyntheticProvider provider({42, 64, 0.0});
  try {
    run_benchmark(provider, labels, kb, {}, {});
    FAIL() << "expected UnknownCondition";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownCondition);
    EXPECT_NE(std::string(e.what()).find("AFIB"), std::string::npos);
  }
}

TEST(Report, SkipsSingleClassColumns) {
  std::vector<LabeledScore> scores{
      {"a", "AMI", 0.9, 1}, {"b", "AMI", 0.2, 0}, {"a", "SR", 0.4, 0}, {"b", "SR", 0.3, 0}};
  const auto r = build_report(scores, {});
  EXPECT_EQ(r.skipped_classes, std::vector<std::string>{"SR"});
  EXPECT_EQ(r.macro_auc, 1.0);
  EXPECT_FALSE(r.per_class.at("SR").auc.has_value());
  EXPECT_EQ(r.overall.counts, (Counts{1, 0, 3, 0}));
  const auto text = render_report(r);
  EXPECT_NE(text.find("AMI"), std::string::npos);
  EXPECT_EQ(text.find(" \n"), std::string::npos) << text;
}

TEST(Report, JoinErrors) {
  std::vector<infer::ScoreRow> rows(2);
  rows[0].ecg_id = "a";
  rows[0].condition = "AMI";
  rows[1].ecg_id = "a";
  rows[1].condition = "SR";
  EXPECT_EQ(code_of([&] { join_labels(rows, parse_labels_csv("sample_id,labels\nb,AMI\n")); }),
            ErrorCode::MissingSample);
  EXPECT_EQ(code_of([&] { join_labels(rows, parse_labels_csv("sample_id,labels\na,AFIB\n")); }),
            ErrorCode::UnknownCondition);
  EXPECT_EQ(join_labels(rows, parse_labels_csv("sample_id,labels\na,SR\n")).size(), 2u);
}

}  // namespace
