#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sbgnn {

// Rows index the true class, columns the predicted class.
struct ConfusionMatrix {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;

  std::int64_t total() const { return counts.sum(); }
  int classes() const { return static_cast<int>(counts.rows()); }
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          int n_classes);

struct MetricsReport {
  double accuracy = 0.0;  // trace / total
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;  // per class, one-vs-rest
  std::vector<double> recall;
  std::vector<double> f1;
  // Classes where a zero denominator forced the metric to 0.
  std::vector<int> degenerate_classes;
};

// Per-class one-vs-rest precision/recall/F1 with unweighted macro averages.
// A class with TP+FP = 0 (or TP+FN = 0) contributes 0 and is flagged.
MetricsReport report(const ConfusionMatrix& cm);

struct TTestResult {
  double t_statistic = 0.0;
  int degrees_of_freedom = 0;
  double p_value = 1.0;
  int n = 0;
};

// Paired t-test on matched samples: t = mean(d) / (sd(d)/sqrt(n)) with
// sample sd (n-1). Two-sided by default; the one-sided variant tests
// mean(a-b) > 0. All-zero differences give t = 0, p = 1; zero sd with a
// nonzero mean is an error (infinite t is not reported as a number).
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b,
                          bool one_sided = false);

// Student-t CDF via the regularized incomplete beta function, evaluated by
// continued fraction to 1e-12 relative tolerance.
double student_t_cdf(double t, int df);
double regularized_incomplete_beta(double a, double b, double x);

std::string metrics_json(const MetricsReport& r);
std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);

}  // namespace sbgnn
