#include "sbgnn/metrics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "sbgnn/errors.hpp"
#include "sbgnn/io.hpp"

namespace sbgnn {

using nlohmann::json;

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                          int n_classes) {
  if (preds.size() != labels.size()) {
    throw ValidationError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                          std::to_string(labels.size()) + " labels");
  }
  if (n_classes < 1) throw ValidationError("confusion needs at least one class");
  ConfusionMatrix cm;
  cm.counts.setZero(n_classes, n_classes);
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (preds[k] < 0 || preds[k] >= n_classes || labels[k] < 0 || labels[k] >= n_classes) {
      throw ValidationError("confusion: class index out of range at sample " + std::to_string(k));
    }
    cm.counts(labels[k], preds[k]) += 1;
  }
  return cm;
}

MetricsReport report(const ConfusionMatrix& cm) {
  const int c = cm.classes();
  const std::int64_t total = cm.total();
  if (c == 0 || total == 0) throw ValidationError("empty confusion matrix");

  MetricsReport r;
  r.accuracy = static_cast<double>(cm.counts.trace()) / static_cast<double>(total);
  r.precision.resize(c);
  r.recall.resize(c);
  r.f1.resize(c);

  for (int k = 0; k < c; ++k) {
    const double tp = static_cast<double>(cm.counts(k, k));
    const double col = static_cast<double>(cm.counts.col(k).sum());  // tp + fp
    const double row = static_cast<double>(cm.counts.row(k).sum());  // tp + fn
    bool degenerate = false;
    if (col > 0) {
      r.precision[k] = tp / col;
    } else {
      r.precision[k] = 0.0;
      degenerate = true;
    }
    if (row > 0) {
      r.recall[k] = tp / row;
    } else {
      r.recall[k] = 0.0;
      degenerate = true;
    }
    const double pr = r.precision[k] + r.recall[k];
    r.f1[k] = pr > 0 ? 2.0 * r.precision[k] * r.recall[k] / pr : 0.0;
    if (degenerate) r.degenerate_classes.push_back(k);

    r.macro_precision += r.precision[k];
    r.macro_recall += r.recall[k];
    r.macro_f1 += r.f1[k];
  }
  r.macro_precision /= c;
  r.macro_recall /= c;
  r.macro_f1 /= c;
  return r;
}

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double eps = 1e-12;
  constexpr double tiny = 1e-300;
  constexpr int max_iter = 500;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;

  for (int m = 1; m <= max_iter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw ValidationError("incomplete beta needs positive parameters");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
               b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, int df) {
  if (df < 1) throw ValidationError("student_t_cdf needs df >= 1");
  const double x = df / (df + t * t);
  const double two_sided = regularized_incomplete_beta(df / 2.0, 0.5, x);
  return t >= 0.0 ? 1.0 - two_sided / 2.0 : two_sided / 2.0;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b,
                          bool one_sided) {
  if (a.size() != b.size()) {
    throw ValidationError("paired t-test: sample sizes " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  const int n = static_cast<int>(a.size());
  if (n < 2) throw ValidationError("paired t-test needs at least 2 pairs");

  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / (n - 1));

  TTestResult result;
  result.n = n;
  result.degrees_of_freedom = n - 1;
  if (sd == 0.0) {
    if (mean != 0.0) {
      throw ValidationError("degenerate differences: zero variance with nonzero mean");
    }
    result.t_statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }
  result.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  const double x = result.degrees_of_freedom /
                   (result.degrees_of_freedom + result.t_statistic * result.t_statistic);
  const double two_sided =
      regularized_incomplete_beta(result.degrees_of_freedom / 2.0, 0.5, x);
  if (one_sided) {
    result.p_value = result.t_statistic > 0.0 ? two_sided / 2.0 : 1.0 - two_sided / 2.0;
  } else {
    result.p_value = two_sided;
  }
  return result;
}

std::string metrics_json(const MetricsReport& r) {
  json doc;
  doc["accuracy"] = r.accuracy;
  doc["macro_precision"] = r.macro_precision;
  doc["macro_recall"] = r.macro_recall;
  doc["macro_f1"] = r.macro_f1;
  doc["per_class"] = {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
  doc["degenerate_classes"] = r.degenerate_classes;
  return doc.dump(2) + "\n";
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
  if (static_cast<int>(class_names.size()) != cm.classes()) {
    throw ValidationError("confusion_csv: class name count does not match matrix size");
  }
  std::string out = "true";
  for (const std::string& name : class_names) out += "," + name;
  out += "\n";
  for (int i = 0; i < cm.classes(); ++i) {
    out += class_names[i];
    for (int j = 0; j < cm.classes(); ++j) {
      out += "," + std::to_string(cm.counts(i, j));
    }
    out += "\n";
  }
  return out;
}

}  // namespace sbgnn
