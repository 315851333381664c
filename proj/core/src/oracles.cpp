#include "dfil/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "dfil/errors.hpp"

namespace dfil::oracle {

Tensor reference_matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("reference_matmul: incompatible shapes");
  }
  Tensor out = Tensor::zeros({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) {
        acc += a.at(i, k) * b.at(k, j);
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

std::vector<double> reference_softmax(const std::vector<double>& z,
                                      double temperature) {
  std::vector<long double> e(z.size());
  long double denom = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e[i] = expl(static_cast<long double>(z[i]) / temperature);
    denom += e[i];
  }
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = static_cast<double>(e[i] / denom);
  }
  return out;
}

double reference_entropy(const std::vector<double>& p) {
  long double h = 0.0L;
  for (double v : p) {
    if (v > 0.0) h -= static_cast<long double>(v) * logl(v);
  }
  return static_cast<double>(h);
}

double reference_ce(const std::vector<double>& p_real,
                    const std::vector<int>& labels) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < p_real.size(); ++i) {
    const long double p0 = p_real[i];
    total -= labels[i] == 0 ? logl(p0) : logl(1.0L - p0);
  }
  return static_cast<double>(total);
}

namespace {

long double cosine_ld(const Tensor& f, std::size_t i, std::size_t j) {
  long double dot = 0.0L, ni = 0.0L, nj = 0.0L;
  for (std::size_t c = 0; c < f.cols(); ++c) {
    const long double a = f.at(i, c);
    const long double b = f.at(j, c);
    dot += a * b;
    ni += a * a;
    nj += b * b;
  }
  return dot / (sqrtl(ni) * sqrtl(nj));
}

}  // namespace

double reference_scl(const Tensor& features, const std::vector<int>& labels,
                     double tau) {
  const std::size_t batch = features.rows();
  long double total = 0.0L;
  for (std::size_t i = 0; i < batch; ++i) {
    std::vector<std::size_t> positives;
    for (std::size_t j = 0; j < batch; ++j) {
      if (j != i && labels[j] == labels[i]) positives.push_back(j);
    }
    if (positives.empty()) continue;
    long double anchor_sum = 0.0L;
    for (std::size_t j : positives) {
      const long double numerator = expl(cosine_ld(features, i, j) / tau);
      long double denominator = numerator;
      for (std::size_t k = 0; k < batch; ++k) {
        if (labels[k] != labels[i]) {
          denominator += expl(cosine_ld(features, i, k) / tau);
        }
      }
      anchor_sum += logl(numerator / denominator);
    }
    total -= anchor_sum / static_cast<long double>(positives.size());
  }
  return static_cast<double>(total);
}

double reference_kd(const Tensor& teacher_logits, const Tensor& student_logits,
                    double temperature) {
  const std::size_t batch = teacher_logits.rows();
  const std::size_t classes = teacher_logits.cols();
  long double total = 0.0L;
  for (std::size_t i = 0; i < batch; ++i) {
    std::vector<double> zt(classes), zs(classes);
    for (std::size_t j = 0; j < classes; ++j) {
      zt[j] = teacher_logits.at(i, j);
      zs[j] = student_logits.at(i, j);
    }
    const std::vector<double> pt = reference_softmax(zt, temperature);
    const std::vector<double> ps = reference_softmax(zs, temperature);
    for (std::size_t j = 0; j < classes; ++j) {
      total -= static_cast<long double>(pt[j]) * logl(ps[j]);
    }
  }
  return static_cast<double>(total);
}

double reference_fd(const Tensor& a, const Tensor& b) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a.at(i)) - b.at(i);
    total += d * d;
  }
  return static_cast<double>(total);
}

double reference_auc_trapezoid(const std::vector<double>& scores,
                               const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::size_t pos = 0, neg = 0;
  for (int y : labels) (y == 1 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) {
    throw MetricError("reference_auc: both classes required");
  }

  // Sweep thresholds from +inf downward; samples with equal scores enter the
  // positive region together, which traces the tie-handling diagonal segments
  // the trapezoid rule integrates.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  long double area = 0.0L;
  long double tp = 0.0L, fp = 0.0L;
  long double prev_tpr = 0.0L, prev_fpr = 0.0L;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) tp += 1.0L;
      else fp += 1.0L;
      ++j;
    }
    const long double tpr = tp / pos;
    const long double fpr = fp / neg;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0L;
    prev_tpr = tpr;
    prev_fpr = fpr;
    i = j;
  }
  return static_cast<double>(area);
}

namespace {

using Scored = std::pair<double, std::size_t>;  // (score, dataset index)

// Full sort with explicit tie-break on the lower index.
std::vector<std::size_t> sorted_indices(const std::vector<Scored>& items,
                                        bool descending) {
  std::vector<Scored> copy = items;
  std::sort(copy.begin(), copy.end(), [descending](const Scored& a,
                                                   const Scored& b) {
    if (a.first != b.first) {
      return descending ? a.first > b.first : a.first < b.first;
    }
    return a.second < b.second;
  });
  std::vector<std::size_t> out;
  out.reserve(copy.size());
  for (const Scored& s : copy) out.push_back(s.second);
  return out;
}

}  // namespace

std::vector<std::size_t> reference_select(
    const std::vector<int>& labels, const std::vector<double>& entropies,
    const std::vector<double>& centroid_distances, std::size_t k,
    const std::string& strategy) {
  std::set<std::size_t> selected;
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<Scored> by_entropy, by_distance;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != cls) continue;
      by_entropy.emplace_back(entropies[i], i);
      by_distance.emplace_back(centroid_distances[i], i);
    }
    const std::size_t half = k / 2;
    if (strategy == "all_hard") {
      auto order = sorted_indices(by_entropy, true);
      for (std::size_t i = 0; i < half; ++i) selected.insert(order[i]);
    } else if (strategy == "all_easy") {
      auto order = sorted_indices(by_entropy, false);
      for (std::size_t i = 0; i < half; ++i) selected.insert(order[i]);
    } else if (strategy == "all_margin") {
      auto order = sorted_indices(by_distance, true);
      for (std::size_t i = 0; i < half; ++i) selected.insert(order[i]);
    } else if (strategy == "all_center") {
      auto order = sorted_indices(by_distance, false);
      for (std::size_t i = 0; i < half; ++i) selected.insert(order[i]);
    } else if (strategy == "hard_center" || strategy == "ours") {
      const std::size_t quarter = k / 4;
      auto hard_order = sorted_indices(by_entropy, true);
      auto center_order = sorted_indices(by_distance, false);
      std::set<std::size_t> class_pick;
      for (std::size_t i = 0; i < quarter; ++i) class_pick.insert(hard_order[i]);
      for (std::size_t i = 0; i < quarter; ++i) {
        class_pick.insert(center_order[i]);
      }
      // Overlap backfill walks the entropy order past the cutoff.
      for (std::size_t i = quarter;
           class_pick.size() < half && i < hard_order.size(); ++i) {
        class_pick.insert(hard_order[i]);
      }
      selected.insert(class_pick.begin(), class_pick.end());
    } else {
      throw ParameterError("reference_select: unknown strategy " + strategy);
    }
  }
  return {selected.begin(), selected.end()};
}

}  // namespace dfil::oracle
