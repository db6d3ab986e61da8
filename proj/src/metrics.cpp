#include "gradleak/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace gradleak {

std::size_t matched_token_count(const std::vector<int>& recovered, const std::vector<int>& truth) {
  std::map<int, std::size_t> truth_counts;
  for (int t : truth) ++truth_counts[t];
  std::map<int, std::size_t> recovered_counts;
  for (int t : recovered) ++recovered_counts[t];
  std::size_t matched = 0;
  for (const auto& [token, count] : truth_counts) {
    auto it = recovered_counts.find(token);
    if (it != recovered_counts.end()) matched += std::min(count, it->second);
  }
  return matched;
}

double recover_rate(const std::vector<int>& recovered, const std::vector<int>& truth) {
  if (truth.empty()) throw std::invalid_argument("recover_rate: empty ground truth");
  return 100.0 * static_cast<double>(matched_token_count(recovered, truth)) /
         static_cast<double>(truth.size());
}

namespace {

std::map<std::vector<int>, std::size_t> ngram_counts(const std::vector<int>& tokens, std::size_t n) {
  std::map<std::vector<int>, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<int>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

double f1_percent(double overlap, double recovered_total, double truth_total) {
  if (overlap == 0.0) return 0.0;
  const double precision = overlap / recovered_total;
  const double recall = overlap / truth_total;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

}  // namespace

MetricValue rouge_n(const std::vector<int>& recovered, const std::vector<int>& truth, std::size_t n) {
  if (n == 0) throw std::invalid_argument("rouge_n: n must be at least 1");
  if (recovered.size() < n || truth.size() < n) return {0.0, true};
  const auto rec = ngram_counts(recovered, n);
  const auto ref = ngram_counts(truth, n);
  std::size_t overlap = 0, rec_total = 0, ref_total = 0;
  for (const auto& [gram, count] : rec) rec_total += count;
  for (const auto& [gram, count] : ref) {
    ref_total += count;
    auto it = rec.find(gram);
    if (it != rec.end()) overlap += std::min(count, it->second);
  }
  return {f1_percent(static_cast<double>(overlap), static_cast<double>(rec_total),
                     static_cast<double>(ref_total)),
          false};
}

MetricValue rouge_l(const std::vector<int>& recovered, const std::vector<int>& truth) {
  if (recovered.empty() || truth.empty()) return {0.0, true};
  const std::size_t m = recovered.size(), n = truth.size();
  std::vector<std::size_t> prev(n + 1, 0), curr(n + 1, 0);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      curr[j] = recovered[i - 1] == truth[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  const double lcs = static_cast<double>(prev[n]);
  return {f1_percent(lcs, static_cast<double>(m), static_cast<double>(n)), false};
}

namespace {

// Cyclic Jacobi eigendecomposition of a small symmetric matrix. Returns
// eigenvalues and column eigenvectors, unsorted.
void jacobi_eigen(std::vector<double> a, std::size_t d, std::vector<double>* eigenvalues,
                  std::vector<double>* eigenvectors) {
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    if (off < 1e-300) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[p * d + p], aqq = a[q * d + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + p], vkq = v[k * d + q];
          v[k * d + p] = c * vkp - s * vkq;
          v[k * d + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  eigenvalues->assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) (*eigenvalues)[i] = a[i * d + i];
  *eigenvectors = std::move(v);
}

// Sign convention: the largest-magnitude component of each direction is
// positive; the first such component wins ties.
void fix_sign(std::vector<double>& direction) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < direction.size(); ++i) {
    if (std::abs(direction[i]) > std::abs(direction[arg])) arg = i;
  }
  if (direction[arg] < 0.0) {
    for (double& x : direction) x = -x;
  }
}

}  // namespace

Pca2d pca_2d(const Tensor& points) {
  if (points.rank() != 2) throw std::invalid_argument("pca_2d: expected a (n,d) tensor");
  const std::size_t n = points.shape()[0], d = points.shape()[1];
  if (n < 2) throw std::invalid_argument("pca_2d: need at least 2 rows");

  const auto& xv = points.values();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += xv[i * d + j];
  for (double& m : mean) m /= static_cast<double>(n);

  std::vector<double> centered(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centered[i * d + j] = xv[i * d + j] - mean[j];

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < d; ++p) {
      const double cip = centered[i * d + p];
      if (cip == 0.0) continue;
      for (std::size_t q = 0; q < d; ++q) cov[p * d + q] += cip * centered[i * d + q];
    }
  }
  for (double& c : cov) c /= static_cast<double>(n - 1);

  std::vector<double> eigenvalues, eigenvectors;
  jacobi_eigen(cov, d, &eigenvalues, &eigenvectors);

  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return eigenvalues[a] > eigenvalues[b]; });

  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += std::max(eigenvalues[i], 0.0);
  const double tol = 1e-12 * std::max(trace, 1e-300);

  Pca2d result;
  std::vector<double> projected(n * 2, 0.0);
  for (std::size_t axis = 0; axis < 2; ++axis) {
    if (axis >= d || eigenvalues[order[axis]] <= tol) {
      result.rank_deficient = true;
      continue;  // zero-filled column
    }
    std::vector<double> dir(d);
    for (std::size_t j = 0; j < d; ++j) dir[j] = eigenvectors[j * d + order[axis]];
    fix_sign(dir);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += centered[i * d + j] * dir[j];
      projected[i * 2 + axis] = dot;
    }
  }
  result.projected = Tensor(Shape{n, 2}, std::move(projected));
  return result;
}

EmbeddingSimilarity embedding_similarity(const Tensor& dummy, const Tensor& truth) {
  if (dummy.rank() != 2 || truth.rank() != 2 || dummy.shape() != truth.shape()) {
    throw std::invalid_argument("embedding_similarity: inputs must share one (n,d) shape");
  }
  const std::size_t n = dummy.shape()[0], d = dummy.shape()[1];
  std::vector<double> stacked;
  stacked.reserve(2 * n * d);
  stacked.insert(stacked.end(), dummy.values().begin(), dummy.values().end());
  stacked.insert(stacked.end(), truth.values().begin(), truth.values().end());
  const Pca2d joint = pca_2d(Tensor(Shape{2 * n, d}, std::move(stacked)));

  const auto& p = joint.projected.values();
  EmbeddingSimilarity out;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ax = p[i * 2], ay = p[i * 2 + 1];
    const double bx = p[(n + i) * 2], by = p[(n + i) * 2 + 1];
    const double na = std::sqrt(ax * ax + ay * ay);
    const double nb = std::sqrt(bx * bx + by * by);
    if (na == 0.0 || nb == 0.0) {
      out.degenerate = true;  // pair contributes 0
      continue;
    }
    total += (ax * bx + ay * by) / (na * nb);
  }
  out.value = total / static_cast<double>(n);
  return out;
}

}  // namespace gradleak
