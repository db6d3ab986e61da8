#pragma once

#include <vector>

#include "gradleak/tensor.hpp"

namespace gradleak {

// Percent value plus a marker for degenerate inputs (too few tokens for an
// n-gram, empty sequences) that score 0 by convention.
struct MetricValue {
  double percent = 0.0;
  bool degenerate = false;
};

// Count of ground-truth tokens present in `recovered`, multiset semantics
// with counts capped by the truth side. Position-insensitive.
std::size_t matched_token_count(const std::vector<int>& recovered, const std::vector<int>& truth);

// 100 * matched_token_count / |truth|. Throws on empty truth.
double recover_rate(const std::vector<int>& recovered, const std::vector<int>& truth);

// F1 over n-gram multiset overlap, as a percent.
MetricValue rouge_n(const std::vector<int>& recovered, const std::vector<int>& truth, std::size_t n);

// F1 from the longest common subsequence, as a percent.
MetricValue rouge_l(const std::vector<int>& recovered, const std::vector<int>& truth);

struct Pca2d {
  Tensor projected;      // (n, 2): rows centered and projected on the top-2 directions
  bool rank_deficient = false;  // second (or both) direction zero-filled
};

// Projects rows onto the top-2 principal directions of the sample
// covariance. Directions are ordered by descending eigenvalue with the sign
// fixed so each direction's largest-magnitude component is positive.
Pca2d pca_2d(const Tensor& points);

struct EmbeddingSimilarity {
  double value = 0.0;        // mean cosine over projected row pairs, in [-1, 1]
  bool degenerate = false;   // some pair had a zero-norm projection and scored 0
};

// Joint 2-D PCA over the stacked rows of both matrices, then the mean cosine
// similarity between corresponding projected rows.
EmbeddingSimilarity embedding_similarity(const Tensor& dummy, const Tensor& truth);

struct EvalReport {
  double recover_rate = 0.0;   // percent
  double rouge1 = 0.0;         // percent, F1
  double rouge2 = 0.0;         // percent, F1
  double rouge_l = 0.0;        // percent, F1
  double embedding_cosine = 0.0;
  double runtime_seconds = 0.0;
};

}  // namespace gradleak
