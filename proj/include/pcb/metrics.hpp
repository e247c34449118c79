#pragma once

#include <span>
#include <vector>

namespace pcb {

// Probability that a random positive outscores a random negative, ties
// counted as one half. Throws UndefinedMetricError unless both classes occur.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Average precision: sum over positives of precision at that positive's
// rank, divided by the positive count. Tied scores are ranked as a block, so
// every tied item is credited with the block's precision.
double auprc(std::span<const double> scores, std::span<const int> labels);

// Binary F1 of positive class 1. Defined as 1 when neither truth nor
// prediction contains a positive.
double f1_binary(std::span<const int> predicted, std::span<const int> truth);

// Mean over categories [0, k) of one-vs-rest F1; categories absent from both
// truth and prediction are skipped.
double macro_f1(std::span<const int> predicted, std::span<const int> truth, int k);

// Spearman rank correlation with average ranks for ties. Throws
// UndefinedMetricError for fewer than 2 points or a constant input.
double spearman(std::span<const double> x, std::span<const double> y);

// 1-based average ranks.
std::vector<double> average_ranks(std::span<const double> x);

}  // namespace pcb
