#pragma once

#include "cfbench/data/dataset.hpp"
#include "cfbench/models/classifier.hpp"
#include "cfbench/prototypes/prototypes.hpp"

namespace cfbench::ground_truth {

inline constexpr double kOracleTolerance = 1e-3;

struct OracleEdit {
  Image image;
  double alpha = 1.0;
  std::size_t prototype_rank = 0;  // index within the true class's prototypes
  bool degenerate = false;         // the prototype itself is not classified as the true class
};

/// Synthetic stand-in for a human editor: blends the query toward its
/// nearest true-class prototype, (1 - a) * query + a * prototype, and returns
/// the smallest a found by bisection whose blend is classified as the true
/// class.
OracleEdit synthetic_oracle_edit(const data::MisclassifiedItem& item, const models::ClassifierModel<double>& model,
                                 const prototypes::PrototypeSet& prototypes, double tolerance = kOracleTolerance);

}  // namespace cfbench::ground_truth
