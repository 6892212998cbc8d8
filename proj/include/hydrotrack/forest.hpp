#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hydrotrack/features.hpp"
#include "hydrotrack/types.hpp"

namespace hydrotrack {

// Flattened decision tree. Nodes are stored in preorder: a node's left child
// is the next node, the right child index is explicit. Leaves keep the
// bootstrap class counts reaching them; probabilities are counts / total.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;  // rows go left when x[feature] < threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::array<std::int64_t, kClassCount> class_counts{};

  bool is_leaf() const { return left < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;
};

struct ForestParams {
  int n_estimators = 80;
  int max_depth = 5;
  // Features tried per split; 0 means floor(sqrt(feature count)).
  int max_features = 0;
  std::uint64_t seed = 0;
};

struct ForestModel {
  std::vector<Tree> trees;
  int n_features = 0;
  std::uint16_t feature_version = kFeatureVersion;
  ForestParams params;
};

struct BestSplit {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
};

// Exhaustive split search over the given rows and candidate features, the
// same routine the tree grower uses per node. Candidates are float32-snapped
// midpoints between adjacent distinct sorted values; the winner minimizes
// weighted Gini impurity compared in exact integer arithmetic, ties broken
// by lower feature then lower threshold.
BestSplit find_best_split(const Eigen::Ref<const Eigen::MatrixXd>& x,
                          const std::vector<HydrationLabel>& y,
                          const std::vector<Eigen::Index>& rows,
                          const std::vector<int>& features);

// Bagged forest of Gini-grown trees. Bootstrap draws, split thresholds and
// feature subsets all come from splitmix64 streams derived from params.seed,
// so identical inputs give byte-identical models. Thresholds are snapped to
// float32 so the compact integer runtime routes rows identically.
// Requires >= 10 rows and >= 2 distinct labels.
ForestModel train_forest(const LabeledDataset& dataset,
                         const ForestParams& params);

struct Prediction {
  HydrationLabel label = HydrationLabel::FullyHydrated;
  std::array<double, kClassCount> probabilities{};
};

// Mean of per-tree leaf distributions; argmax with ties going to the lower
// class code.
Prediction predict(const ForestModel& model,
                   const Eigen::Ref<const Eigen::VectorXd>& features);

struct EvalReport {
  // confusion(i, j): rows with true class i predicted as class j.
  Eigen::Matrix<std::int64_t, kClassCount, kClassCount> confusion =
      Eigen::Matrix<std::int64_t, kClassCount, kClassCount>::Zero();
  double accuracy = 0.0;
  std::array<double, kClassCount> precision{};
  std::array<double, kClassCount> recall{};
  std::array<double, kClassCount> f1{};
  double macro_f1 = 0.0;
  std::int64_t row_count = 0;
};

// Division-by-zero conventions: a class never predicted has precision 0, a
// class absent from the truth has recall 0, and f1 is 0 when p + r == 0.
EvalReport evaluate_labels(const std::vector<HydrationLabel>& truth,
                           const std::vector<HydrationLabel>& predicted);

EvalReport evaluate(const ForestModel& model, const LabeledDataset& dataset);

struct FoldResult {
  EvalReport report;
  double train_accuracy = 0.0;
  std::vector<int> test_subjects;  // grouped mode only
};

struct CvResult {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population std over fold accuracies
  std::vector<FoldResult> folds;
};

// k-fold cross validation. Stratified mode assigns shuffled rows of each
// class round-robin to folds; grouped mode assigns whole subjects to folds
// so no subject appears in both train and test of any fold.
CvResult cross_validate(const LabeledDataset& dataset, int k,
                        bool group_by_subject, const ForestParams& params,
                        std::uint64_t seed);

struct SubjectResult {
  int subject_id = 0;
  EvalReport report;
  Eigen::Index train_rows = 0;
  Eigen::Index test_rows = 0;
};

struct PerSubjectResult {
  std::vector<SubjectResult> subjects;
  std::vector<int> skipped_subjects;
};

// Personalised models: a stratified 80/20 split within each subject's rows.
// Subjects with too few rows or a single class are skipped, not failed.
PerSubjectResult per_subject_evaluate(const LabeledDataset& dataset,
                                      const ForestParams& params,
                                      std::uint64_t seed);

}  // namespace hydrotrack
