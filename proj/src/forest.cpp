#include "hydrotrack/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "hydrotrack/rng.hpp"

namespace hydrotrack {

namespace {

using Counts = std::array<std::int64_t, kClassCount>;

int resolve_max_features(int requested, int n_features) {
  if (requested < 0 || requested > n_features)
    fail(errc::invalid_argument,
         "forest params: max_features out of range");
  if (requested > 0) return requested;
  int m = static_cast<int>(std::floor(std::sqrt(double(n_features))));
  return std::max(1, m);
}

struct SplitCandidate {
  bool valid = false;
  // Weighted Gini impurity as the exact rational num / (n_left * n_right),
  // up to the common factor 1/n. Exact integer comparison avoids rounding
  // flips between algebraically equal candidates.
  unsigned __int128 num = 0;
  std::uint64_t den = 1;
  int feature = -1;
  double threshold = 0.0;
};

bool better(const SplitCandidate& a, const SplitCandidate& b) {
  if (!b.valid) return a.valid;
  if (!a.valid) return false;
  unsigned __int128 lhs = a.num * b.den;
  unsigned __int128 rhs = b.num * a.den;
  if (lhs != rhs) return lhs < rhs;
  if (a.feature != b.feature) return a.feature < b.feature;
  return a.threshold < b.threshold;
}

Counts count_classes(const std::vector<HydrationLabel>& y,
                     const std::vector<Eigen::Index>& rows) {
  Counts counts{};
  for (Eigen::Index r : rows)
    ++counts[static_cast<int>(y[static_cast<std::size_t>(r)])];
  return counts;
}

SplitCandidate best_split_on(const Eigen::Ref<const Eigen::MatrixXd>& x,
                             const std::vector<HydrationLabel>& y,
                             const std::vector<Eigen::Index>& rows,
                             int feature, const Counts& total) {
  std::vector<std::pair<double, int>> vals;
  vals.reserve(rows.size());
  for (Eigen::Index r : rows)
    vals.emplace_back(x(r, feature),
                      static_cast<int>(y[static_cast<std::size_t>(r)]));
  std::sort(vals.begin(), vals.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  SplitCandidate best;
  const std::int64_t n = static_cast<std::int64_t>(vals.size());
  Counts left{};
  for (std::int64_t i = 0; i + 1 < n; ++i) {
    ++left[vals[static_cast<std::size_t>(i)].second];
    double lo = vals[static_cast<std::size_t>(i)].first;
    double hi = vals[static_cast<std::size_t>(i + 1)].first;
    if (!(hi > lo)) continue;
    // Midpoint snapped to float32; the compact runtime stores thresholds
    // as float32 and must route every row identically.
    double mid = lo + (hi - lo) * 0.5;
    double thr = static_cast<double>(static_cast<float>(mid));
    if (!(lo < thr && thr <= hi)) continue;

    std::int64_t nl = i + 1;
    std::int64_t nr = n - nl;
    std::int64_t sl = 0, sr = 0;
    for (int c = 0; c < kClassCount; ++c) {
      sl += left[c] * left[c];
      std::int64_t rc = total[c] - left[c];
      sr += rc * rc;
    }
    SplitCandidate cand;
    cand.valid = true;
    cand.num = static_cast<unsigned __int128>(
                   static_cast<std::uint64_t>(nr) *
                   static_cast<unsigned __int128>(nl * nl - sl)) +
               static_cast<unsigned __int128>(
                   static_cast<std::uint64_t>(nl) *
                   static_cast<unsigned __int128>(nr * nr - sr));
    cand.den = static_cast<std::uint64_t>(nl) *
               static_cast<std::uint64_t>(nr);
    cand.feature = feature;
    cand.threshold = thr;
    if (better(cand, best)) best = cand;
  }
  return best;
}

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const std::vector<HydrationLabel>& y,
              int max_depth, int max_features, Rng& rng)
      : x_(x),
        y_(y),
        max_depth_(max_depth),
        max_features_(max_features),
        rng_(rng) {}

  Tree build(std::vector<Eigen::Index> rows) {
    Tree tree;
    nodes_ = &tree.nodes;
    grow(std::move(rows), 0);
    nodes_ = nullptr;
    return tree;
  }

 private:

  std::int32_t grow(std::vector<Eigen::Index> rows, int depth) {
    const std::int32_t index = static_cast<std::int32_t>(nodes_->size());
    nodes_->emplace_back();
    Counts counts = count_classes(y_, rows);
    (*nodes_)[index].class_counts = counts;

    int present = 0;
    for (int c = 0; c < kClassCount; ++c)
      if (counts[c] > 0) ++present;
    if (depth >= max_depth_ || present <= 1 || rows.size() < 2)
      return index;

    // Feature subset without replacement, fresh pool per node.
    const int d = static_cast<int>(x_.cols());
    std::vector<int> pool(static_cast<std::size_t>(d));
    std::iota(pool.begin(), pool.end(), 0);
    SplitCandidate best;
    for (int j = 0; j < max_features_; ++j) {
      std::size_t pick =
          static_cast<std::size_t>(j) +
          static_cast<std::size_t>(rng_.next_below(
              static_cast<std::uint64_t>(d - j)));
      std::swap(pool[static_cast<std::size_t>(j)], pool[pick]);
      SplitCandidate cand = best_split_on(
          x_, y_, rows, pool[static_cast<std::size_t>(j)], counts);
      if (better(cand, best)) best = cand;
    }
    if (!best.valid) return index;

    std::vector<Eigen::Index> left_rows, right_rows;
    left_rows.reserve(rows.size());
    right_rows.reserve(rows.size());
    for (Eigen::Index r : rows) {
      if (x_(r, best.feature) < best.threshold)
        left_rows.push_back(r);
      else
        right_rows.push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    (*nodes_)[index].feature = best.feature;
    (*nodes_)[index].threshold = best.threshold;
    std::int32_t left = grow(std::move(left_rows), depth + 1);
    std::int32_t right = grow(std::move(right_rows), depth + 1);
    (*nodes_)[index].left = left;
    (*nodes_)[index].right = right;
    return index;
  }

  const Eigen::MatrixXd& x_;
  const std::vector<HydrationLabel>& y_;
  int max_depth_;
  int max_features_;
  Rng& rng_;
  std::vector<TreeNode>* nodes_ = nullptr;
};

LabeledDataset subset(const LabeledDataset& dataset,
                      const std::vector<Eigen::Index>& rows) {
  LabeledDataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), kFeatureCount);
  out.labels.reserve(rows.size());
  out.subject_ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
        dataset.features.row(rows[i]);
    out.labels.push_back(dataset.labels[static_cast<std::size_t>(rows[i])]);
    out.subject_ids.push_back(
        dataset.subject_ids[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

std::vector<int> distinct_subjects(const LabeledDataset& dataset) {
  std::set<int> s(dataset.subject_ids.begin(), dataset.subject_ids.end());
  return std::vector<int>(s.begin(), s.end());
}

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

BestSplit find_best_split(const Eigen::Ref<const Eigen::MatrixXd>& x,
                          const std::vector<HydrationLabel>& y,
                          const std::vector<Eigen::Index>& rows,
                          const std::vector<int>& features) {
  if (static_cast<std::size_t>(x.rows()) != y.size())
    fail(errc::shape_mismatch, "split search: rows and labels disagree");
  for (Eigen::Index r : rows)
    if (r < 0 || r >= x.rows())
      fail(errc::invalid_argument, "split search: row index out of range");
  Counts total = count_classes(y, rows);
  SplitCandidate best;
  for (int f : features) {
    if (f < 0 || f >= x.cols())
      fail(errc::invalid_argument, "split search: feature out of range");
    SplitCandidate cand = best_split_on(x, y, rows, f, total);
    if (better(cand, best)) best = cand;
  }
  BestSplit out;
  out.valid = best.valid;
  out.feature = best.feature;
  out.threshold = best.threshold;
  return out;
}

ForestModel train_forest(const LabeledDataset& dataset,
                         const ForestParams& params) {
  validate(dataset);
  const Eigen::Index n = dataset.rows();
  if (n < 10)
    fail(errc::degenerate_data,
         "train_forest: need at least 10 rows, got " + std::to_string(n));
  std::set<HydrationLabel> classes(dataset.labels.begin(),
                                   dataset.labels.end());
  if (classes.size() < 2)
    fail(errc::degenerate_data,
         "train_forest: need at least 2 distinct labels");
  if (params.n_estimators < 1)
    fail(errc::invalid_argument, "forest params: n_estimators must be >= 1");
  if (params.max_depth < 1)
    fail(errc::invalid_argument, "forest params: max_depth must be >= 1");
  const int d = static_cast<int>(dataset.features.cols());
  const int m = resolve_max_features(params.max_features, d);

  ForestModel model;
  model.n_features = d;
  model.feature_version = kFeatureVersion;
  model.params = params;
  model.trees.reserve(static_cast<std::size_t>(params.n_estimators));

  for (int t = 0; t < params.n_estimators; ++t) {
    // Independent stream per tree; trees never share RNG state, so data or
    // parameter changes in one tree cannot shift another.
    Rng rng(params.seed ^ static_cast<std::uint64_t>(t));
    std::vector<Eigen::Index> bootstrap(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      bootstrap[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(
          rng.next_below(static_cast<std::uint64_t>(n)));
    TreeBuilder builder(dataset.features, dataset.labels, params.max_depth, m,
                        rng);
    model.trees.push_back(builder.build(std::move(bootstrap)));
  }
  return model;
}

Prediction predict(const ForestModel& model,
                   const Eigen::Ref<const Eigen::VectorXd>& features) {
  if (model.trees.empty())
    fail(errc::invalid_argument, "predict: empty model");
  if (features.size() != model.n_features)
    fail(errc::version_mismatch,
         "predict: feature count " + std::to_string(features.size()) +
             " does not match model feature count " +
             std::to_string(model.n_features));

  Prediction pred;
  for (const Tree& tree : model.trees) {
    std::int32_t i = 0;
    while (!tree.nodes[static_cast<std::size_t>(i)].is_leaf()) {
      const TreeNode& node = tree.nodes[static_cast<std::size_t>(i)];
      i = features[node.feature] < node.threshold ? node.left : node.right;
    }
    const Counts& counts =
        tree.nodes[static_cast<std::size_t>(i)].class_counts;
    double total = 0.0;
    for (int c = 0; c < kClassCount; ++c)
      total += static_cast<double>(counts[c]);
    for (int c = 0; c < kClassCount; ++c)
      pred.probabilities[static_cast<std::size_t>(c)] +=
          static_cast<double>(counts[c]) / total;
  }
  double inv = 1.0 / static_cast<double>(model.trees.size());
  int arg = 0;
  for (int c = 0; c < kClassCount; ++c) {
    pred.probabilities[static_cast<std::size_t>(c)] *= inv;
    if (pred.probabilities[static_cast<std::size_t>(c)] >
        pred.probabilities[static_cast<std::size_t>(arg)])
      arg = c;
  }
  pred.label = static_cast<HydrationLabel>(arg);
  return pred;
}

EvalReport evaluate_labels(const std::vector<HydrationLabel>& truth,
                           const std::vector<HydrationLabel>& predicted) {
  if (truth.size() != predicted.size())
    fail(errc::shape_mismatch,
         "evaluate: truth and prediction counts differ");
  if (truth.empty())
    fail(errc::empty_test_set, "evaluate: empty test set");

  EvalReport report;
  report.row_count = static_cast<std::int64_t>(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++report.confusion(static_cast<int>(truth[i]),
                       static_cast<int>(predicted[i]));

  std::int64_t correct = 0;
  for (int c = 0; c < kClassCount; ++c) correct += report.confusion(c, c);
  report.accuracy =
      static_cast<double>(correct) / static_cast<double>(report.row_count);

  double f1_sum = 0.0;
  for (int c = 0; c < kClassCount; ++c) {
    double col = static_cast<double>(report.confusion.col(c).sum());
    double row = static_cast<double>(report.confusion.row(c).sum());
    double diag = static_cast<double>(report.confusion(c, c));
    double p = safe_div(diag, col);
    double r = safe_div(diag, row);
    report.precision[static_cast<std::size_t>(c)] = p;
    report.recall[static_cast<std::size_t>(c)] = r;
    report.f1[static_cast<std::size_t>(c)] = safe_div(2.0 * p * r, p + r);
    f1_sum += report.f1[static_cast<std::size_t>(c)];
  }
  report.macro_f1 = f1_sum / kClassCount;
  return report;
}

EvalReport evaluate(const ForestModel& model, const LabeledDataset& dataset) {
  validate(dataset);
  if (dataset.rows() == 0)
    fail(errc::empty_test_set, "evaluate: empty test set");
  std::vector<HydrationLabel> predicted;
  predicted.reserve(static_cast<std::size_t>(dataset.rows()));
  for (Eigen::Index r = 0; r < dataset.rows(); ++r)
    predicted.push_back(predict(model, dataset.features.row(r)).label);
  return evaluate_labels(dataset.labels, predicted);
}

CvResult cross_validate(const LabeledDataset& dataset, int k,
                        bool group_by_subject, const ForestParams& params,
                        std::uint64_t seed) {
  validate(dataset);
  if (k < 2) fail(errc::invalid_argument, "cross_validate: k must be >= 2");

  std::vector<std::vector<Eigen::Index>> fold_rows(
      static_cast<std::size_t>(k));
  std::vector<std::vector<int>> fold_subjects(static_cast<std::size_t>(k));
  Rng rng(seed);

  if (group_by_subject) {
    std::vector<int> subjects = distinct_subjects(dataset);
    if (static_cast<int>(subjects.size()) < k)
      fail(errc::too_few_groups,
           "cross_validate: " + std::to_string(subjects.size()) +
               " subjects cannot fill " + std::to_string(k) + " folds");
    rng.shuffle(subjects);
    for (std::size_t i = 0; i < subjects.size(); ++i)
      fold_subjects[i % static_cast<std::size_t>(k)].push_back(subjects[i]);
    for (Eigen::Index r = 0; r < dataset.rows(); ++r) {
      int s = dataset.subject_ids[static_cast<std::size_t>(r)];
      for (std::size_t f = 0; f < fold_subjects.size(); ++f)
        if (std::find(fold_subjects[f].begin(), fold_subjects[f].end(), s) !=
            fold_subjects[f].end())
          fold_rows[f].push_back(r);
    }
  } else {
    if (dataset.rows() < k)
      fail(errc::too_few_rows,
           "cross_validate: fewer rows than folds");
    for (int c = 0; c < kClassCount; ++c) {
      std::vector<Eigen::Index> rows;
      for (Eigen::Index r = 0; r < dataset.rows(); ++r)
        if (static_cast<int>(dataset.labels[static_cast<std::size_t>(r)]) ==
            c)
          rows.push_back(r);
      rng.shuffle(rows);
      for (std::size_t j = 0; j < rows.size(); ++j)
        fold_rows[j % static_cast<std::size_t>(k)].push_back(rows[j]);
    }
    for (auto& rows : fold_rows)
      if (rows.empty())
        fail(errc::too_few_rows,
             "cross_validate: a fold received no test rows");
  }

  CvResult result;
  result.folds.reserve(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    std::vector<char> in_test(static_cast<std::size_t>(dataset.rows()), 0);
    for (Eigen::Index r : fold_rows[static_cast<std::size_t>(f)])
      in_test[static_cast<std::size_t>(r)] = 1;
    std::vector<Eigen::Index> train_rows;
    for (Eigen::Index r = 0; r < dataset.rows(); ++r)
      if (!in_test[static_cast<std::size_t>(r)]) train_rows.push_back(r);

    LabeledDataset train_set = subset(dataset, train_rows);
    LabeledDataset test_set =
        subset(dataset, fold_rows[static_cast<std::size_t>(f)]);

    ForestParams fold_params = params;
    std::uint64_t fold_seed_state =
        seed ^ static_cast<std::uint64_t>(f + 1);
    fold_params.seed = splitmix64(fold_seed_state);

    ForestModel model = train_forest(train_set, fold_params);
    FoldResult fold;
    fold.report = evaluate(model, test_set);
    fold.train_accuracy = evaluate(model, train_set).accuracy;
    fold.test_subjects = fold_subjects[static_cast<std::size_t>(f)];
    std::sort(fold.test_subjects.begin(), fold.test_subjects.end());
    result.folds.push_back(std::move(fold));
  }

  double mean = 0.0;
  for (const FoldResult& fold : result.folds)
    mean += fold.report.accuracy;
  mean /= static_cast<double>(result.folds.size());
  double var = 0.0;
  for (const FoldResult& fold : result.folds) {
    double d = fold.report.accuracy - mean;
    var += d * d;
  }
  var /= static_cast<double>(result.folds.size());
  result.mean_accuracy = mean;
  result.std_accuracy = std::sqrt(var);
  return result;
}

PerSubjectResult per_subject_evaluate(const LabeledDataset& dataset,
                                      const ForestParams& params,
                                      std::uint64_t seed) {
  validate(dataset);
  PerSubjectResult result;
  for (int s : distinct_subjects(dataset)) {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index r = 0; r < dataset.rows(); ++r)
      if (dataset.subject_ids[static_cast<std::size_t>(r)] == s)
        rows.push_back(r);

    std::set<HydrationLabel> classes;
    for (Eigen::Index r : rows)
      classes.insert(dataset.labels[static_cast<std::size_t>(r)]);
    if (rows.size() < 10 || classes.size() < 2) {
      result.skipped_subjects.push_back(s);
      continue;
    }

    std::uint64_t state =
        seed ^ (0x9E3779B97F4A7C15ULL *
                (static_cast<std::uint64_t>(static_cast<std::uint32_t>(s)) +
                 1));
    Rng rng(splitmix64(state));

    std::vector<Eigen::Index> train_rows, test_rows;
    for (int c = 0; c < kClassCount; ++c) {
      std::vector<Eigen::Index> class_rows;
      for (Eigen::Index r : rows)
        if (static_cast<int>(dataset.labels[static_cast<std::size_t>(r)]) ==
            c)
          class_rows.push_back(r);
      if (class_rows.empty()) continue;
      if (class_rows.size() < 2) {
        train_rows.insert(train_rows.end(), class_rows.begin(),
                          class_rows.end());
        continue;
      }
      rng.shuffle(class_rows);
      std::size_t n_test = class_rows.size() / 5;
      if (n_test < 1) n_test = 1;
      if (n_test > class_rows.size() - 1) n_test = class_rows.size() - 1;
      test_rows.insert(test_rows.end(), class_rows.begin(),
                       class_rows.begin() + static_cast<std::ptrdiff_t>(n_test));
      train_rows.insert(train_rows.end(),
                        class_rows.begin() + static_cast<std::ptrdiff_t>(n_test),
                        class_rows.end());
    }

    ForestParams subject_params = params;
    subject_params.seed = rng.next_u64();
    SubjectResult entry;
    entry.subject_id = s;
    entry.train_rows = static_cast<Eigen::Index>(train_rows.size());
    entry.test_rows = static_cast<Eigen::Index>(test_rows.size());
    try {
      ForestModel model = train_forest(subset(dataset, train_rows),
                                       subject_params);
      entry.report = evaluate(model, subset(dataset, test_rows));
    } catch (const Error& e) {
      if (e.code() == errc::degenerate_data ||
          e.code() == errc::empty_test_set) {
        result.skipped_subjects.push_back(s);
        continue;
      }
      throw;
    }
    result.subjects.push_back(std::move(entry));
  }
  return result;
}

}  // namespace hydrotrack
