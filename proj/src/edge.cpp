#include "hydrotrack/edge.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>

#include "hydrotrack/spectra.hpp"

namespace hydrotrack {

static_assert(std::endian::native == std::endian::little,
              "compact model codec assumes a little-endian host");

namespace {

constexpr std::uint8_t kLeafMarker = 0xFF;
constexpr std::int64_t kProbOne = 32768;  // Q1.15 fixed point

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::uint16_t read_u16(const std::uint8_t* p) {
  std::uint16_t v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

float read_f32(const std::uint8_t* p) {
  float v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

// Q1.15 row summing to exactly 32768: floor everything, then hand the
// shortfall to the largest remainders (ties to the lower class). Exactness
// makes the quantizer idempotent, which round-trip byte-identity needs.
std::array<std::uint16_t, kClassCount> quantize_row(
    const std::array<std::int64_t, kClassCount>& counts) {
  std::int64_t total = 0;
  for (int c = 0; c < kClassCount; ++c) {
    if (counts[c] < 0)
      fail(errc::invalid_argument, "compile_model: negative leaf count");
    total += counts[c];
  }
  if (total <= 0)
    fail(errc::invalid_argument, "compile_model: empty leaf");

  std::array<std::int64_t, kClassCount> base{};
  std::array<std::int64_t, kClassCount> rem{};
  std::int64_t assigned = 0;
  for (int c = 0; c < kClassCount; ++c) {
    std::int64_t num = counts[c] * kProbOne;
    base[c] = num / total;
    rem[c] = num % total;
    assigned += base[c];
  }
  std::int64_t shortfall = kProbOne - assigned;
  std::array<int, kClassCount> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    return a < b;
  });
  for (std::int64_t i = 0; i < shortfall; ++i) ++base[order[static_cast<std::size_t>(i)]];

  std::array<std::uint16_t, kClassCount> q{};
  for (int c = 0; c < kClassCount; ++c)
    q[c] = static_cast<std::uint16_t>(base[c]);
  return q;
}

int argmax_row(const std::array<std::uint16_t, kClassCount>& q) {
  int arg = 0;
  for (int c = 1; c < kClassCount; ++c)
    if (q[c] > q[arg]) arg = c;
  return arg;
}

}  // namespace

CompactModel compile_model(const ForestModel& model) {
  if (model.trees.empty())
    fail(errc::invalid_argument, "compile_model: empty forest");
  if (model.trees.size() > 65535)
    fail(errc::model_too_large, "compile_model: more than 65535 trees");
  if (model.n_features < 1 || model.n_features > 255)
    fail(errc::invalid_argument,
         "compile_model: feature count must be in [1, 255]");

  std::vector<std::uint8_t> body;
  std::vector<std::array<std::uint16_t, kClassCount>> rows;

  for (const Tree& tree : model.trees) {
    if (tree.nodes.empty())
      fail(errc::invalid_argument, "compile_model: empty tree");
    if (tree.nodes.size() > 65535)
      fail(errc::model_too_large, "compile_model: tree exceeds 65535 nodes");

    // Canonical preorder emission; accepts any valid node layout and fixes
    // the implicit left-child-next invariant the format requires.
    std::vector<std::uint8_t> nodes;
    std::vector<char> visited(tree.nodes.size(), 0);
    std::size_t emitted = 0;

    std::function<std::size_t(std::int32_t)> emit =
        [&](std::int32_t old_index) -> std::size_t {
      if (old_index < 0 ||
          static_cast<std::size_t>(old_index) >= tree.nodes.size() ||
          visited[static_cast<std::size_t>(old_index)])
        fail(errc::invalid_argument, "compile_model: malformed tree links");
      visited[static_cast<std::size_t>(old_index)] = 1;
      const TreeNode& node = tree.nodes[static_cast<std::size_t>(old_index)];
      std::size_t my_index = emitted++;
      std::size_t my_offset = nodes.size();
      nodes.insert(nodes.end(), 8, 0);

      if (node.is_leaf()) {
        auto q = quantize_row(node.class_counts);
        nodes[my_offset + 0] = kLeafMarker;
        nodes[my_offset + 1] = static_cast<std::uint8_t>(argmax_row(q));
        std::uint16_t row_index = static_cast<std::uint16_t>(rows.size());
        std::memcpy(&nodes[my_offset + 5], &row_index, 2);
        rows.push_back(q);
        if (rows.size() > 65535)
          fail(errc::model_too_large,
               "compile_model: more than 65535 leaves");
      } else {
        if (node.feature < 0 || node.feature >= model.n_features)
          fail(errc::invalid_argument,
               "compile_model: feature index out of range");
        float thr = static_cast<float>(node.threshold);
        if (!std::isfinite(thr) ||
            static_cast<double>(thr) != node.threshold)
          fail(errc::invalid_argument,
               "compile_model: threshold is not float32-exact");
        nodes[my_offset + 0] = static_cast<std::uint8_t>(node.feature);
        std::memcpy(&nodes[my_offset + 1], &thr, 4);
        emit(node.left);
        std::size_t right_index = emit(node.right);
        std::uint16_t right16 = static_cast<std::uint16_t>(right_index);
        std::memcpy(&nodes[my_offset + 5], &right16, 2);
      }
      return my_index;
    };
    emit(0);
    if (emitted != tree.nodes.size())
      fail(errc::invalid_argument,
           "compile_model: tree has unreachable nodes");

    put_u16(body, static_cast<std::uint16_t>(tree.nodes.size()));
    body.insert(body.end(), nodes.begin(), nodes.end());
  }

  std::vector<std::uint8_t> bytes;
  bytes.reserve(12 + body.size() + rows.size() * 6);
  bytes.push_back('H');
  bytes.push_back('T');
  bytes.push_back('R');
  bytes.push_back('K');
  put_u16(bytes, kCompactFormatVersion);
  put_u16(bytes, model.feature_version);
  put_u16(bytes, static_cast<std::uint16_t>(model.trees.size()));
  bytes.push_back(static_cast<std::uint8_t>(kClassCount));
  bytes.push_back(0);
  bytes.insert(bytes.end(), body.begin(), body.end());
  for (const auto& q : rows)
    for (int c = 0; c < kClassCount; ++c) put_u16(bytes, q[c]);

  if (bytes.size() > kCompactModelMaxBytes)
    fail(errc::model_too_large,
         "compile_model: " + std::to_string(bytes.size()) +
             " bytes exceeds the " +
             std::to_string(kCompactModelMaxBytes) + " byte budget");
  return load_compact(std::move(bytes));
}

CompactModel load_compact(std::vector<std::uint8_t> bytes) {
  if (bytes.size() > kCompactModelMaxBytes)
    fail(errc::model_too_large, "load_compact: file exceeds byte budget");
  if (bytes.size() < 12)
    fail(errc::corrupt_model, "load_compact: truncated header");
  if (bytes[0] != 'H' || bytes[1] != 'T' || bytes[2] != 'R' ||
      bytes[3] != 'K')
    fail(errc::corrupt_model, "load_compact: bad magic");

  CompactModel m;
  m.format_version = read_u16(&bytes[4]);
  m.feature_version = read_u16(&bytes[6]);
  m.tree_count = read_u16(&bytes[8]);
  m.class_count = bytes[10];
  if (m.format_version != kCompactFormatVersion)
    fail(errc::version_mismatch,
         "load_compact: unsupported format version " +
             std::to_string(m.format_version));
  if (m.feature_version != kFeatureVersion)
    fail(errc::version_mismatch,
         "load_compact: feature schema version " +
             std::to_string(m.feature_version) + " is not " +
             std::to_string(kFeatureVersion));
  if (m.class_count != kClassCount)
    fail(errc::corrupt_model, "load_compact: class count must be 3");
  if (m.tree_count == 0)
    fail(errc::corrupt_model, "load_compact: no trees");
  if (bytes[11] != 0)
    fail(errc::corrupt_model, "load_compact: reserved header byte set");

  std::size_t cursor = 12;
  for (std::uint16_t t = 0; t < m.tree_count; ++t) {
    if (cursor + 2 > bytes.size())
      fail(errc::corrupt_model, "load_compact: truncated tree header");
    std::uint16_t count = read_u16(&bytes[cursor]);
    cursor += 2;
    if (count == 0)
      fail(errc::corrupt_model, "load_compact: empty tree");
    if (cursor + std::size_t{8} * count > bytes.size())
      fail(errc::corrupt_model, "load_compact: truncated tree nodes");
    m.tree_offsets.push_back(static_cast<std::uint32_t>(cursor));
    m.tree_node_counts.push_back(count);
    cursor += std::size_t{8} * count;
  }

  std::size_t remaining = bytes.size() - cursor;
  if (remaining % 6 != 0)
    fail(errc::corrupt_model,
         "load_compact: probability table size not a multiple of 6");
  m.prob_table_offset = static_cast<std::uint32_t>(cursor);
  m.prob_row_count = static_cast<std::uint32_t>(remaining / 6);

  for (std::uint32_t r = 0; r < m.prob_row_count; ++r) {
    const std::uint8_t* p = &bytes[m.prob_table_offset + std::size_t{6} * r];
    std::int64_t sum = 0;
    for (int c = 0; c < kClassCount; ++c) sum += read_u16(p + 2 * c);
    // 1e-4 of full scale.
    if (std::llabs(sum - kProbOne) > 3)
      fail(errc::corrupt_model,
           "load_compact: probability row does not sum to one");
  }

  // Structural walk: preorder with the left child at the next index, right
  // child strictly forward, every leaf pointing at a valid table row.
  for (std::uint16_t t = 0; t < m.tree_count; ++t) {
    const std::uint8_t* base = &bytes[m.tree_offsets[t]];
    const std::uint16_t count = m.tree_node_counts[t];
    std::function<std::uint32_t(std::uint32_t)> walk =
        [&](std::uint32_t i) -> std::uint32_t {
      if (i >= count)
        fail(errc::corrupt_model, "load_compact: node index out of range");
      const std::uint8_t* node = base + std::size_t{8} * i;
      if (node[7] != 0)
        fail(errc::corrupt_model, "load_compact: reserved node byte set");
      if (node[0] == kLeafMarker) {
        if (node[1] >= kClassCount)
          fail(errc::corrupt_model, "load_compact: leaf class out of range");
        if (read_u16(node + 5) >= m.prob_row_count)
          fail(errc::corrupt_model,
               "load_compact: leaf probability row out of range");
        return i + 1;
      }
      if (node[0] >= kFeatureCount)
        fail(errc::corrupt_model,
             "load_compact: feature index out of range");
      if (!std::isfinite(read_f32(node + 1)))
        fail(errc::corrupt_model, "load_compact: non-finite threshold");
      std::uint32_t after_left = walk(i + 1);
      std::uint16_t right = read_u16(node + 5);
      if (right != after_left)
        fail(errc::corrupt_model,
             "load_compact: right child does not follow left subtree");
      return walk(right);
    };
    if (walk(0) != count)
      fail(errc::corrupt_model, "load_compact: dangling tree nodes");
  }

  m.bytes = std::move(bytes);
  return m;
}

ForestModel decode_model(const CompactModel& compact) {
  if (compact.bytes.empty())
    fail(errc::corrupt_model, "decode_model: empty model");
  ForestModel model;
  model.n_features = kFeatureCount;
  model.feature_version = compact.feature_version;
  model.params.n_estimators = compact.tree_count;
  model.params.max_features = 0;
  model.params.seed = 0;

  int max_depth = 1;
  for (std::uint16_t t = 0; t < compact.tree_count; ++t) {
    const std::uint8_t* base = &compact.bytes[compact.tree_offsets[t]];
    const std::uint16_t count = compact.tree_node_counts[t];
    Tree tree;
    tree.nodes.resize(count);
    std::function<void(std::uint32_t, int)> walk = [&](std::uint32_t i,
                                                       int depth) {
      const std::uint8_t* p = base + std::size_t{8} * i;
      TreeNode& node = tree.nodes[i];
      if (p[0] == kLeafMarker) {
        const std::uint8_t* row = &compact.bytes[compact.prob_table_offset +
                                                 std::size_t{6} *
                                                     read_u16(p + 5)];
        for (int c = 0; c < kClassCount; ++c)
          node.class_counts[static_cast<std::size_t>(c)] =
              read_u16(row + 2 * c);
        return;
      }
      node.feature = p[0];
      node.threshold = static_cast<double>(read_f32(p + 1));
      node.left = static_cast<std::int32_t>(i + 1);
      node.right = static_cast<std::int32_t>(read_u16(p + 5));
      if (depth + 1 > max_depth) max_depth = depth + 1;
      walk(i + 1, depth + 1);
      walk(static_cast<std::uint32_t>(node.right), depth + 1);
    };
    walk(0, 0);
    model.trees.push_back(std::move(tree));
  }
  model.params.max_depth = max_depth;
  return model;
}

Prediction infer(const CompactModel& compact,
                 const Eigen::Ref<const Eigen::VectorXd>& features) {
  if (compact.bytes.empty())
    fail(errc::corrupt_model, "infer: model not loaded");
  if (features.size() != kFeatureCount)
    fail(errc::shape_mismatch, "infer: feature vector must have 108 values");

  std::uint32_t acc[kClassCount] = {0, 0, 0};
  const std::uint8_t* bytes = compact.bytes.data();
  for (std::uint16_t t = 0; t < compact.tree_count; ++t) {
    const std::uint8_t* base = bytes + compact.tree_offsets[t];
    std::uint32_t i = 0;
    for (;;) {
      const std::uint8_t* p = base + std::size_t{8} * i;
      if (p[0] == kLeafMarker) {
        const std::uint8_t* row =
            bytes + compact.prob_table_offset + std::size_t{6} * read_u16(p + 5);
        for (int c = 0; c < kClassCount; ++c) acc[c] += read_u16(row + 2 * c);
        break;
      }
      double thr = static_cast<double>(read_f32(p + 1));
      i = features[p[0]] < thr ? i + 1 : read_u16(p + 5);
    }
  }

  Prediction pred;
  const double scale =
      1.0 / (static_cast<double>(kProbOne) *
             static_cast<double>(compact.tree_count));
  int arg = 0;
  for (int c = 0; c < kClassCount; ++c) {
    pred.probabilities[static_cast<std::size_t>(c)] =
        static_cast<double>(acc[c]) * scale;
    if (pred.probabilities[static_cast<std::size_t>(c)] >
        pred.probabilities[static_cast<std::size_t>(arg)])
      arg = c;
  }
  pred.label = static_cast<HydrationLabel>(arg);
  return pred;
}

std::vector<Eigen::Index> audit_argmax(
    const ForestModel& model, const CompactModel& compact,
    const Eigen::Ref<const Eigen::MatrixXd>& features) {
  std::vector<Eigen::Index> mismatched;
  Eigen::VectorXd row(features.cols());
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    row = features.row(r);
    if (predict(model, row).label != infer(compact, row).label)
      mismatched.push_back(r);
  }
  return mismatched;
}

StreamState::StreamState(const StreamConfig& config) {
  validate(config.window);
  validate(config.evm.band);
  validate(config.profile);
  if (!std::isfinite(config.evm.alpha) || config.evm.alpha < 0.0)
    fail(errc::invalid_argument, "stream: alpha must be >= 0");

  const double rate = config.evm.band.sample_rate_hz;
  auto to_samples = [](double seconds, double rate_hz, const char* what) {
    double exact = seconds * rate_hz;
    double rounded = std::round(exact);
    if (rounded < 1.0 || std::abs(exact - rounded) > 1e-6 * rounded)
      fail(errc::invalid_window,
           std::string("stream: ") + what +
               " is not a whole number of samples");
    return static_cast<Eigen::Index>(rounded);
  };
  window_ = to_samples(config.window.length_s, rate, "window length");
  stride_ = to_samples(config.window.stride_s, rate, "stride");
  if (window_ < 2)
    fail(errc::invalid_window, "stream: window must cover >= 2 samples");

  alpha_ = config.evm.alpha;
  cascade_ = design_butterworth_bandpass(config.evm.band);
  profile_ = config.profile;
  ring_.setZero(window_, kChannelCount);
  filter_state_.setZero(
      2, static_cast<Eigen::Index>(cascade_.sections.size()) * kChannelCount);
  for (int c = 0; c < kChannelCount; ++c) {
    min_ring_[static_cast<std::size_t>(c)].init(
        static_cast<std::size_t>(window_));
    max_ring_[static_cast<std::size_t>(c)].init(
        static_cast<std::size_t>(window_));
  }
}

std::optional<StreamResult> StreamState::push(const SpectralFrame& frame,
                                              const CompactModel& model) {
  if (count_ > 0 && frame.timestamp_ms <= last_timestamp_ms_)
    fail(errc::out_of_order_frame,
         "stream: timestamp " + std::to_string(frame.timestamp_ms) +
             " is not after " + std::to_string(last_timestamp_ms_));
  last_timestamp_ms_ = frame.timestamp_ms;

  const ChannelArray absorbance = compute_absorbance(frame, profile_);
  const std::int64_t t = count_;
  const Eigen::Index p = static_cast<Eigen::Index>(t % window_);
  const Eigen::Index sections =
      static_cast<Eigen::Index>(cascade_.sections.size());

  for (int c = 0; c < kChannelCount; ++c) {
    double band = absorbance[c];
    for (Eigen::Index k = 0; k < sections; ++k) {
      Eigen::Index col = k * kChannelCount + c;
      band = biquad_step(cascade_.sections[static_cast<std::size_t>(k)],
                         band, filter_state_(0, col), filter_state_(1, col));
    }
    const double y = absorbance[c] + alpha_ * band;

    auto& sum = sum_[static_cast<std::size_t>(c)];
    auto& sum_sq = sum_sq_[static_cast<std::size_t>(c)];
    auto& abs_diff = abs_diff_[static_cast<std::size_t>(c)];
    if (t >= window_) {
      const double out = ring_(p, c);
      const double next = ring_((p + 1) % window_, c);
      sum -= out;
      sum_sq -= static_cast<long double>(out) * out;
      abs_diff -= std::abs(next - out);
    }
    ring_(p, c) = y;
    if (t >= 1)
      abs_diff += std::abs(y - prev_[static_cast<std::size_t>(c)]);
    sum += y;
    sum_sq += static_cast<long double>(y) * y;
    prev_[static_cast<std::size_t>(c)] = y;

    // Evict before pushing so the ring never holds more than window_
    // entries.
    min_ring_[static_cast<std::size_t>(c)].evict_before(t - window_ + 1);
    max_ring_[static_cast<std::size_t>(c)].evict_before(t - window_ + 1);
    min_ring_[static_cast<std::size_t>(c)].push_min(t, y);
    max_ring_[static_cast<std::size_t>(c)].push_max(t, y);
  }

  ++count_;
  if (count_ < window_ || (count_ - window_) % stride_ != 0)
    return std::nullopt;

  StreamResult result;
  result.timestamp_ms = frame.timestamp_ms;
  const long double w = static_cast<long double>(window_);
  for (int c = 0; c < kChannelCount; ++c) {
    const long double mean = sum_[static_cast<std::size_t>(c)] / w;
    long double var = sum_sq_[static_cast<std::size_t>(c)] / w - mean * mean;
    if (var < 0.0L) var = 0.0L;
    const long double mad =
        abs_diff_[static_cast<std::size_t>(c)] / (w - 1.0L);
    result.features[c * kStatsPerChannel + 0] = static_cast<double>(mean);
    result.features[c * kStatsPerChannel + 1] =
        static_cast<double>(std::sqrt(var));
    result.features[c * kStatsPerChannel + 2] =
        min_ring_[static_cast<std::size_t>(c)].front();
    result.features[c * kStatsPerChannel + 3] =
        max_ring_[static_cast<std::size_t>(c)].front();
    result.features[c * kStatsPerChannel + 4] = static_cast<double>(
        std::sqrt(sum_sq_[static_cast<std::size_t>(c)] / w));
    result.features[c * kStatsPerChannel + 5] = static_cast<double>(mad);
  }

  const Prediction pred = infer(model, result.features);
  result.label = pred.label;
  result.probabilities = pred.probabilities;
  return result;
}

}  // namespace hydrotrack
