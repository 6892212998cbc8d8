#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "hydrotrack/dsp.hpp"
#include "hydrotrack/forest.hpp"

namespace hydrotrack {

inline constexpr std::size_t kCompactModelMaxBytes = 65536;
inline constexpr std::uint16_t kCompactFormatVersion = 1;

// Serialized forest for fixed-memory targets. Little-endian layout:
//   0    "HTRK"
//   4    u16 format version
//   6    u16 feature schema version
//   8    u16 tree count
//   10   u8 class count, u8 reserved
//   12   per tree: u16 node count, then node count x 8-byte nodes in
//        preorder (left child implicit at next index)
//   end  leaf probability table, 3 x u16 Q1.15 per leaf, rows sum to 32768
// Node bytes: [0] feature index, 0xFF for leaves. Internal nodes carry a
// float32 threshold at [1..4] and the right child index at [5..6]. Leaves
// carry the argmax class at [1] and their probability row index at [5..6].
// Byte [7] is reserved zero.
struct CompactModel {
  std::vector<std::uint8_t> bytes;

  // Parsed view, filled by compile_model / load_compact.
  std::uint16_t format_version = 0;
  std::uint16_t feature_version = 0;
  std::uint16_t tree_count = 0;
  std::uint8_t class_count = 0;
  std::vector<std::uint32_t> tree_offsets;  // first node byte of each tree
  std::vector<std::uint16_t> tree_node_counts;
  std::uint32_t prob_table_offset = 0;
  std::uint32_t prob_row_count = 0;
};

// Throws model_too_large past the 65536 byte budget. Leaf probabilities are
// quantized with largest-remainder rounding so each row sums to exactly
// 32768, which makes compile(decode(compile(m))) byte-identical.
CompactModel compile_model(const ForestModel& model);

// Parses and structurally validates serialized bytes (corrupt_model on any
// malformed content, version_mismatch on unknown versions).
CompactModel load_compact(std::vector<std::uint8_t> bytes);

// Back to a ForestModel whose leaf counts are the Q1.15 numerators.
ForestModel decode_model(const CompactModel& compact);

// Allocation-free forest evaluation over the serialized bytes.
Prediction infer(const CompactModel& compact,
                 const Eigen::Ref<const Eigen::VectorXd>& features);

// Rows where predict() and infer() disagree on the argmax label.
std::vector<Eigen::Index> audit_argmax(
    const ForestModel& model, const CompactModel& compact,
    const Eigen::Ref<const Eigen::MatrixXd>& features);

struct StreamConfig {
  WindowSpec window;
  EvmParams evm;
  CalibrationProfile profile;
};

struct StreamResult {
  std::int64_t timestamp_ms = 0;
  HydrationLabel label = HydrationLabel::FullyHydrated;
  std::array<double, kClassCount> probabilities{};
  FeatureArray features;
};

// Fixed-memory streaming inference. All buffers are sized at construction
// (one window of samples per channel); push() never allocates. The band-pass
// runs causally here, matching the causal offline reference, not the
// zero-phase filter used for training.
class StreamState {
 public:
  explicit StreamState(const StreamConfig& config);

  // Feeds one frame; emits a classification when a full window is present
  // and the stride boundary is reached (first at frame == window samples).
  // Throws out_of_order_frame on non-increasing timestamps.
  std::optional<StreamResult> push(const SpectralFrame& frame,
                                   const CompactModel& model);

  Eigen::Index window_samples() const { return window_; }
  Eigen::Index stride_samples() const { return stride_; }
  std::int64_t frames_seen() const { return count_; }

 private:
  // Monotonic index queue over a fixed ring; front() is the window extreme.
  struct MonoRing {
    std::vector<std::int64_t> index;
    std::vector<double> value;
    std::size_t head = 0, size = 0;

    void init(std::size_t capacity) {
      index.assign(capacity, 0);
      value.assign(capacity, 0.0);
      head = 0;
      size = 0;
    }
    std::size_t back_pos() const {
      return (head + size - 1) % index.size();
    }
    void push_max(std::int64_t i, double v) {
      while (size > 0 && value[back_pos()] <= v) --size;
      std::size_t p = (head + size) % index.size();
      index[p] = i;
      value[p] = v;
      ++size;
    }
    void push_min(std::int64_t i, double v) {
      while (size > 0 && value[back_pos()] >= v) --size;
      std::size_t p = (head + size) % index.size();
      index[p] = i;
      value[p] = v;
      ++size;
    }
    void evict_before(std::int64_t min_index) {
      while (size > 0 && index[head] < min_index) {
        head = (head + 1) % index.size();
        --size;
      }
    }
    double front() const { return value[head]; }
  };

  Eigen::Index window_ = 0;
  Eigen::Index stride_ = 0;
  double alpha_ = 0.0;
  BiquadCascade cascade_;
  CalibrationProfile profile_;
  Eigen::MatrixXd ring_;          // window x channels of magnified values
  Eigen::MatrixXd filter_state_;  // 2 x (sections * channels), DF2T state
  std::array<MonoRing, kChannelCount> min_ring_;
  std::array<MonoRing, kChannelCount> max_ring_;
  std::array<long double, kChannelCount> sum_{};
  std::array<long double, kChannelCount> sum_sq_{};
  std::array<long double, kChannelCount> abs_diff_{};
  std::array<double, kChannelCount> prev_{};
  std::int64_t count_ = 0;
  std::int64_t last_timestamp_ms_ = 0;
};

}  // namespace hydrotrack
