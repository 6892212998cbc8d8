// Shared test utilities: independent oracles and process helpers. Everything
// here is deliberately written from first principles rather than calling the
// library under test.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>
#include <unistd.h>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace testutil {

// Amplitude of the component of x at freq_hz, via a single-bin DFT. Exact
// for sinusoids spanning an integer number of cycles.
inline double sine_amplitude(const Eigen::VectorXd& x, double freq_hz,
                             double rate_hz) {
  const double n = static_cast<double>(x.size());
  std::complex<double> acc(0.0, 0.0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double phase = -2.0 * M_PI * freq_hz * static_cast<double>(i) / rate_hz;
    acc += x[i] * std::complex<double>(std::cos(phase), std::sin(phase));
  }
  return 2.0 * std::abs(acc) / n;
}

// ---------------------------------------------------------------------------
// Brute-force best-split oracle. Minimizing the weighted Gini impurity
//   nl/n (1 - sum_c (lc/nl)^2) + nr/n (1 - sum_c (rc/nr)^2)
// is equivalent to maximizing q = (Sl * nr + Sr * nl) / (nl * nr) where
// Sl = sum_c lc^2 and Sr = sum_c rc^2. Candidates and tie-breaks follow the
// documented contract: float32-snapped midpoints between adjacent distinct
// sorted values, ties to the lower feature then the lower threshold. All
// comparisons are exact integer cross-multiplications.

struct OracleSplit {
  bool valid = false;
  int feature = -1;
  double threshold = 0.0;
  unsigned __int128 q_num = 0;
  std::uint64_t q_den = 1;
};

// True when a is strictly better than b under (score, feature, threshold).
inline bool oracle_better(const OracleSplit& a, const OracleSplit& b) {
  if (!b.valid) return a.valid;
  if (!a.valid) return false;
  unsigned __int128 lhs = a.q_num * b.q_den;
  unsigned __int128 rhs = b.q_num * a.q_den;
  if (lhs != rhs) return lhs > rhs;  // maximizing q
  if (a.feature != b.feature) return a.feature < b.feature;
  return a.threshold < b.threshold;
}

inline OracleSplit brute_force_split(const Eigen::MatrixXd& x,
                                     const std::vector<int>& y,
                                     int n_classes) {
  OracleSplit best;
  const Eigen::Index n = x.rows();
  for (int f = 0; f < x.cols(); ++f) {
    std::vector<std::pair<double, int>> vals;
    for (Eigen::Index r = 0; r < n; ++r)
      vals.emplace_back(x(r, f), y[static_cast<std::size_t>(r)]);
    std::sort(vals.begin(), vals.end());

    for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
      double lo = vals[i].first;
      double hi = vals[i + 1].first;
      if (!(hi > lo)) continue;
      double thr = static_cast<double>(static_cast<float>(lo + (hi - lo) / 2));
      if (!(lo < thr && thr <= hi)) continue;

      // Count classes strictly below the threshold from scratch each time;
      // slow and independent of the incremental bookkeeping under test.
      std::vector<std::int64_t> lc(static_cast<std::size_t>(n_classes), 0);
      std::vector<std::int64_t> rc(static_cast<std::size_t>(n_classes), 0);
      for (Eigen::Index r = 0; r < n; ++r) {
        auto cls = static_cast<std::size_t>(y[static_cast<std::size_t>(r)]);
        if (x(r, f) < thr)
          ++lc[cls];
        else
          ++rc[cls];
      }
      std::int64_t nl = 0, nr = 0, sl = 0, sr = 0;
      for (int c = 0; c < n_classes; ++c) {
        auto ci = static_cast<std::size_t>(c);
        nl += lc[ci];
        nr += rc[ci];
        sl += lc[ci] * lc[ci];
        sr += rc[ci] * rc[ci];
      }
      if (nl == 0 || nr == 0) continue;

      OracleSplit cand;
      cand.valid = true;
      cand.feature = f;
      cand.threshold = thr;
      cand.q_num = static_cast<unsigned __int128>(sl) *
                       static_cast<std::uint64_t>(nr) +
                   static_cast<unsigned __int128>(sr) *
                       static_cast<std::uint64_t>(nl);
      cand.q_den =
          static_cast<std::uint64_t>(nl) * static_cast<std::uint64_t>(nr);
      if (oracle_better(cand, best)) best = cand;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("hydrotrack_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& rel = "") const {
    return rel.empty() ? path_.string() : (path_ / rel).string();
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI binary with stdout/stderr captured to files. The quoted_args
// string is appended verbatim after the program path.
inline CliResult run_cli(const std::string& cli_path,
                         const std::string& quoted_args,
                         const std::string& log_level = "quiet") {
  TempDir capture("cap");
  std::string cmd = "HYDROTRACK_LOG=" + log_level + " \"" + cli_path + "\" " +
                    quoted_args + " > \"" + capture.str("out.txt") +
                    "\" 2> \"" + capture.str("err.txt") + "\"";
  int status = std::system(cmd.c_str());
  CliResult result;
  if (status < 0)
    result.exit_code = -1;
  else if (WIFEXITED(status))
    result.exit_code = WEXITSTATUS(status);
  else
    result.exit_code = 128;
  result.out = slurp(capture.str("out.txt"));
  result.err = slurp(capture.str("err.txt"));
  return result;
}

}  // namespace testutil
