// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dmvc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Seed = std::uint64_t;

// Invalid input or configuration. The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure while reading or writing files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& stage, std::size_t iteration)
      : std::runtime_error("divergence in " + stage + " at iteration " +
                           std::to_string(iteration)),
        stage_(stage),
        iteration_(iteration) {}

  const std::string& stage() const noexcept { return stage_; }
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::string stage_;
  std::size_t iteration_;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Independent substream seed for sub-task `stream` of a run seeded with `seed`.
inline Seed derive_seed(Seed seed, std::uint64_t stream) {
  return detail::splitmix64(detail::splitmix64(seed) ^ detail::splitmix64(stream + 0x51ed2701ULL));
}

// Stable 64-bit FNV-1a hash, used to key substreams by name.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename... Args>
[[noreturn]] void fail_config(Args&&... args) {
  throw ConfigError(detail::concat(std::forward<Args>(args)...));
}

// Rows of `m` picked by `rows`, in that order.
inline Matrix take_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

inline std::vector<Matrix> take_rows(const std::vector<Matrix>& ms, const std::vector<Index>& rows) {
  std::vector<Matrix> out;
  out.reserve(ms.size());
  for (const auto& m : ms) out.push_back(take_rows(m, rows));
  return out;
}

// Index of the largest entry in each row; ties go to the lowest column.
inline std::vector<std::size_t> row_argmax(const Matrix& m) {
  std::vector<std::size_t> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < m.cols(); ++j)
      if (m(i, j) > m(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return out;
}

}  // namespace dmvc
