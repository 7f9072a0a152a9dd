#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace radimpute {

// RSSI domain (integer dBm). Observable readings live in [kRssiMin, kRssiMax];
// kMnarFill marks cells that are unobservable by construction and is only
// written when a mask is amended.
inline constexpr int kRssiMin = -99;
inline constexpr int kRssiMax = 0;
inline constexpr int kMnarFill = -100;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline bool operator==(const Point2& a, const Point2& b) { return a.x == b.x && a.y == b.y; }

enum class RecordKind { kRp, kRssi };

// One row of a walking-survey record table. RP rows carry a surveyed location,
// RSSI rows carry a sparse ap->dBm map. `path` groups rows of one survey walk.
struct SurveyRecord {
  double time = 0.0;
  RecordKind kind = RecordKind::kRssi;
  std::optional<Point2> rp;
  std::map<int, int> rssi;  // ap index -> dBm; ordered so iteration is reproducible
  int path = 0;
};

using SurveyTable = std::vector<SurveyRecord>;

struct RadioMapRecord {
  std::vector<std::optional<int>> fingerprint;  // length = RadioMap::num_aps
  std::optional<Point2> rp;
  double time = 0.0;
  int path_id = 0;
};

struct RadioMap {
  std::size_t num_aps = 0;
  std::vector<RadioMapRecord> records;
};

// Cell states of an N x D radio map: -1 unobservable, 0 recoverable missing,
// 1 observed. An amended matrix (after filling unobservable cells) holds only
// {0, 1}.
class MaskMatrix {
 public:
  MaskMatrix() = default;
  MaskMatrix(std::size_t rows, std::size_t cols, std::int8_t fill = 1)
      : rows_(rows), cols_(cols), cells_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::int8_t at(std::size_t i, std::size_t j) const { return cells_[i * cols_ + j]; }
  void set(std::size_t i, std::size_t j, std::int8_t v) { cells_[i * cols_ + j] = v; }

  const std::vector<std::int8_t>& cells() const { return cells_; }

  // Copy with every -1 turned into 1; the result is a valid amended matrix.
  MaskMatrix amended() const {
    MaskMatrix out = *this;
    for (auto& c : out.cells_) {
      if (c == -1) c = 1;
    }
    return out;
  }

  bool operator==(const MaskMatrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::int8_t> cells_;
};

// Binary AP observability vector paired with a (possibly interpolated)
// location; the unit of clustering in the differentiator.
struct ApProfile {
  std::vector<std::uint8_t> binary;
  Point2 location;
};

struct Violation {
  std::size_t record = 0;
  std::string field;
  std::string rule;
};

// Diagnostic check of the radio-map invariants: constant fingerprint width,
// RSSI range, strictly increasing time per path. Returns an empty list iff
// the map is well formed.
std::vector<Violation> validate_radio_map(const RadioMap& map);

// {0,1} mask marking exactly the null cells of `map` as 0.
MaskMatrix observation_mask(const RadioMap& map);

}  // namespace radimpute
