#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace peergrade {

/// One peer grade: `grader_id` graded the work of `examinee_id` on `assessment_id`.
struct GradeObservation {
  std::string examinee_id;
  std::string grader_id;
  std::string assessment_id;
  double grade = 0.0;

  bool operator==(const GradeObservation&) const = default;
};

/// Rating scale of a dataset. Continuous scales may be unbounded on either side.
struct Scale {
  enum class Kind { Continuous, Ordinal };

  Kind kind = Kind::Continuous;
  double min = -std::numeric_limits<double>::infinity();
  double max = std::numeric_limits<double>::infinity();
  int categories = 0;  // K for ordinal scales

  static Scale continuous(double lo, double hi) { return {Kind::Continuous, lo, hi, 0}; }
  static Scale unbounded() { return {}; }
  static Scale ordinal(int k) { return {Kind::Ordinal, 1.0, static_cast<double>(k), k}; }

  bool is_ordinal() const { return kind == Kind::Ordinal; }
  bool contains(double grade) const;

  bool operator==(const Scale&) const = default;
};

/// Observation with dense indices into the dataset's student and assessment sets.
struct Edge {
  int examinee = 0;
  int grader = 0;
  int assessment = 0;
  double grade = 0.0;
};

using WorkKey = std::pair<int, int>;  // (examinee, assessment)

class PeerGradingDataset {
 public:
  const std::vector<GradeObservation>& observations() const { return observations_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::string>& students() const { return students_; }
  const std::vector<std::string>& assessments() const { return assessments_; }
  const Scale& scale() const { return scale_; }

  int num_students() const { return static_cast<int>(students_.size()); }
  int num_assessments() const { return static_cast<int>(assessments_.size()); }
  int size() const { return static_cast<int>(edges_.size()); }

  std::optional<int> student_index(std::string_view id) const;
  std::optional<int> assessment_index(std::string_view id) const;

 private:
  friend PeerGradingDataset validate_dataset(std::vector<GradeObservation>, const Scale&,
                                             const std::vector<std::string>&,
                                             const std::vector<std::string>&);

  std::vector<GradeObservation> observations_;
  std::vector<Edge> edges_;
  std::vector<std::string> students_;
  std::vector<std::string> assessments_;
  Scale scale_;
};

/// Validates raw observations and assigns dense indices.
///
/// Students and assessments are the lexicographically sorted union of the ids found in
/// `raw` and the optional rosters; roster entries with no edges stay in the dataset.
/// Observation order is preserved.
PeerGradingDataset validate_dataset(std::vector<GradeObservation> raw, const Scale& scale,
                                    const std::vector<std::string>& student_roster = {},
                                    const std::vector<std::string>& assessment_roster = {});

/// S_it and its transpose H_g.
struct AssignmentIndex {
  std::map<WorkKey, std::set<int>> by_work;
  std::map<int, std::set<WorkKey>> by_grader;

  std::size_t edge_count() const;
};

AssignmentIndex build_index(const PeerGradingDataset& data);

enum class AggregationRule { Mean, Median };

/// Mean or median of the peer grades of each work. Works without grades are absent.
/// Even-count medians take the midpoint of the two central grades.
std::map<WorkKey, double> baseline_aggregate(const PeerGradingDataset& data,
                                             AggregationRule rule);

// CSV ingestion: header `examinee_id,grader_id,assessment_id,grade`. Lines starting with
// '#' are comments.
std::vector<GradeObservation> read_grades_csv(std::istream& in);
std::vector<GradeObservation> read_grades_csv(const std::string& path);
void write_grades_csv(std::ostream& out, const PeerGradingDataset& data);

Scale scale_from_json(const nlohmann::json& meta);
nlohmann::json scale_to_json(const Scale& scale);
Scale read_scale_json(const std::string& path);

/// 64-bit FNV-1a hash of the canonical CSV serialization.
std::uint64_t dataset_hash(const PeerGradingDataset& data);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

}  // namespace peergrade
