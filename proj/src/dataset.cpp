#include "peergrade/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "peergrade/error.hpp"

namespace peergrade {

namespace {

std::string describe(const GradeObservation& obs) {
  std::ostringstream os;
  os << "(" << obs.examinee_id << ", " << obs.grader_id << ", " << obs.assessment_id << ")";
  return os.str();
}

std::vector<std::string> sorted_union(std::vector<std::string> ids,
                                      const std::vector<std::string>& extra) {
  ids.insert(ids.end(), extra.begin(), extra.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

int index_of(const std::vector<std::string>& sorted, std::string_view id) {
  auto it = std::lower_bound(sorted.begin(), sorted.end(), id);
  return static_cast<int>(it - sorted.begin());
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

}  // namespace

bool Scale::contains(double grade) const {
  if (kind == Kind::Ordinal) {
    return grade == std::round(grade) && grade >= 1.0 && grade <= categories;
  }
  return grade >= min && grade <= max;
}

std::optional<int> PeerGradingDataset::student_index(std::string_view id) const {
  auto it = std::lower_bound(students_.begin(), students_.end(), id);
  if (it == students_.end() || *it != id) return std::nullopt;
  return static_cast<int>(it - students_.begin());
}

std::optional<int> PeerGradingDataset::assessment_index(std::string_view id) const {
  auto it = std::lower_bound(assessments_.begin(), assessments_.end(), id);
  if (it == assessments_.end() || *it != id) return std::nullopt;
  return static_cast<int>(it - assessments_.begin());
}

PeerGradingDataset validate_dataset(std::vector<GradeObservation> raw, const Scale& scale,
                                    const std::vector<std::string>& student_roster,
                                    const std::vector<std::string>& assessment_roster) {
  if (raw.empty()) throw Error(ErrorCode::EmptyData, "dataset has no observations");
  if (scale.is_ordinal() && scale.categories < 2) {
    throw Error(ErrorCode::DataSchema, "ordinal scale needs K >= 2");
  }

  std::vector<std::string> students;
  std::vector<std::string> assessments;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& obs : raw) {
    if (obs.examinee_id == obs.grader_id) {
      throw Error(ErrorCode::SelfGrading, "self-grading edge " + describe(obs));
    }
    if (!std::isfinite(obs.grade)) {
      throw Error(ErrorCode::NonFiniteGrade, "non-finite grade for " + describe(obs));
    }
    if (!scale.contains(obs.grade)) {
      throw Error(ErrorCode::OutOfScale,
                  "grade " + format_double(obs.grade) + " outside scale for " + describe(obs));
    }
    if (!seen.emplace(obs.examinee_id, obs.grader_id, obs.assessment_id).second) {
      throw Error(ErrorCode::DuplicateEdge, "duplicate edge " + describe(obs));
    }
    students.push_back(obs.examinee_id);
    students.push_back(obs.grader_id);
    assessments.push_back(obs.assessment_id);
  }

  PeerGradingDataset d;
  d.students_ = sorted_union(std::move(students), student_roster);
  d.assessments_ = sorted_union(std::move(assessments), assessment_roster);
  d.scale_ = scale;
  d.edges_.reserve(raw.size());
  for (const auto& obs : raw) {
    d.edges_.push_back({index_of(d.students_, obs.examinee_id), index_of(d.students_, obs.grader_id),
                        index_of(d.assessments_, obs.assessment_id), obs.grade});
  }
  d.observations_ = std::move(raw);
  return d;
}

std::size_t AssignmentIndex::edge_count() const {
  std::size_t n = 0;
  for (const auto& [work, graders] : by_work) n += graders.size();
  return n;
}

AssignmentIndex build_index(const PeerGradingDataset& data) {
  AssignmentIndex index;
  for (const auto& e : data.edges()) {
    index.by_work[{e.examinee, e.assessment}].insert(e.grader);
    index.by_grader[e.grader].insert({e.examinee, e.assessment});
  }
  return index;
}

std::map<WorkKey, double> baseline_aggregate(const PeerGradingDataset& data,
                                             AggregationRule rule) {
  std::map<WorkKey, std::vector<double>> grades;
  for (const auto& e : data.edges()) grades[{e.examinee, e.assessment}].push_back(e.grade);

  std::map<WorkKey, double> out;
  for (auto& [work, g] : grades) {
    if (rule == AggregationRule::Mean) {
      double sum = 0.0;
      for (double v : g) sum += v;
      out[work] = sum / static_cast<double>(g.size());
    } else {
      std::sort(g.begin(), g.end());
      std::size_t n = g.size();
      out[work] = n % 2 == 1 ? g[n / 2] : 0.5 * (g[n / 2 - 1] + g[n / 2]);
    }
  }
  return out;
}

std::vector<GradeObservation> read_grades_csv(std::istream& in) {
  std::string line;
  bool have_header = false;
  std::vector<GradeObservation> rows;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto fields = split_commas(view);
    if (!have_header) {
      if (fields.size() != 4 || fields[0] != "examinee_id" || fields[1] != "grader_id" ||
          fields[2] != "assessment_id" || fields[3] != "grade") {
        throw Error(ErrorCode::DataSchema,
                    "expected header examinee_id,grader_id,assessment_id,grade");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != 4) {
      throw Error(ErrorCode::DataSchema, "line " + std::to_string(line_no) + ": expected 4 fields");
    }
    double grade = 0.0;
    std::string text(fields[3]);
    char* end = nullptr;
    grade = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size()) {
      throw Error(ErrorCode::DataSchema,
                  "line " + std::to_string(line_no) + ": grade is not a decimal number");
    }
    rows.push_back({std::string(fields[0]), std::string(fields[1]), std::string(fields[2]), grade});
  }
  if (!have_header) throw Error(ErrorCode::DataSchema, "missing CSV header");
  return rows;
}

std::vector<GradeObservation> read_grades_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return read_grades_csv(in);
}

void write_grades_csv(std::ostream& out, const PeerGradingDataset& data) {
  out << "examinee_id,grader_id,assessment_id,grade\n";
  for (const auto& obs : data.observations()) {
    out << obs.examinee_id << ',' << obs.grader_id << ',' << obs.assessment_id << ','
        << format_double(obs.grade) << '\n';
  }
}

Scale scale_from_json(const nlohmann::json& meta) {
  const nlohmann::json& s = meta.contains("scale") ? meta.at("scale") : meta;
  try {
    std::string type = s.at("type").get<std::string>();
    if (type == "ordinal") {
      int k = s.at("K").get<int>();
      if (k < 2) throw Error(ErrorCode::DataSchema, "ordinal scale needs K >= 2");
      return Scale::ordinal(k);
    }
    if (type == "continuous") {
      Scale scale = Scale::unbounded();
      if (s.contains("min")) scale.min = s.at("min").get<double>();
      if (s.contains("max")) scale.max = s.at("max").get<double>();
      if (!(scale.min < scale.max)) throw Error(ErrorCode::DataSchema, "scale min must be < max");
      return scale;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::DataSchema, std::string("bad scale metadata: ") + e.what());
  }
  throw Error(ErrorCode::DataSchema, "scale type must be 'continuous' or 'ordinal'");
}

nlohmann::json scale_to_json(const Scale& scale) {
  nlohmann::json s;
  if (scale.is_ordinal()) {
    s = {{"type", "ordinal"}, {"K", scale.categories}};
  } else {
    s = {{"type", "continuous"}};
    if (std::isfinite(scale.min)) s["min"] = scale.min;
    if (std::isfinite(scale.max)) s["max"] = scale.max;
  }
  return {{"scale", s}};
}

Scale read_scale_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::DataSchema, path + ": " + e.what());
  }
  return scale_from_json(meta);
}

std::uint64_t dataset_hash(const PeerGradingDataset& data) {
  std::ostringstream os;
  write_grades_csv(os, data);
  os << nlohmann::json(scale_to_json(data.scale())).dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace peergrade
