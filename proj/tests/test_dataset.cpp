#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "doctest.h"
#include "peergrade/dataset.hpp"
#include "peergrade/error.hpp"

using namespace peergrade;

namespace {

ErrorCode code_of(const std::vector<GradeObservation>& raw, const Scale& scale) {
  try {
    validate_dataset(raw, scale);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

std::vector<GradeObservation> random_edges(std::mt19937_64& rng, int max_students, int max_assess) {
  std::uniform_int_distribution<int> n_students(2, max_students);
  std::uniform_int_distribution<int> n_assess(1, max_assess);
  const int n = n_students(rng);
  const int t = n_assess(rng);
  std::uniform_int_distribution<int> student(0, n - 1);
  std::uniform_int_distribution<int> assessment(0, t - 1);
  std::uniform_int_distribution<int> count(1, 3 * n * t);
  std::normal_distribution<double> grade(5.0, 2.0);
  std::set<std::tuple<int, int, int>> seen;
  std::vector<GradeObservation> out;
  const int target = count(rng);
  for (int k = 0; k < target; ++k) {
    int i = student(rng), g = student(rng), a = assessment(rng);
    if (i == g || !seen.insert({i, g, a}).second) continue;
    out.push_back({"s" + std::to_string(i), "s" + std::to_string(g), "a" + std::to_string(a), grade(rng)});
  }
  if (out.empty()) out.push_back({"s0", "s1", "a0", 1.0});
  return out;
}

}  // namespace

TEST_CASE("validate_dataset") {
  const Scale seven = Scale::continuous(1, 7);
  CHECK(code_of({}, seven) == ErrorCode::EmptyData);
  CHECK(code_of({{"s1", "s1", "a1", 5}}, seven) == ErrorCode::SelfGrading);
  CHECK(code_of({{"s1", "s2", "a1", 5}, {"s1", "s2", "a1", 6}}, seven) == ErrorCode::DuplicateEdge);
  CHECK(code_of({{"s1", "s2", "a1", std::numeric_limits<double>::quiet_NaN()}}, seven) ==
        ErrorCode::NonFiniteGrade);
  CHECK(code_of({{"s1", "s2", "a1", std::numeric_limits<double>::infinity()}}, Scale::unbounded()) ==
        ErrorCode::NonFiniteGrade);
  CHECK(code_of({{"s1", "s2", "a1", 8}}, seven) == ErrorCode::OutOfScale);
  CHECK(code_of({{"s1", "s2", "a1", 2.5}}, Scale::ordinal(5)) == ErrorCode::OutOfScale);
  CHECK(code_of({{"s1", "s2", "a1", 0}}, Scale::ordinal(5)) == ErrorCode::OutOfScale);

  auto d = validate_dataset({{"s1", "s2", "a1", 5}, {"s1", "s3", "a1", 6}}, seven);
  CHECK(d.num_students() == 3);
  CHECK(d.num_assessments() == 1);
  CHECK(d.size() == 2);

  SUBCASE("ids are sorted and edges reference dense indices") {
    auto e = validate_dataset({{"b", "c", "t2", 1}, {"a", "b", "t1", 2}}, Scale::unbounded());
    CHECK(e.students() == std::vector<std::string>{"a", "b", "c"});
    CHECK(e.assessments() == std::vector<std::string>{"t1", "t2"});
    CHECK(e.edges()[0].examinee == 1);
    CHECK(e.edges()[0].grader == 2);
    CHECK(e.edges()[0].assessment == 1);
    CHECK(e.observations()[0].examinee_id == "b");
  }
  SUBCASE("rosters keep students without edges") {
    auto e = validate_dataset({{"s1", "s2", "a1", 5}}, seven, {"s1", "s2", "s9"}, {"a1", "a2"});
    CHECK(e.num_students() == 3);
    CHECK(e.num_assessments() == 2);
    CHECK(e.student_index("s9") == 2);
    CHECK_FALSE(e.student_index("nope").has_value());
  }
}

TEST_CASE("build_index") {
  auto d = validate_dataset({{"s1", "s2", "a1", 1}, {"s2", "s1", "a1", 2}}, Scale::unbounded());
  auto idx = build_index(d);
  CHECK(idx.by_grader[1] == std::set<WorkKey>{{0, 0}});
  CHECK(idx.by_grader[0] == std::set<WorkKey>{{1, 0}});

  auto single = build_index(validate_dataset({{"s1", "s2", "a1", 1}}, Scale::unbounded()));
  CHECK(single.by_work[{0, 0}] == std::set<int>{1});
}

TEST_CASE("build_index transpose property on random edge sets") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 1000; ++rep) {
    auto d = validate_dataset(random_edges(rng, 8, 3), Scale::unbounded());
    auto idx = build_index(d);
    std::size_t work_total = 0, grader_total = 0;
    for (const auto& [work, graders] : idx.by_work) {
      work_total += graders.size();
      for (int g : graders) REQUIRE(idx.by_grader.at(g).count(work) == 1);
    }
    for (const auto& [g, works] : idx.by_grader) {
      grader_total += works.size();
      for (const auto& w : works) REQUIRE(idx.by_work.at(w).count(g) == 1);
    }
    REQUIRE(work_total == static_cast<std::size_t>(d.size()));
    REQUIRE(grader_total == work_total);
    REQUIRE(idx.edge_count() == work_total);
  }
}

TEST_CASE("baseline_aggregate") {
  auto grades = [](std::vector<double> gs) {
    std::vector<GradeObservation> raw;
    for (std::size_t k = 0; k < gs.size(); ++k) raw.push_back({"s0", "t" + std::to_string(k), "a", gs[k]});
    return validate_dataset(raw, Scale::unbounded());
  };
  CHECK(baseline_aggregate(grades({4, 5, 6}), AggregationRule::Mean).at({0, 0}) == 5.0);
  CHECK(baseline_aggregate(grades({1, 7, 7}), AggregationRule::Median).at({0, 0}) == 7.0);
  CHECK(baseline_aggregate(grades({2, 4}), AggregationRule::Median).at({0, 0}) == 3.0);

  SUBCASE("works without grades are absent") {
    auto d = validate_dataset({{"s1", "s2", "a1", 5}}, Scale::unbounded(), {}, {"a1", "a2"});
    auto agg = baseline_aggregate(d, AggregationRule::Mean);
    CHECK(agg.size() == 1);
  }
  SUBCASE("mean agrees with a two-pass oracle") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 100; ++rep) {
      auto d = validate_dataset(random_edges(rng, 12, 4), Scale::unbounded());
      auto agg = baseline_aggregate(d, AggregationRule::Mean);
      std::map<WorkKey, std::vector<double>> groups;
      for (const auto& e : d.edges()) groups[{e.examinee, e.assessment}].push_back(e.grade);
      for (const auto& [work, gs] : groups) {
        double sum = 0.0;
        for (double g : gs) sum += g;
        double mean = sum / gs.size();
        double correction = 0.0;
        for (double g : gs) correction += g - mean;
        mean += correction / gs.size();
        CHECK(std::abs(agg.at(work) - mean) <= 1e-12 * std::max(1.0, std::abs(mean)));
      }
    }
  }
}

TEST_CASE("CSV round trip") {
  std::mt19937_64 rng(19);
  for (int rep = 0; rep < 50; ++rep) {
    auto d = validate_dataset(random_edges(rng, 10, 3), Scale::unbounded());
    std::stringstream ss;
    write_grades_csv(ss, d);
    auto back = validate_dataset(read_grades_csv(ss), d.scale());
    std::set<std::tuple<std::string, std::string, std::string, double>> a, b;
    for (const auto& o : d.observations()) a.insert({o.examinee_id, o.grader_id, o.assessment_id, o.grade});
    for (const auto& o : back.observations()) b.insert({o.examinee_id, o.grader_id, o.assessment_id, o.grade});
    REQUIRE(a == b);
    REQUIRE(dataset_hash(d) == dataset_hash(back));
  }
}

TEST_CASE("CSV parsing errors") {
  auto code = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_grades_csv(in);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  CHECK(code("examinee,grader,assessment,grade\ns1,s2,a1,4\n") == ErrorCode::DataSchema);
  CHECK(code("examinee_id,grader_id,assessment_id,grade\ns1,s2,a1\n") == ErrorCode::DataSchema);
  CHECK(code("examinee_id,grader_id,assessment_id,grade\ns1,s2,a1,four\n") == ErrorCode::DataSchema);
  CHECK(code("") == ErrorCode::DataSchema);

  std::istringstream ok("# comment\nexaminee_id,grader_id,assessment_id,grade\ns1,s2,a1,4.5\n");
  auto rows = read_grades_csv(ok);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].grade == 4.5);
}

TEST_CASE("scale metadata") {
  CHECK(scale_from_json(nlohmann::json::parse(R"({"scale":{"type":"continuous","min":1,"max":7}})")) ==
        Scale::continuous(1, 7));
  CHECK(scale_from_json(nlohmann::json::parse(R"({"type":"ordinal","K":7})")) == Scale::ordinal(7));
  CHECK(scale_from_json(nlohmann::json::parse(R"({"scale":{"type":"continuous"}})")) == Scale::unbounded());
  CHECK_THROWS_AS(scale_from_json(nlohmann::json::parse(R"({"type":"interval"})")), Error);
  CHECK_THROWS_AS(scale_from_json(nlohmann::json::parse(R"({"type":"ordinal","K":1})")), Error);
  for (const Scale& s : {Scale::continuous(1, 7), Scale::ordinal(4), Scale::unbounded()}) {
    CHECK(scale_from_json(scale_to_json(s)) == s);
  }
}

TEST_CASE("format_double round trips") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1e3);
  for (int rep = 0; rep < 1000; ++rep) {
    double x = normal(rng);
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_double(5.0) == "5");
}
