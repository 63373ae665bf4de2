#pragma once

// Hand-built fixtures shared by the unit tests and the acceptance binary.

#include <array>
#include <string>
#include <vector>

#include "fse/metrics.hpp"
#include "fse/recall.hpp"

namespace fse::testing {

// Query "q" at difficulty 3 plus twelve candidates c01..c12.
//   id   diff  stage
//   c01  1     7.1      c07  2     8.1
//   c02  2     7.2      c08  4     7.1
//   c03  3     8.1      c09  3     8.2
//   c04  4     8.2      c10  1     9.1
//   c05  5     9.1      c11  5     7.2
//   c06  3     9.2      c12  3     8.1
struct FilterFixture {
  Corpus corpus;
  CandidateList candidates;  // c01..c12 in ranking order
  Exercise query;

  static constexpr std::array<int, 12> kDifficulty{1, 2, 3, 4, 5, 3, 2, 4, 3, 1, 5, 3};
  static constexpr std::array<LearningStage, 12> kStage{
      LearningStage{7, 1}, {7, 2}, {8, 1}, {8, 2}, {9, 1}, {9, 2}, {8, 1}, {7, 1}, {8, 2}, {9, 1}, {7, 2}, {8, 1}};

  FilterFixture() {
    MetadataSchema schema;
    schema.n_concepts = 1;
    std::vector<Exercise> ex;
    auto make = [&](const std::string& id, int difficulty, LearningStage stage) {
      Exercise e;
      e.id = id;
      e.stem = "exercise " + id;
      e.answer = "1";
      e.analysis = "analysis " + id;
      e.metadata = {"calc", difficulty, {0}};
      e.learning_stage = stage;
      return e;
    };
    query = make("q", 3, {8, 1});
    ex.push_back(query);
    for (std::size_t k = 0; k < 12; ++k) {
      const std::string id = (k + 1 < 10 ? "c0" : "c") + std::to_string(k + 1);
      ex.push_back(make(id, kDifficulty[k], kStage[k]));
    }
    corpus = Corpus(schema, ex);
    for (std::size_t k = 0; k < 12; ++k)
      candidates.push_back({k + 1, ex[k + 1].id, 1.0 - 0.05 * static_cast<double>(k), Source::both});
  }

  static std::vector<std::string> ids(const CandidateList& l) {
    std::vector<std::string> out;
    for (const auto& c : l) out.push_back(c.id);
    return out;
  }
};

// Ten seeds with hand-computed metrics. s01 and s02 are the worked Recall
// example: T = 4 with 3 recalled and T = 2 with 1 recalled give 0.625 at K = 5.
//   seed  T  top-5 hits  all hits  P@1 P@3 P@5  returned
//   s01   4  3           4         1   2   3    6
//   s02   2  1           2         0   1   1    6
//   s03   1  1           1         1   1   1    5
//   s04   3  0           1         0   0   0    6
//   s05   5  5           5         1   3   5    5
//   s06   2  2           2         1   2   2    3   short list
//   s07   6  3           5         1   2   3    7
//   s08   2  2           2         0   1   2    5
//   s09   1  0           0         0   0   0    0   short list
//   s10   3  3           3         1   3   3    5
// R@5 = (3/4 + 1/2 + 1 + 0 + 1 + 1 + 1/2 + 1 + 0 + 1) / 10 = 0.675
// R@100 = (1 + 1 + 1 + 1/3 + 1 + 1 + 5/6 + 1 + 0 + 1) / 10 = 49/60
// P@1 = 6/10, P@3 = 15/30, P@5 = 20/50
struct MetricFixture {
  std::vector<JudgedList> lists;

  static constexpr double kRecall5 = 0.675;
  static constexpr double kRecall100 = 49.0 / 60.0;
  static constexpr double kP1 = 0.6;
  static constexpr double kP3 = 0.5;
  static constexpr double kP5 = 0.4;

  MetricFixture() {
    auto add = [&](std::string id, std::vector<std::string> retrieved, std::vector<std::string> relevant) {
      lists.push_back({std::move(id), std::move(retrieved), {relevant.begin(), relevant.end()}});
    };
    add("s01", {"a1", "a2", "n1", "a3", "n2", "a4"}, {"a1", "a2", "a3", "a4"});
    add("s02", {"n1", "n2", "b1", "n3", "n4", "b2"}, {"b1", "b2"});
    add("s03", {"c1", "n1", "n2", "n3", "n4"}, {"c1"});
    add("s04", {"n1", "n2", "n3", "n4", "n5", "d1"}, {"d1", "d2", "d3"});
    add("s05", {"e1", "e2", "e3", "e4", "e5"}, {"e1", "e2", "e3", "e4", "e5"});
    add("s06", {"f1", "f2", "n1"}, {"f1", "f2"});
    add("s07", {"g1", "n1", "g2", "n2", "g3", "g4", "g5"}, {"g1", "g2", "g3", "g4", "g5", "g6"});
    add("s08", {"n1", "h1", "n2", "n3", "h2"}, {"h1", "h2"});
    add("s09", {}, {"i1"});
    add("s10", {"j3", "j2", "j1", "n1", "n2"}, {"j1", "j2", "j3"});
  }

  // The two seeds of the worked example.
  std::vector<JudgedList> worked() const { return {lists[0], lists[1]}; }
};

}  // namespace fse::testing
