#include <sparseoc/multi_index.hpp>

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

using namespace sparseoc;

namespace {

MultiIndex e(Dim j, Level l = 1) { return MultiIndex::unit(j, l); }

// Brute-force reduced forward neighbors: enumerate every index in a box and test the definition.
std::vector<MultiIndex> brute_force_neighbors(const std::vector<MultiIndex>& set, Dim dim_cap) {
  std::set<MultiIndex> members(set.begin(), set.end());
  Dim j_lambda = 0;
  Level max_level = 0;
  for (const auto& nu : set) {
    j_lambda = std::max(j_lambda, nu.max_dim());
    max_level = std::max(max_level, nu.max_level());
  }
  const Dim limit = std::min<Dim>(j_lambda + 1, dim_cap);
  std::vector<MultiIndex> out;
  std::vector<Level> cursor(limit, 0);
  while (true) {
    MultiIndex mu;
    for (Dim j = 1; j <= limit; ++j) mu.set(j, cursor[j - 1]);
    bool ok = !members.contains(mu);
    for (const auto& [j, l] : mu.entries()) ok = ok && members.contains(mu.decremented(j));
    if (ok) out.push_back(mu);
    Dim k = 0;
    while (k < limit && ++cursor[k] > max_level + 1) cursor[k++] = 0;
    if (k == limit) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

IndexSet random_downward_closed(std::mt19937_64& rng, std::size_t steps, Dim cap) {
  IndexSet set;
  for (std::size_t s = 0; s < steps; ++s) {
    auto front = reduced_forward_neighbors(set, cap);
    std::uniform_int_distribution<std::size_t> pick(0, front.size() - 1);
    set.insert(front[pick(rng)]);
  }
  return set;
}

}  // namespace

TEST_CASE("multi-index storage is sparse and canonical", "[multiindex]") {
  MultiIndex nu{{3, 2}, {1, 1}, {7, 0}};
  REQUIRE(nu.support_size() == 2);
  REQUIRE(nu.level(1) == 1);
  REQUIRE(nu.level(3) == 2);
  REQUIRE(nu.level(7) == 0);
  REQUIRE(nu.total() == 3);
  REQUIRE(nu.max_level() == 2);
  REQUIRE(nu.max_dim() == 3);
  nu.set(3, 0);
  REQUIRE(nu == e(1));
  REQUIRE_THROWS_AS(MultiIndex::unit(0), ValidationError);
  REQUIRE_THROWS_AS(MultiIndex{}.decremented(1), ValidationError);
}

TEST_CASE("leq is the componentwise partial order", "[multiindex]") {
  CHECK(leq(MultiIndex{}, e(1)));
  CHECK_FALSE(leq(e(1), e(2)));
  CHECK_FALSE(leq(e(2), e(1)));
  CHECK(leq(MultiIndex{{1, 1}, {3, 1}}, MultiIndex{{1, 2}, {3, 1}}));
  CHECK_FALSE(leq(MultiIndex{{1, 2}, {3, 1}}, MultiIndex{{1, 1}, {3, 1}}));
}

TEST_CASE("downward closedness", "[multiindex]") {
  CHECK(is_downward_closed({MultiIndex{}}));
  CHECK_FALSE(is_downward_closed({MultiIndex{}, e(1), MultiIndex{{1, 1}, {2, 1}}}));
  CHECK(is_downward_closed({MultiIndex{}, e(1), e(2), MultiIndex{{1, 1}, {2, 1}}}));
  REQUIRE_THROWS_AS(IndexSet({MultiIndex{}, e(1), MultiIndex{{1, 1}, {2, 1}}}), ValidationError);

  IndexSet set;
  REQUIRE(set.size() == 1);
  REQUIRE(set.contains(MultiIndex{}));
  REQUIRE_THROWS_AS(set.insert(e(2, 2)), ValidationError);
  REQUIRE_THROWS_AS(set.insert(MultiIndex{}), ValidationError);
}

TEST_CASE("reduced forward neighbors", "[multiindex]") {
  IndexSet set;
  CHECK(reduced_forward_neighbors(set, 5) == std::vector<MultiIndex>{e(1)});
  set.insert(e(1));
  CHECK(reduced_forward_neighbors(set, 5) == std::vector<MultiIndex>{e(1, 2), e(2)});
  CHECK(reduced_forward_neighbors(set, 1) == std::vector<MultiIndex>{e(1, 2)});
  REQUIRE_THROWS_AS(reduced_forward_neighbors(std::vector<MultiIndex>{MultiIndex{}, MultiIndex{{1, 1}, {2, 1}}}, 3), ValidationError);
}

TEST_CASE("reduced forward neighbors: properties on random sets", "[multiindex][property]") {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 40; ++trial) {
    const Dim cap = 1 + static_cast<Dim>(trial % 4);
    IndexSet set;
    Dim last_j = set.j_max();
    for (int step = 0; step < 15; ++step) {
      const auto front = reduced_forward_neighbors(set, cap);
      REQUIRE(front == brute_force_neighbors(set.members(), cap));
      for (const auto& nu : front) {
        REQUIRE_FALSE(set.contains(nu));
        auto extended = set.members();
        extended.push_back(nu);
        REQUIRE(is_downward_closed(extended));
        REQUIRE(nu.max_dim() <= cap);
      }
      std::uniform_int_distribution<std::size_t> pick(0, front.size() - 1);
      set.insert(front[pick(rng)]);
      REQUIRE(set.j_max() >= last_j);
      last_j = set.j_max();
    }
  }
}

TEST_CASE("rectangle enumerates the box below an index", "[multiindex]") {
  CHECK(rectangle(MultiIndex{}) == std::vector<MultiIndex>{MultiIndex{}});
  CHECK(rectangle(e(1, 2)) == std::vector<MultiIndex>{MultiIndex{}, e(1), e(1, 2)});
  const auto r = rectangle(MultiIndex{{1, 1}, {2, 1}});
  REQUIRE(r.size() == 4);
  CHECK(std::set<MultiIndex>(r.begin(), r.end()) ==
        std::set<MultiIndex>{MultiIndex{}, e(1), e(2), MultiIndex{{1, 1}, {2, 1}}});
  REQUIRE_THROWS_AS(rectangle(MultiIndex{{1, 40}, {2, 40}, {3, 40}, {4, 40}}, 1000), ValidationError);

  std::mt19937_64 rng(7);
  std::uniform_int_distribution<Level> lvl(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    MultiIndex nu;
    std::size_t expected = 1;
    for (Dim j = 1; j <= 4; ++j) {
      const Level l = lvl(rng);
      nu.set(j * 3, l);
      expected *= l + 1;
    }
    const auto box = rectangle(nu);
    REQUIRE(box.size() == expected);
    for (const auto& mu : box) REQUIRE(leq(mu, nu));
    REQUIRE(is_downward_closed(box));
  }
}

TEST_CASE("JSON serialization", "[multiindex][json]") {
  const MultiIndex nu{{1, 2}, {12, 1}};
  const auto j = to_json_value(nu);
  CHECK(j.dump() == R"({"1":2,"12":1})");
  CHECK(multi_index_from_json(j) == nu);
  CHECK(to_json_value(MultiIndex{}).dump() == "{}");

  std::mt19937_64 rng(3);
  const auto set = random_downward_closed(rng, 30, 4);
  const auto round = index_set_from_json(to_json_value(set));
  CHECK(round.members() == set.members());
  REQUIRE_THROWS_AS(multi_index_from_json(nlohmann::json::parse(R"({"0":1})")), ValidationError);
}
