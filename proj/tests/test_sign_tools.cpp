#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <stdexcept>
#include <string>
#include <vector>

#include "cfa/model.hpp"
#include "cfa/sign_tools.hpp"

using namespace cfa;

TEST_SUITE("sign_tools.dcr") {

TEST_CASE("unanimous sign agreement scores 100 per loading") {
  std::vector<std::vector<double>> est = {
      {0.72, 0.65, 0.81}, {0.70, 0.55, 0.66}, {0.68, 0.71, 0.74}};
  auto records = dcr(est, {0.7, 0.7, 0.7});
  REQUIRE(records.size() == 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(records[j].loading_index == j);
    CHECK(records[j].truth == 0.7);
    CHECK(records[j].matches == 3);
    CHECK(records[j].total == 3);
    CHECK(records[j].dcr == 100.0);
    CHECK_FALSE(records[j].ties);
  }
}

TEST_CASE("partial agreement counts exactly") {
  // Loading 0 (truth +): +, -, +, -  -> 2/4. Loading 1 (truth -): -, -, +, -  -> 3/4.
  std::vector<std::vector<double>> est = {
      {0.5, -0.5}, {-0.5, -0.5}, {0.5, 0.5}, {-0.5, -0.5}};
  auto records = dcr(est, {0.7, -0.7});
  REQUIRE(records.size() == 2);
  CHECK(records[0].matches == 2);
  CHECK(records[0].dcr == 50.0);
  CHECK(records[1].matches == 3);
  CHECK(records[1].dcr == 75.0);
}

TEST_CASE("magnitudes are irrelevant, only signs count") {
  std::vector<std::vector<double>> est = {{1e-12, -900.0}};
  auto records = dcr(est, {5.0, -0.001});
  CHECK(records[0].dcr == 100.0);
  CHECK(records[1].dcr == 100.0);
}

TEST_CASE("a zero estimate counts as positive and raises the tie flag") {
  std::vector<std::vector<double>> est = {{0.0}, {0.5}, {-0.5}};
  auto pos = dcr(est, {0.7});
  CHECK(pos[0].matches == 2);  // zero sides with positive truth
  CHECK(pos[0].ties);

  auto neg = dcr(est, {-0.7});
  CHECK(neg[0].matches == 1);  // zero counts against negative truth
  CHECK(neg[0].ties);
}

TEST_CASE("fixed loadings are skipped via the mask") {
  std::vector<std::vector<double>> est = {{1.0, -1.0, 0.5}, {1.0, 1.0, -0.5}};
  auto records = dcr(est, {0.7, 0.7, 0.7}, {false, true, true});
  REQUIRE(records.size() == 2);
  CHECK(records[0].loading_index == 1);
  CHECK(records[1].loading_index == 2);
  CHECK(records[0].matches == 1);
  CHECK(records[1].matches == 1);
}

TEST_CASE("a masked-out loading may carry a zero truth") {
  std::vector<std::vector<double>> est = {{1.0, 0.5}};
  auto records = dcr(est, {0.0, 0.7}, {false, true});
  REQUIRE(records.size() == 1);
  CHECK(records[0].loading_index == 1);
  CHECK(records[0].dcr == 100.0);
}

TEST_CASE("no replicates gives zero totals") {
  auto records = dcr({}, {0.7, -0.7});
  REQUIRE(records.size() == 2);
  CHECK(records[0].total == 0);
  CHECK(records[0].dcr == 0.0);
}

TEST_CASE("loading order is respected, not sorted") {
  std::vector<std::vector<double>> est = {{0.5, -0.5}, {0.5, 0.5}};
  auto ab = dcr(est, {0.7, -0.7});
  std::vector<std::vector<double>> swapped = {{-0.5, 0.5}, {0.5, 0.5}};
  auto ba = dcr(swapped, {-0.7, 0.7});
  CHECK(ab[0].dcr == ba[1].dcr);
  CHECK(ab[1].dcr == ba[0].dcr);
}

TEST_CASE("input validation") {
  std::vector<std::vector<double>> est = {{0.5, 0.5}};
  CHECK_THROWS_WITH_AS(dcr(est, {0.7, 0.0}), doctest::Contains("is zero"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(dcr(est, {0.7}), doctest::Contains("length"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(dcr(est, {0.7, 0.7}, {true}), doctest::Contains("mask"),
                       std::invalid_argument);
}

}  // TEST_SUITE

TEST_SUITE("sign_tools.classify") {

TEST_CASE("all signs agree") {
  CHECK(classify_flip({0.7, 0.6, 0.8}, {0.7, 0.7, 0.7}) == FlipClass::Match);
  CHECK(classify_flip({-0.7, 0.6, -0.8}, {-0.7, 0.7, -0.7}) == FlipClass::Match);
}

TEST_CASE("all signs opposite") {
  CHECK(classify_flip({-0.7, -0.6, -0.8}, {0.7, 0.7, 0.7}) == FlipClass::GlobalFlip);
  CHECK(classify_flip({0.7, -0.6, 0.8}, {-0.7, 0.6, -0.7}) == FlipClass::GlobalFlip);
}

TEST_CASE("anything else is mixed") {
  CHECK(classify_flip({0.7, -0.6, 0.8}, {0.7, 0.7, 0.7}) == FlipClass::Mixed);
  CHECK(classify_flip({-0.7, 0.6, 0.8}, {0.7, 0.7, 0.7}) == FlipClass::Mixed);
}

TEST_CASE("zero estimates side with positive") {
  CHECK(classify_flip({0.0, 0.5}, {0.7, 0.7}) == FlipClass::Match);
  CHECK(classify_flip({0.0, -0.5}, {0.7, 0.7}) == FlipClass::Mixed);
  CHECK(classify_flip({0.0, 0.0}, {-0.7, -0.7}) == FlipClass::GlobalFlip);
}

TEST_CASE("masked-out positions cannot break a match") {
  CHECK(classify_flip({0.7, -0.6, 0.8}, {0.7, 0.7, 0.7}, {true, false, true}) ==
        FlipClass::Match);
  CHECK(classify_flip({-0.7, 0.6, -0.8}, {0.7, 0.7, 0.7}, {true, false, true}) ==
        FlipClass::GlobalFlip);
}

TEST_CASE("single loading never classifies as mixed") {
  CHECK(classify_flip({0.5}, {0.7}) == FlipClass::Match);
  CHECK(classify_flip({-0.5}, {0.7}) == FlipClass::GlobalFlip);
}

TEST_CASE("length mismatch is rejected") {
  CHECK_THROWS_AS(classify_flip({0.5}, {0.7, 0.7}), std::invalid_argument);
  CHECK_THROWS_AS(classify_flip({0.5, 0.5}, {0.7, 0.7}, {true}), std::invalid_argument);
}

TEST_CASE("class names") {
  CHECK(std::string(flip_class_name(FlipClass::Match)) == "match");
  CHECK(std::string(flip_class_name(FlipClass::GlobalFlip)) == "global_flip");
  CHECK(std::string(flip_class_name(FlipClass::Mixed)) == "mixed");
}

}  // TEST_SUITE

TEST_SUITE("sign_tools.anchor") {

TEST_CASE("designates the anchor and preserves everything else") {
  ModelSpec spec = parse_model_text(
      "F =~ x1 + x2 + x3\n"
      "start F.x2 = -0.4\n"
      "bound F.x3 lower 0\n"
      "ordinal x1 2\n");
  ModelSpec out = anchor_reorder(spec, {"F", "x1"});
  REQUIRE(out.fixed_loadings.count({"F", "x1"}) == 1);
  CHECK(out.fixed_loadings.at({"F", "x1"}) == 1.0);
  CHECK(out.loading_starts.at({"F", "x2"}) == -0.4);
  CHECK(out.loading_bounds.count({"F", "x3"}) == 1);
  CHECK(out.indicators[0].kind == VarKind::Ordinal);
  // Input is untouched.
  CHECK(spec.fixed_loadings.empty());
}

TEST_CASE("drops a start directive on the anchor itself") {
  ModelSpec spec = parse_model_text(
      "F =~ x1 + x2\n"
      "start F.x1 = -1\n");
  ModelSpec out = anchor_reorder(spec, {"F", "x1"});
  CHECK(out.loading_starts.count({"F", "x1"}) == 0);
  CHECK(out.fixed_loadings.at({"F", "x1"}) == 1.0);
}

TEST_CASE("frees a fixed factor variance on the anchored factor") {
  ModelSpec spec = parse_model_text(
      "F =~ x1 + x2 + x3\n"
      "fixvar F = 1\n");
  // An anchor strategy on the untouched spec would double-identify.
  CHECK_THROWS_WITH_AS(build_parameter_layout(spec, IdentificationStrategy::anchor("F", "x2"),
                                              StartPolicy::engine_default()),
                       doctest::Contains("both identification strategies"),
                       std::invalid_argument);
  ModelSpec out = anchor_reorder(spec, {"F", "x2"});
  CHECK(out.fixed_factor_variances.count("F") == 0);
  // The rewritten spec identifies cleanly through the anchor.
  ParameterLayout layout = build_parameter_layout(out, IdentificationStrategy::anchor("F", "x2"),
                                                  StartPolicy::engine_default());
  bool variance_free = false;
  for (const auto& e : layout.entries)
    if (e.role == ParamRole::FactorVariance && e.is_free()) variance_free = true;
  CHECK(variance_free);
}

TEST_CASE("only the anchored factor loses its fixed variance") {
  ModelSpec spec = parse_model_text(
      "F =~ x1 + x2\n"
      "G =~ y1 + y2\n"
      "fixvar F = 1\n"
      "fixvar G = 1\n");
  ModelSpec out = anchor_reorder(spec, {"F", "x1"});
  CHECK(out.fixed_factor_variances.count("F") == 0);
  CHECK(out.fixed_factor_variances.at("G") == 1.0);
}

TEST_CASE("idempotent when the anchor is already fixed at 1") {
  ModelSpec spec = parse_model_text(
      "F =~ x1 + x2\n"
      "fix F.x1 = 1\n");
  ModelSpec out = anchor_reorder(spec, {"F", "x1"});
  CHECK(out.fixed_loadings.at({"F", "x1"}) == 1.0);
  ModelSpec again = anchor_reorder(out, {"F", "x1"});
  CHECK(again.fixed_loadings.at({"F", "x1"}) == 1.0);
  CHECK(again.fixed_loadings.size() == 1);
}

TEST_CASE("unknown anchor is rejected") {
  ModelSpec spec = parse_model_text("F =~ x1 + x2\n");
  CHECK_THROWS_WITH_AS(anchor_reorder(spec, {"F", "zz"}), doctest::Contains("unknown anchor"),
                       std::invalid_argument);
  CHECK_THROWS_AS(anchor_reorder(spec, {"H", "x1"}), std::invalid_argument);
}

TEST_CASE("anchor fixed to another value is rejected") {
  ModelSpec spec = parse_model_text(
      "F =~ x1 + x2\n"
      "fix F.x1 = 0.5\n");
  CHECK_THROWS_WITH_AS(anchor_reorder(spec, {"F", "x1"}),
                       doctest::Contains("other than 1"), std::invalid_argument);
}

}  // TEST_SUITE
