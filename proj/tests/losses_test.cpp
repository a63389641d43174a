#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "ovpseg/autodiff.hpp"
#include "ovpseg/errors.hpp"
#include "ovpseg/gradcheck.hpp"
#include "ovpseg/hungarian.hpp"
#include "ovpseg/losses.hpp"
#include "ovpseg/rng.hpp"
#include "ovpseg/scene.hpp"
#include "ovpseg/vocab.hpp"
#include "support/oracles.hpp"

using namespace ovpseg;
using testing::brute_force_assignment;
using testing::random_tensor;

namespace {

// car(0) thing/base, pole(1) thing/base, ground(2) stuff/base,
// gravel(3) stuff/base, crate(4) thing/novel, grass(5) stuff/novel.
Vocabulary test_vocab() {
  return Vocabulary({{"car", true, true, {"car"}},
                     {"pole", true, true, {"pole"}},
                     {"ground", false, true, {"ground"}},
                     {"gravel", false, true, {"gravel"}},
                     {"crate", true, false, {"crate"}},
                     {"grass", false, false, {"grass"}}});
}

GroundTruthSegment make_segment(int class_id, int instance_id,
                                std::vector<std::uint8_t> mask) {
  GroundTruthSegment seg;
  seg.class_id = class_id;
  seg.instance_id = instance_id;
  seg.mask = std::move(mask);
  for (const auto b : seg.mask) seg.voxel_count += b ? 1 : 0;
  return seg;
}

// Mask logits that predict exactly the given membership, saturated outside
// the clip range.
Tensor saturated_mask_row(const std::vector<std::uint8_t>& mask) {
  Tensor t = Tensor::zeros({static_cast<int>(mask.size())});
  for (std::size_t v = 0; v < mask.size(); ++v) {
    t.values()[v] = mask[v] ? 25.0 : -25.0;
  }
  return t;
}

std::vector<std::uint8_t> all_valid(int v) {
  return std::vector<std::uint8_t>(static_cast<std::size_t>(v), 1);
}

}  // namespace

TEST_CASE("ground truth segments come from per-voxel majority votes") {
  // 1-D row of 4 unit voxels along x; three points per voxel let us plant
  // exact majorities.
  Scene scene;
  scene.cloud = make_point_cloud(Tensor::row_matrix({
      {0.2, 0.5, 0.5}, {0.5, 0.5, 0.5}, {0.8, 0.5, 0.5},  // voxel 0
      {1.2, 0.5, 0.5}, {1.5, 0.5, 0.5}, {1.8, 0.5, 0.5},  // voxel 1
      {2.2, 0.5, 0.5}, {2.5, 0.5, 0.5}, {2.8, 0.5, 0.5},  // voxel 2
      {3.2, 0.5, 0.5}, {3.8, 0.5, 0.5},                    // voxel 3
  }));
  //             voxel 0: car#1 majority   voxel 1: ground unanimous
  //             voxel 2: car#1 2-of-3     voxel 3: tie -> lowest pair
  scene.semantic = {0, 0, 2, 2, 2, 2, 0, 0, 2, 0, 2};
  scene.instance = {1, 1, 0, 0, 0, 0, 1, 1, 0, 2, 0};

  VoxelGrid grid;
  grid.size = 1.0;
  grid.extents = {4, 1, 1};
  const VoxelAssignment assign = voxelize(scene.cloud, grid);
  REQUIRE(assign.voxel_count() == 4);

  const auto segments = ground_truth_segments(scene, assign);
  // (0,1) car#1, (0,2) car#2, (2,0) ground — ordered by (class, instance).
  REQUIRE(segments.size() == 3);
  CHECK(segments[0].class_id == 0);
  CHECK(segments[0].instance_id == 1);
  CHECK(segments[0].mask == std::vector<std::uint8_t>{1, 0, 1, 0});
  CHECK(segments[0].voxel_count == 2);
  CHECK(segments[1].class_id == 0);
  CHECK(segments[1].instance_id == 2);  // tie in voxel 3: (0,2) < (2,0)
  CHECK(segments[1].mask == std::vector<std::uint8_t>{0, 0, 0, 1});
  CHECK(segments[2].class_id == 2);
  CHECK(segments[2].instance_id == 0);
  CHECK(segments[2].mask == std::vector<std::uint8_t>{0, 1, 0, 0});
}

TEST_CASE("stuff-only scenes match through the fixed bindings") {
  const Vocabulary vocab = test_vocab();  // base stuff: ground(2), gravel(3)
  const int v = 6;
  const std::vector<GroundTruthSegment> segments = {
      make_segment(2, 0, {1, 1, 1, 0, 0, 0}),
      make_segment(3, 0, {0, 0, 0, 1, 1, 0}),
  };
  Rng rng(1);
  const int q = 5;  // 2 stuff + 3 learnable
  const Tensor cls = random_tensor(rng, {q, vocab.base_count()}, -1.0, 1.0);
  const Tensor msk = random_tensor(rng, {q, v}, -1.0, 1.0);

  const Matching m = match_queries(cls, msk, segments, vocab, 2, {});
  REQUIRE(m.pairs.size() == 2);
  CHECK(m.pairs[0] == std::pair<int, int>{0, 0});  // query 0 <-> ground
  CHECK(m.pairs[1] == std::pair<int, int>{1, 1});  // query 1 <-> gravel
  CHECK(m.query_count == q);
  CHECK_FALSE(m.is_matched(2));
}

TEST_CASE("a perfectly predicted thing matches its query") {
  const Vocabulary vocab = test_vocab();
  const int v = 5;
  const std::vector<std::uint8_t> target = {1, 1, 0, 0, 0};
  const std::vector<GroundTruthSegment> segments = {
      make_segment(0, 1, target)};

  const int q = 4;  // 2 stuff + 2 learnable
  Tensor cls = Tensor::zeros({q, vocab.base_count()});
  Tensor msk = Tensor::full({q, v}, -25.0);
  // Learnable query 3 (global index) nails class "car" and the mask.
  cls.at(3, vocab.base_pos(0)) = 30.0;
  for (int i = 0; i < v; ++i) msk.at(3, i) = target[std::size_t(i)] ? 25.0 : -25.0;

  const Matching m = match_queries(cls, msk, segments, vocab, 2, {});
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0] == std::pair<int, int>{3, 0});
}

TEST_CASE("thing matching agrees with the brute-force oracle") {
  const Vocabulary vocab = test_vocab();
  const LossWeights weights;
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    Rng rng(seed);
    const int v = 12;
    const int learnable = 6;
    const int q = 2 + learnable;
    // Four thing segments over disjoint voxel ranges, random classes.
    std::vector<GroundTruthSegment> segments;
    for (int s = 0; s < 4; ++s) {
      std::vector<std::uint8_t> mask(static_cast<std::size_t>(v), 0);
      for (int i = 3 * s; i < 3 * s + 3; ++i) mask[std::size_t(i)] = 1;
      segments.push_back(
          make_segment(rng.uniform_int(0, 1), s + 1, std::move(mask)));
    }
    const Tensor cls = random_tensor(rng, {q, vocab.base_count()}, -2.0, 2.0);
    const Tensor msk = random_tensor(rng, {q, v}, -3.0, 3.0);

    // Independent cost computation: own softmax, sigmoid, and dice loops.
    Tensor cost = Tensor::zeros({4, learnable});
    for (int s = 0; s < 4; ++s) {
      for (int j = 0; j < learnable; ++j) {
        const int query = 2 + j;
        double mx = cls.at(query, 0);
        for (int c = 1; c < vocab.base_count(); ++c) {
          mx = std::max(mx, cls.at(query, c));
        }
        double denom = 0.0;
        for (int c = 0; c < vocab.base_count(); ++c) {
          denom += std::exp(cls.at(query, c) - mx);
        }
        const double p_class =
            std::exp(cls.at(query, vocab.base_pos(segments[std::size_t(s)].class_id)) - mx) /
            denom;
        double inter = 0.0, psum = 0.0, gsum = 0.0;
        for (int i = 0; i < v; ++i) {
          const double p = 1.0 / (1.0 + std::exp(-msk.at(query, i)));
          const double g = segments[std::size_t(s)].mask[std::size_t(i)] ? 1.0 : 0.0;
          inter += p * g;
          psum += p;
          gsum += g;
        }
        const double dice = (2.0 * inter + 1.0) / (psum + gsum + 1.0);
        cost.at(s, j) = weights.w_alpha * (1.0 - p_class) +
                        weights.w_beta * (1.0 - dice);
      }
    }
    const auto brute = brute_force_assignment(cost);

    const Matching m = match_queries(cls, msk, segments, vocab, 2, weights);
    REQUIRE(m.pairs.size() == 4);  // no stuff segments in this scene
    for (int s = 0; s < 4; ++s) {
      const int expect_query = 2 + brute.row_col[std::size_t(s)];
      INFO("seed ", seed, " segment ", s);
      CHECK(m.segment_for(expect_query) == s);
    }
  }
}

TEST_CASE("shared queries let stuff compete through the assignment") {
  const Vocabulary vocab = test_vocab();
  const int v = 6;
  const std::vector<GroundTruthSegment> segments = {
      make_segment(2, 0, {1, 1, 1, 0, 0, 0}),  // ground (stuff)
      make_segment(0, 1, {0, 0, 0, 1, 1, 1}),  // car
  };

  const int q = 4;
  Tensor cls = Tensor::zeros({q, vocab.base_count()});
  Tensor msk = Tensor::full({q, v}, -25.0);
  // Query 1 nails ground, query 3 nails the car.
  cls.at(1, vocab.base_pos(2)) = 30.0;
  cls.at(3, vocab.base_pos(0)) = 30.0;
  for (int i = 0; i < 3; ++i) msk.at(1, i) = 25.0;
  for (int i = 3; i < v; ++i) msk.at(3, i) = 25.0;

  const Matching m = match_queries(cls, msk, segments, vocab, 0, {});
  REQUIRE(m.pairs.size() == 2);
  CHECK(m.pairs[0] == std::pair<int, int>{1, 0});
  CHECK(m.pairs[1] == std::pair<int, int>{3, 1});

  // Capacity counts stuff too when queries are shared.
  const std::vector<GroundTruthSegment> crowded = {
      make_segment(2, 0, {1, 0, 0, 0, 0, 0}),
      make_segment(3, 0, {0, 1, 0, 0, 0, 0}),
      make_segment(0, 1, {0, 0, 1, 0, 0, 0}),
      make_segment(0, 2, {0, 0, 0, 1, 0, 0}),
      make_segment(1, 1, {0, 0, 0, 0, 1, 0}),
  };
  CHECK_THROWS_AS(match_queries(cls, msk, crowded, vocab, 0, {}),
                  CapacityError);
}

TEST_CASE("matching respects capacity and ignores novel segments") {
  const Vocabulary vocab = test_vocab();
  const int v = 4;
  Rng rng(40);
  const Tensor cls = random_tensor(rng, {4, vocab.base_count()}, -1.0, 1.0);
  const Tensor msk = random_tensor(rng, {4, v}, -1.0, 1.0);

  SUBCASE("too many things") {
    std::vector<GroundTruthSegment> segments;
    for (int s = 0; s < 3; ++s) {
      segments.push_back(make_segment(0, s + 1, {1, 0, 0, 0}));
    }
    // 4 queries - 2 stuff = 2 learnable < 3 things
    CHECK_THROWS_AS(match_queries(cls, msk, segments, vocab, 2, {}),
                    CapacityError);
  }

  SUBCASE("novel segments are invisible") {
    const std::vector<GroundTruthSegment> segments = {
        make_segment(4, 1, {1, 1, 0, 0}),  // novel thing
        make_segment(5, 0, {0, 0, 1, 1}),  // novel stuff
    };
    const Matching m = match_queries(cls, msk, segments, vocab, 2, {});
    CHECK(m.pairs.empty());
  }

  SUBCASE("wrong stuff query count") {
    CHECK_THROWS_AS(match_queries(cls, msk, {}, vocab, 1, {}), ContractError);
  }
}

TEST_CASE("matching invariants hold on random scenes") {
  const Vocabulary vocab = test_vocab();
  for (std::uint64_t seed = 50; seed < 60; ++seed) {
    Rng rng(seed);
    const int v = 10;
    const int q = 2 + 5;
    std::vector<GroundTruthSegment> segments;
    segments.push_back(make_segment(2, 0, {1, 1, 0, 0, 0, 0, 0, 0, 0, 0}));
    const int things = rng.uniform_int(0, 5);
    for (int s = 0; s < things; ++s) {
      std::vector<std::uint8_t> mask(static_cast<std::size_t>(v), 0);
      mask[std::size_t(rng.uniform_int(2, v - 1))] = 1;
      segments.push_back(make_segment(rng.uniform_int(0, 1), s + 1, std::move(mask)));
    }
    const Matching m = match_queries(
        random_tensor(rng, {q, vocab.base_count()}, -1.0, 1.0),
        random_tensor(rng, {q, v}, -1.0, 1.0), segments, vocab, 2, {});

    std::set<int> queries, segs;
    for (const auto& [qq, ss] : m.pairs) {
      CHECK(queries.insert(qq).second);  // each query at most once
      CHECK(segs.insert(ss).second);     // each segment at most once
      if (qq >= 2) {
        CHECK(segments[std::size_t(ss)].instance_id >= 1);  // stuff never Hungarian
      }
    }
    CHECK(static_cast<int>(m.pairs.size()) == 1 + things);
  }
}

TEST_CASE("classification loss hits zero on perfect predictions") {
  const Vocabulary vocab = test_vocab();
  const std::vector<GroundTruthSegment> segments = {
      make_segment(2, 0, {1, 1}), make_segment(0, 1, {0, 1})};
  Matching m;
  m.query_count = 3;
  m.pairs = {{0, 0}, {2, 1}};  // query 1 unmatched

  Tensor probs = Tensor::zeros({3, vocab.base_count()});
  probs.at(0, vocab.base_pos(2)) = 1.0;  // exact one-hot on ground
  probs.at(2, vocab.base_pos(0)) = 1.0;  // exact one-hot on car
  // row 1 all zeros: the exact no-object target
  CHECK(loss_cls(Var::constant(probs), m, segments, vocab).value().item() ==
        0.0);
}

TEST_CASE("classification loss reproduces the focal formula") {
  const Vocabulary vocab = test_vocab();
  const std::vector<GroundTruthSegment> segments = {make_segment(0, 1, {1})};
  Matching m;
  m.query_count = 1;
  m.pairs = {{0, 0}};

  const double probs[4] = {0.7, 0.2, 0.06, 0.04};
  Tensor p = Tensor::zeros({1, 4});
  for (int c = 0; c < 4; ++c) p.at(0, c) = probs[c];
  const FocalParams focal;  // gamma 2, alpha 0.25

  // One-vs-all focal, summed over the 4 base classes, target = class 0.
  double expect = -focal.alpha * std::pow(1.0 - probs[0], focal.gamma) *
                  std::log(probs[0]);
  for (int c = 1; c < 4; ++c) {
    expect += -(1.0 - focal.alpha) * std::pow(probs[c], focal.gamma) *
              std::log(1.0 - probs[c]);
  }
  CHECK(loss_cls(Var::constant(p), m, segments, vocab, focal).value().item() ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("classification loss gradient passes finite differences") {
  const Vocabulary vocab = test_vocab();
  const std::vector<GroundTruthSegment> segments = {
      make_segment(2, 0, {1, 0}), make_segment(0, 1, {0, 1})};
  Matching m;
  m.query_count = 4;
  m.pairs = {{0, 0}, {3, 1}};

  Rng rng(70);
  const Tensor logits = random_tensor(rng, {4, vocab.base_count()}, -2.0, 2.0);
  const auto f = [&](const Var& x) {
    return loss_cls(softmax_rows(x), m, segments, vocab);
  };
  const GradCheckReport report = grad_check(f, logits, 1e-5, 1e-4);
  INFO("worst rel err ", report.max_rel_err);
  CHECK(report.pass);
}

TEST_CASE("mask loss is tiny on saturated perfect predictions") {
  const std::vector<std::uint8_t> target = {1, 0, 1, 1, 0, 0};
  const std::vector<GroundTruthSegment> segments = {
      make_segment(0, 1, target)};
  Matching m;
  m.query_count = 1;
  m.pairs = {{0, 0}};

  Tensor logits = Tensor::zeros({1, 6});
  for (int v = 0; v < 6; ++v) logits.at(0, v) = target[std::size_t(v)] ? 25.0 : -25.0;
  const double loss = loss_mask(Var::constant(logits), m, segments).value().item();
  CHECK(loss >= 0.0);
  CHECK(loss < 1e-6);
}

TEST_CASE("mask loss reproduces the BCE + dice formula at even odds") {
  const int v = 8;
  std::vector<std::uint8_t> target(v, 0);
  for (int i = 0; i < v / 2; ++i) target[std::size_t(i)] = 1;
  const std::vector<GroundTruthSegment> segments = {
      make_segment(0, 1, target)};
  Matching m;
  m.query_count = 1;
  m.pairs = {{0, 0}};

  // Logits 0 -> sigmoid 0.5 everywhere. BCE = ln 2 per voxel. Dice:
  // inter = 0.5*4 = 2, psum = 4, gsum = 4 -> 1 - (2*2+1)/(4+4+1) = 4/9.
  const Var logits = Var::constant(Tensor::zeros({1, v}));
  const double expect = std::log(2.0) + (1.0 - 5.0 / 9.0);
  CHECK(loss_mask(logits, m, segments).value().item() ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("mask loss gradient passes finite differences") {
  Rng rng(80);
  const int v = 7;
  const std::vector<GroundTruthSegment> segments = {
      make_segment(0, 1, {1, 1, 0, 0, 0, 1, 0}),
      make_segment(1, 1, {0, 0, 1, 1, 0, 0, 0})};
  Matching m;
  m.query_count = 3;
  m.pairs = {{0, 0}, {2, 1}};

  const Tensor logits = random_tensor(rng, {3, v}, -3.0, 3.0);
  const auto f = [&](const Var& x) { return loss_mask(x, m, segments); };
  const GradCheckReport report = grad_check(f, logits, 1e-5, 1e-4);
  INFO("worst rel err ", report.max_rel_err);
  CHECK(report.pass);
}

TEST_CASE("mask pooling averages the covered confident voxels") {
  const int v = 4, d = 3;
  Tensor f = Tensor::zeros({v, d});

  SUBCASE("identical features come back unchanged") {
    for (int i = 0; i < v; ++i) {
      f.at(i, 0) = 0.5;
      f.at(i, 1) = -0.25;
      f.at(i, 2) = 1.0;
    }
    Tensor probs = Tensor::from({4}, {0.9, 0.8, 0.2, 0.1});
    const auto w = mask_pool(probs, f, all_valid(v));
    REQUIRE(w.has_value());
    CHECK(w->values() == std::vector<double>{0.5, -0.25, 1.0});
  }

  SUBCASE("two-voxel mask gives the midpoint") {
    f.at(0, 0) = 1.0;
    f.at(1, 0) = 3.0;
    f.at(1, 1) = -2.0;
    Tensor probs = Tensor::from({4}, {1.0, 0.6, 0.4, 0.0});
    const auto w = mask_pool(probs, f, all_valid(v));
    REQUIRE(w.has_value());
    CHECK((*w)[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK((*w)[1] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK((*w)[2] == 0.0);
  }

  SUBCASE("invalid voxels never pool") {
    f.at(0, 0) = 1.0;
    f.at(1, 0) = 100.0;  // confident but invalid: must be excluded
    Tensor probs = Tensor::from({4}, {0.9, 0.95, 0.1, 0.1});
    std::vector<std::uint8_t> validity = {1, 0, 1, 1};
    const auto w = mask_pool(probs, f, validity);
    REQUIRE(w.has_value());
    CHECK((*w)[0] == 1.0);
  }

  SUBCASE("empty hard mask falls back to soft weights") {
    f.at(0, 0) = 2.0;
    f.at(1, 0) = 4.0;
    Tensor probs = Tensor::from({4}, {0.3, 0.1, 0.0, 0.0});
    const auto w = mask_pool(probs, f, all_valid(v));
    REQUIRE(w.has_value());
    // (0.3*2 + 0.1*4) / 0.4 = 2.5
    CHECK((*w)[0] == doctest::Approx(2.5).epsilon(1e-12));
  }

  SUBCASE("no valid voxels yields no target") {
    Tensor probs = Tensor::from({4}, {0.9, 0.9, 0.9, 0.9});
    CHECK_FALSE(mask_pool(probs, f, std::vector<std::uint8_t>(4, 0)).has_value());
  }

  SUBCASE("out-of-range probabilities are rejected") {
    Tensor probs = Tensor::from({4}, {0.5, 1.5, 0.5, 0.5});
    CHECK_THROWS_AS(mask_pool(probs, f, all_valid(v)), ContractError);
  }
}

TEST_CASE("mask pooling equals the indicator-sum oracle") {
  // Acceptance reruns this at 1e-12: hard-mask pooling must equal
  // sum(1[p>0.5]*valid*f) / sum(1[p>0.5]*valid) computed independently.
  for (std::uint64_t seed = 90; seed < 110; ++seed) {
    Rng rng(seed);
    const int v = 30, d = 6;
    const Tensor f = random_tensor(rng, {v, d}, -2.0, 2.0);
    const Tensor probs = random_tensor(rng, {v}, 0.0, 1.0);
    std::vector<std::uint8_t> validity(static_cast<std::size_t>(v), 0);
    for (auto& b : validity) b = rng.uniform() < 0.8 ? 1 : 0;

    double count = 0.0;
    std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < v; ++i) {
      const double ind =
          (probs[std::size_t(i)] > 0.5 && validity[std::size_t(i)]) ? 1.0 : 0.0;
      count += ind;
      for (int k = 0; k < d; ++k) acc[std::size_t(k)] += ind * f.at(i, k);
    }
    const auto w = mask_pool(probs, f, validity);
    if (count == 0.0) continue;  // soft path, covered elsewhere
    REQUIRE(w.has_value());
    for (int k = 0; k < d; ++k) {
      CHECK((*w)[std::size_t(k)] ==
            doctest::Approx(acc[std::size_t(k)] / count).epsilon(1e-12));
    }
  }
}

TEST_CASE("object distillation is zero on aligned embeddings and one at right angles") {
  const int v = 4, d = 4;
  Tensor f = Tensor::zeros({v, d});
  for (int i = 0; i < v; ++i) f.at(i, 0) = 1.0;  // every voxel: e_x
  Tensor probs = Tensor::from({1, 4}, {0.9, 0.9, 0.1, 0.1});
  Matching m;
  m.query_count = 1;
  m.pairs = {{0, 0}};

  Tensor aligned = Tensor::zeros({1, d});
  aligned.at(0, 0) = 2.5;  // same direction, different norm
  CHECK(loss_object_distill(Var::constant(aligned), m, probs, f, all_valid(v))
            .value()
            .item() == doctest::Approx(0.0).epsilon(1e-12));

  Tensor orthogonal = Tensor::zeros({1, d});
  orthogonal.at(0, 1) = 1.0;
  CHECK(loss_object_distill(Var::constant(orthogonal), m, probs, f,
                            all_valid(v))
            .value()
            .item() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("object distillation skips degenerate targets") {
  const int v = 2, d = 2;
  Tensor f = Tensor::zeros({v, d});
  f.at(0, 0) = 1.0;
  f.at(1, 0) = -1.0;  // the two covered voxels cancel exactly
  Tensor probs = Tensor::from({1, 2}, {0.9, 0.9});
  Matching m;
  m.query_count = 1;
  m.pairs = {{0, 0}};
  Tensor v_q = Tensor::zeros({1, d});
  v_q.at(0, 0) = 1.0;
  CHECK(loss_object_distill(Var::constant(v_q), m, probs, f, all_valid(v))
            .value()
            .item() == 0.0);

  // All-invalid scene: no target either.
  CHECK(loss_object_distill(Var::constant(v_q), m, probs, f,
                            std::vector<std::uint8_t>(2, 0))
            .value()
            .item() == 0.0);
}

TEST_CASE("object distillation gradient passes finite differences") {
  Rng rng(120);
  const int v = 9, d = 5, q = 3;
  const Tensor f = random_tensor(rng, {v, d}, -1.0, 1.0);
  const Tensor probs = random_tensor(rng, {q, v}, 0.0, 1.0);
  Matching m;
  m.query_count = q;
  m.pairs = {{0, 0}, {2, 1}};
  const Tensor v_q = random_tensor(rng, {q, d}, -1.0, 1.0);

  const auto fdf = [&](const Var& x) {
    return loss_object_distill(x, m, probs, f, all_valid(v));
  };
  const GradCheckReport report = grad_check(fdf, v_q, 1e-5, 1e-4);
  INFO("worst rel err ", report.max_rel_err);
  CHECK(report.pass);
}

TEST_CASE("voxel reconstruction is a convex recombination of query embeddings") {
  Rng rng(130);
  const int q = 4, v = 6, d = 3;
  const Tensor emb = random_tensor(rng, {q, d}, -2.0, 2.0);

  SUBCASE("dominant logit reproduces its query") {
    Tensor logits = Tensor::full({q, v}, -20.0);
    for (int i = 0; i < v; ++i) logits.at(1, i) = 20.0;
    const Tensor rec =
        reconstruct_voxel_features(Var::constant(logits), Var::constant(emb))
            .value();
    for (int i = 0; i < v; ++i) {
      for (int k = 0; k < d; ++k) {
        CHECK(rec.at(i, k) == doctest::Approx(emb.at(1, k)).epsilon(1e-8));
      }
    }
  }

  SUBCASE("equal logits average the queries") {
    const Tensor logits = Tensor::zeros({2, v});
    Tensor two = Tensor::zeros({2, d});
    for (int k = 0; k < d; ++k) {
      two.at(0, k) = emb.at(0, k);
      two.at(1, k) = emb.at(1, k);
    }
    const Tensor rec =
        reconstruct_voxel_features(Var::constant(logits), Var::constant(two))
            .value();
    for (int i = 0; i < v; ++i) {
      for (int k = 0; k < d; ++k) {
        CHECK(rec.at(i, k) ==
              doctest::Approx(0.5 * (emb.at(0, k) + emb.at(1, k)))
                  .epsilon(1e-12));
      }
    }
  }

  SUBCASE("random instance equals the explicit weighted-sum loop") {
    const Tensor logits = random_tensor(rng, {q, v}, -3.0, 3.0);
    const Tensor rec =
        reconstruct_voxel_features(Var::constant(logits), Var::constant(emb))
            .value();
    for (int i = 0; i < v; ++i) {
      // Own softmax over queries for this voxel.
      double mx = logits.at(0, i);
      for (int j = 1; j < q; ++j) mx = std::max(mx, logits.at(j, i));
      double denom = 0.0;
      for (int j = 0; j < q; ++j) denom += std::exp(logits.at(j, i) - mx);
      for (int k = 0; k < d; ++k) {
        double expect = 0.0;
        for (int j = 0; j < q; ++j) {
          expect += std::exp(logits.at(j, i) - mx) / denom * emb.at(j, k);
        }
        CHECK(rec.at(i, k) == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }

  SUBCASE("per-voxel weights are a probability distribution") {
    const Tensor logits = random_tensor(rng, {q, v}, -3.0, 3.0);
    const Tensor w = softmax_cols(Var::constant(logits)).value();
    for (int i = 0; i < v; ++i) {
      double total = 0.0;
      for (int j = 0; j < q; ++j) {
        CHECK(w.at(j, i) >= 0.0);
        total += w.at(j, i);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("voxel distillation measures valid voxels only") {
  const int v = 3, d = 2;
  Tensor target = Tensor::zeros({v, d});
  target.at(0, 0) = 1.0;
  target.at(1, 1) = -2.0;
  target.at(2, 0) = 50.0;  // invalid voxel: value must not matter

  SUBCASE("exact match is zero") {
    const std::vector<std::uint8_t> validity = {1, 1, 0};
    CHECK(loss_voxel_distill(Var::constant(target), target, validity)
              .value()
              .item() == 0.0);
  }

  SUBCASE("constant gap on the single valid voxel") {
    Tensor rec = target;
    rec.at(0, 0) += 0.75;
    rec.at(0, 1) -= 0.75;
    rec.at(2, 1) += 9.0;  // invalid, ignored
    const std::vector<std::uint8_t> validity = {1, 0, 0};
    CHECK(loss_voxel_distill(Var::constant(rec), target, validity)
              .value()
              .item() == doctest::Approx(0.75).epsilon(1e-12));
  }

  SUBCASE("no valid voxels is zero") {
    const std::vector<std::uint8_t> validity(v, 0);
    Tensor rec = Tensor::full({v, d}, 3.0);
    CHECK(loss_voxel_distill(Var::constant(rec), target, validity)
              .value()
              .item() == 0.0);
  }
}

TEST_CASE("voxel distillation gradient passes finite differences") {
  Rng rng(140);
  const int q = 3, v = 8, d = 4;
  const Tensor f_vclip = random_tensor(rng, {v, d}, -1.0, 1.0);
  const Tensor emb = random_tensor(rng, {q, d}, -1.0, 1.0);
  const Tensor logits = random_tensor(rng, {q, v}, -2.0, 2.0);
  std::vector<std::uint8_t> validity(static_cast<std::size_t>(v), 1);
  validity[2] = 0;
  validity[5] = 0;

  SUBCASE("through the mask logits") {
    const auto f = [&](const Var& x) {
      return loss_voxel_distill(
          reconstruct_voxel_features(x, Var::constant(emb)), f_vclip, validity);
    };
    const GradCheckReport report = grad_check(f, logits, 1e-5, 1e-4);
    INFO("worst rel err ", report.max_rel_err);
    CHECK(report.pass);
  }

  SUBCASE("through the query embeddings") {
    const auto f = [&](const Var& x) {
      return loss_voxel_distill(
          reconstruct_voxel_features(Var::constant(logits), x), f_vclip,
          validity);
    };
    const GradCheckReport report = grad_check(f, emb, 1e-5, 1e-4);
    INFO("worst rel err ", report.max_rel_err);
    CHECK(report.pass);
  }
}

TEST_CASE("total loss is the weighted sum") {
  const Var a = Var::constant(Tensor::scalar(2.0));
  const Var b = Var::constant(Tensor::scalar(3.0));
  const Var c = Var::constant(Tensor::scalar(4.0));
  const Var d = Var::constant(Tensor::scalar(10.0));

  CHECK(total_loss(a, b, c, d, LossWeights{}).value().item() ==
        doctest::Approx(10.0).epsilon(1e-15));  // 2 + 3 + 4 + 1
  CHECK(total_loss(a, b, c, d, LossWeights{0.0, 0.0, 0.0, 0.0})
            .value()
            .item() == 0.0);
  LossWeights bad;
  bad.w_gamma = -0.5;
  CHECK_THROWS_AS(total_loss(a, b, c, d, bad), ConfigError);
}

TEST_CASE("total loss gradient is the weighted sum of component gradients") {
  Rng rng(150);
  const Tensor x0 = random_tensor(rng, {3, 3}, 0.5, 1.5);
  const Tensor w1 = random_tensor(rng, {3, 3}, -1.0, 1.0);
  const Tensor w2 = random_tensor(rng, {3, 3}, -1.0, 1.0);
  const LossWeights weights{1.0, 0.5, 2.0, 0.1};

  // Four distinct scalar functions of one leaf.
  const auto components = [&](const Var& x) {
    return std::vector<Var>{sum(mul(x, Var::constant(w1))),
                            sum(mul(x, Var::constant(w2))),
                            sum(mul(x, x)), mean(abs(x))};
  };

  Var leaf = Var::leaf(x0, true);
  auto comps = components(leaf);
  backward(total_loss(comps[0], comps[1], comps[2], comps[3], weights));
  const Tensor total_grad = leaf.grad();

  // Component gradients on fresh graphs.
  std::vector<Tensor> grads;
  for (int i = 0; i < 4; ++i) {
    Var fresh = Var::leaf(x0, true);
    backward(components(fresh)[std::size_t(i)]);
    grads.push_back(fresh.grad());
  }
  const double w[4] = {weights.w_alpha, weights.w_beta, weights.w_lambda,
                       weights.w_gamma};
  for (std::size_t i = 0; i < x0.size(); ++i) {
    double expect = 0.0;
    for (int j = 0; j < 4; ++j) expect += w[j] * grads[std::size_t(j)][i];
    CHECK(total_grad[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("voxel distillation is the only mask supervision reaching unmatched queries") {
  Rng rng(160);
  const int q = 4, v = 6, d = 3;
  const std::vector<GroundTruthSegment> segments = {
      make_segment(0, 1, {1, 1, 0, 0, 0, 0})};
  Matching m;
  m.query_count = q;
  m.pairs = {{2, 0}};  // queries 0, 1, 3 unmatched
  const Tensor f_vclip = random_tensor(rng, {v, d}, -1.0, 1.0);
  const Tensor emb = random_tensor(rng, {q, d}, -1.0, 1.0);
  const Tensor logits0 = random_tensor(rng, {q, v}, -2.0, 2.0);

  const auto run = [&](double w_gamma) {
    Var leaf = Var::leaf(logits0, true);
    const Var l_mask = loss_mask(leaf, m, segments);
    const Var l_voxel = loss_voxel_distill(
        reconstruct_voxel_features(leaf, Var::constant(emb)), f_vclip,
        all_valid(v));
    LossWeights weights;
    weights.w_gamma = w_gamma;
    const Var zero = Var::constant(Tensor::scalar(0.0));
    backward(total_loss(zero, l_mask, zero, l_voxel, weights));
    return leaf.grad();
  };

  const Tensor without = run(0.0);
  for (const int unmatched : {0, 1, 3}) {
    for (int i = 0; i < v; ++i) CHECK(without.at(unmatched, i) == 0.0);
  }
  const Tensor with = run(0.1);
  double unmatched_norm = 0.0;
  for (const int unmatched : {0, 1, 3}) {
    for (int i = 0; i < v; ++i) {
      unmatched_norm += std::fabs(with.at(unmatched, i));
    }
  }
  CHECK(unmatched_norm > 0.0);
}

TEST_CASE("losses stay in their documented ranges") {
  const Vocabulary vocab = test_vocab();
  for (std::uint64_t seed = 170; seed < 180; ++seed) {
    Rng rng(seed);
    const int v = 8, q = 5, d = 4;
    const std::vector<GroundTruthSegment> segments = {
        make_segment(2, 0, {1, 1, 1, 0, 0, 0, 0, 0}),
        make_segment(0, 1, {0, 0, 0, 1, 1, 0, 0, 0})};
    const Tensor cls = random_tensor(rng, {q, vocab.base_count()}, -3.0, 3.0);
    const Tensor msk = random_tensor(rng, {q, v}, -3.0, 3.0);
    const Matching m = match_queries(cls, msk, segments, vocab, 2, {});

    const Var probs = softmax_rows(Var::constant(cls));
    Tensor sig = Tensor::zeros({q, v});
    for (int i = 0; i < q; ++i) {
      for (int j = 0; j < v; ++j) sig.at(i, j) = sigmoid_scalar(msk.at(i, j));
    }
    const Tensor f_vclip = random_tensor(rng, {v, d}, -1.0, 1.0);
    const Tensor emb = random_tensor(rng, {q, d}, -1.0, 1.0);

    const double l_cls = loss_cls(probs, m, segments, vocab).value().item();
    const double l_mask =
        loss_mask(Var::constant(msk), m, segments).value().item();
    const double l_o = loss_object_distill(Var::constant(emb), m, sig, f_vclip,
                                           all_valid(v))
                           .value()
                           .item();
    const double l_v =
        loss_voxel_distill(
            reconstruct_voxel_features(Var::constant(msk), Var::constant(emb)),
            f_vclip, all_valid(v))
            .value()
            .item();
    CHECK(l_cls >= 0.0);
    CHECK(l_mask >= 0.0);
    CHECK(l_o >= 0.0);
    CHECK(l_o <= 2.0);
    CHECK(l_v >= 0.0);
    CHECK(std::isfinite(l_cls));
    CHECK(std::isfinite(l_mask));
    CHECK(std::isfinite(l_v));
  }
}
