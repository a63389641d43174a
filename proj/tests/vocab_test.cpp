#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "ovpseg/autodiff.hpp"
#include "ovpseg/errors.hpp"
#include "ovpseg/rng.hpp"
#include "ovpseg/vocab.hpp"
#include "support/oracles.hpp"

using namespace ovpseg;

namespace {

Vocabulary sample_vocab() {
  return Vocabulary({
      {"car", true, true, {"car", "automobile"}},
      {"ground", false, true, {"ground"}},
      {"pedestrian", true, false, {"pedestrian", "person"}},
      {"grass", false, false, {"grass"}},
  });
}

}  // namespace

TEST_CASE("vocabulary validates structure") {
  CHECK_THROWS_AS(Vocabulary({{"a", true, true, {}}}), ConfigError);
  CHECK_THROWS_AS(Vocabulary({{"a", true, true, {"a"}}, {"a", true, true, {"a"}}}),
                  ConfigError);
  CHECK_THROWS_AS(Vocabulary({{"a", true, false, {"a"}}}), ConfigError);

  Vocabulary v = sample_vocab();
  CHECK(v.size() == 4);
  CHECK(v.base_count() == 2);
  CHECK(v.novel_count() == 2);
  CHECK(v.base_pos(0) == 0);
  CHECK(v.base_pos(1) == 1);
  CHECK(v.base_pos(2) == -1);
  CHECK(v.base_class_id(1) == 1);
  CHECK(v.base_stuff_ids() == std::vector<int>{1});
  CHECK(v.find("grass") == 3);
  CHECK(v.find("unknown") == -1);
}

TEST_CASE("prototypes are deterministic per seed") {
  PrototypeProvider a = gen_prototypes(42, 8, 16);
  PrototypeProvider b = gen_prototypes(42, 8, 16);
  CHECK(a.prototypes().values() == b.prototypes().values());
  PrototypeProvider c = gen_prototypes(43, 8, 16);
  CHECK(a.prototypes().values() != c.prototypes().values());
}

TEST_CASE("two prototypes in four dimensions stay separated") {
  PrototypeProvider p = gen_prototypes(7, 2, 4);
  double cosv = 0.0;
  for (int k = 0; k < 4; ++k) cosv += p.prototypes().at(0, k) * p.prototypes().at(1, k);
  CHECK(cosv <= 0.7);
}

TEST_CASE("all 28 pairwise cosines of 8 prototypes in 16 dims stay under 0.7") {
  PrototypeProvider p = gen_prototypes(11, 8, 16);
  int pairs = 0;
  for (int a = 0; a < 8; ++a) {
    for (int b = a + 1; b < 8; ++b) {
      double cosv = 0.0;
      for (int k = 0; k < 16; ++k) cosv += p.prototypes().at(a, k) * p.prototypes().at(b, k);
      CHECK(cosv <= 0.7);
      ++pairs;
    }
  }
  CHECK(pairs == 28);
  // Rows are unit-norm.
  for (int a = 0; a < 8; ++a) {
    double n2 = 0.0;
    for (int k = 0; k < 16; ++k) n2 += p.prototypes().at(a, k) * p.prototypes().at(a, k);
    CHECK(std::fabs(std::sqrt(n2) - 1.0) <= 1e-9);
  }
}

TEST_CASE("impossible separation raises a capacity error") {
  // 64 classes on the 4-dim unit sphere cannot all stay below cosine 0.05.
  CHECK_THROWS_AS(gen_prototypes(3, 64, 4, 0.0, 0.05), CapacityError);
}

TEST_CASE("zero label noise copies prototypes into label rows") {
  Vocabulary v = sample_vocab();
  PrototypeProvider p = gen_prototypes(21, 4, 16, 0.0);
  TextEmbeddings e = build_text_embeddings(v, p, true);
  REQUIRE(e.label_count() == 6);
  REQUIRE(e.n_classes == 4);
  // car has labels 0,1 -> class 0; both equal prototype 0 exactly.
  for (int k = 0; k < 16; ++k) {
    CHECK(e.rows.at(0, k) == p.prototypes().at(0, k));
    CHECK(e.rows.at(1, k) == p.prototypes().at(0, k));
  }
  CHECK(e.label_class == std::vector<int>{0, 0, 1, 2, 2, 3});
}

TEST_CASE("base-only embeddings use base positions as the class axis") {
  Vocabulary v = sample_vocab();
  PrototypeProvider p = gen_prototypes(21, 4, 16, 0.0);
  TextEmbeddings e = build_text_embeddings(v, p, false);
  CHECK(e.label_count() == 3);  // car, automobile, ground
  CHECK(e.n_classes == 2);
  CHECK(e.label_class == std::vector<int>{0, 0, 1});
}

TEST_CASE("aliases of one class stay closer than other classes' prototypes") {
  Vocabulary v = sample_vocab();
  PrototypeProvider p = gen_prototypes(31, 4, 16, 0.1);
  TextEmbeddings e = build_text_embeddings(v, p, true);
  // Labels 0 and 1 are car aliases.
  Tensor a = Tensor::zeros({16}), b = Tensor::zeros({16});
  for (int k = 0; k < 16; ++k) {
    a[std::size_t(k)] = e.rows.at(0, k);
    b[std::size_t(k)] = e.rows.at(1, k);
  }
  const double within = cosine_plain(a, b);
  for (int other = 1; other < 4; ++other) {
    CHECK(within > cosine_plain(a, p.prototype(other)));
    CHECK(within > cosine_plain(b, p.prototype(other)));
  }
}

TEST_CASE("label rows are unit-norm and construction is bit-stable") {
  Vocabulary v = sample_vocab();
  PrototypeProvider p = gen_prototypes(41, 4, 16, 0.2);
  TextEmbeddings e1 = build_text_embeddings(v, p, true);
  TextEmbeddings e2 = build_text_embeddings(v, p, true);
  CHECK(e1.rows.values() == e2.rows.values());
  for (int l = 0; l < e1.label_count(); ++l) {
    double n2 = 0.0;
    for (int k = 0; k < 16; ++k) n2 += e1.rows.at(l, k) * e1.rows.at(l, k);
    CHECK(std::fabs(std::sqrt(n2) - 1.0) <= 1e-9);
  }
}

TEST_CASE("multi-label class scores take the per-class maximum") {
  TextEmbeddings e;
  e.rows = Tensor::zeros({3, 4});
  e.label_class = {0, 1, 1};
  e.n_classes = 2;
  Tensor s = class_scores_multilabel(Tensor::from({3}, {0.4, 0.2, 0.9}), e);
  CHECK(s[0] == 0.4);
  CHECK(s[1] == 0.9);

  // One label per class: identity mapping.
  TextEmbeddings one;
  one.rows = Tensor::zeros({2, 4});
  one.label_class = {0, 1};
  one.n_classes = 2;
  Tensor id = class_scores_multilabel(Tensor::from({2}, {0.3, -0.7}), one);
  CHECK(id[0] == 0.3);
  CHECK(id[1] == -0.7);
}

TEST_CASE("multi-label scores match a loop-and-max oracle on random input") {
  Rng rng(51);
  TextEmbeddings e;
  e.rows = Tensor::zeros({7, 4});
  e.label_class = {2, 0, 1, 1, 2, 0, 2};
  e.n_classes = 3;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor s = ovpseg::testing::random_tensor(rng, {7}, -2.0, 2.0);
    Tensor got = class_scores_multilabel(s, e);
    for (int c = 0; c < 3; ++c) {
      double best = -1e300;
      for (std::size_t l = 0; l < 7; ++l) {
        if (e.label_class[l] == c) best = std::max(best, s[l]);
      }
      CHECK(got[std::size_t(c)] == best);
    }
  }
}

TEST_CASE("noise-free cosine scoring recovers each class") {
  Vocabulary v = sample_vocab();
  PrototypeProvider p = gen_prototypes(61, 4, 16, 0.0);
  TextEmbeddings e = build_text_embeddings(v, p, true);
  for (int c = 0; c < 4; ++c) {
    Tensor proto = p.prototype(c);
    Tensor label_scores = Tensor::zeros({e.label_count()});
    for (int l = 0; l < e.label_count(); ++l) {
      Tensor row = Tensor::zeros({16});
      for (int k = 0; k < 16; ++k) row[std::size_t(k)] = e.rows.at(l, k);
      label_scores[std::size_t(l)] = cosine_plain(proto, row);
    }
    Tensor scores = class_scores_multilabel(label_scores, e);
    int argmax = 0;
    for (int i = 1; i < 4; ++i) {
      if (scores[std::size_t(i)] > scores[std::size_t(argmax)]) argmax = i;
    }
    CHECK(argmax == c);
  }
}

TEST_CASE("provider smaller than the vocabulary is a lookup error") {
  Vocabulary v = sample_vocab();
  PrototypeProvider p = gen_prototypes(71, 2, 16);
  CHECK_THROWS_AS(build_text_embeddings(v, p, true), LookupError);
}
