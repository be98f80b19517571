// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "mmfs/errors.hpp"
#include "mmfs/head.hpp"
#include "mmfs/losses.hpp"
#include "support.hpp"

using namespace mmfs;
using namespace mmfs::testing;

namespace {

Mat random_probs(Rng& rng, Index rows, Index cols) {
  Mat p = rng.normal_matrix(rows, cols).array().exp();
  for (Index j = 0; j < cols; ++j) p.col(j) /= p.col(j).sum();
  return p;
}

Mat random_unit_interval(Rng& rng, Index rows, Index cols) {
  Mat m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(0.05, 0.95);
  }
  return m;
}

std::vector<int> random_labels(Rng& rng, Index n, int classes) {
  std::vector<int> l(static_cast<size_t>(n));
  for (auto& x : l) x = static_cast<int>(rng.uniform_int(0, classes));
  return l;
}

}  // namespace

TEST_CASE("classification loss: closed forms") {
  SUBCASE("uniform P over C+1 = 6 rows gives ln 6 per snippet") {
    const Mat p = Mat::Constant(6, 4, 1.0 / 6.0);
    CHECK(classification_loss(p, {0, 5, 2, 3}) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
    CHECK(std::log(6.0) == doctest::Approx(1.7918).epsilon(1e-4));
  }
  SUBCASE("one-hot at the label contributes nothing") {
    Mat p = Mat::Zero(3, 2);
    p(1, 0) = 1.0;
    p(2, 1) = 1.0;
    CHECK(classification_loss(p, {1, 2}) == doctest::Approx(0.0));
  }
  SUBCASE("labels outside [0, C] are data errors") {
    CHECK_THROWS_AS(classification_loss(Mat::Constant(3, 1, 1.0 / 3), {3}), DataError);
    CHECK_THROWS_AS(classification_loss(Mat::Constant(3, 2, 1.0 / 3), {0}), Error);
  }
}

TEST_CASE("classification loss gradient matches central differences") {
  for (uint64_t s = 0; s < 20; ++s) {
    Rng rng(s, 10);
    const Mat p = random_probs(rng, 4, 6);
    const auto labels = random_labels(rng, 6, 3);
    Mat g;
    classification_loss(p, labels, &g);
    const Mat n = numeric_gradient([&](const Mat& x) { return classification_loss(x, labels); }, p);
    CHECK(relative_error(g, n) < 1e-6);
  }
}

TEST_CASE("classification through the snippet classifier matches central differences") {
  for (uint64_t s = 0; s < 5; ++s) {
    Rng rng(s, 11);
    const Mat e = rng.normal_matrix(4, 5);
    Mat protos = rng.normal_matrix(3, 5);
    protos.rowwise().normalize();
    const auto labels = random_labels(rng, 4, 2);
    const auto f = [&](ad::Tape& t, const ad::Var& x) {
      return ad::classification_loss(classify_snippets(x, t.constant(protos), 0.7), labels);
    };
    CHECK(tape_gradcheck(f, e) < 1e-6);
  }
}

TEST_CASE("dice and mask losses: closed forms") {
  Mat g = Mat::Zero(5, 5);
  g.block(1, 1, 3, 3).setOnes();
  const std::vector<Index> cols{0, 1, 2, 3, 4};
  SUBCASE("perfect match: dice ≈ 0, BCE → 0") {
    CHECK(dice_loss(g, g, {1, 2, 3}) == doctest::Approx(0.0).epsilon(1e-6));
    Mat near = g.array() * (1 - 1e-9) + 1e-9 / 2;
    CHECK(mask_bce(near, g, cols) < 1e-6);
  }
  SUBCASE("prediction 0.5 everywhere gives BCE ln 2 for any target") {
    CHECK(mask_bce(Mat::Constant(5, 5, 0.5), g, cols) == doctest::Approx(std::log(2.0)));
    CHECK(bce(Mat::Constant(2, 3, 0.5), Mat::Zero(2, 3)) == doctest::Approx(0.6931).epsilon(1e-4));
  }
  SUBCASE("an all-zero target with zero prediction is a perfect dice match") {
    CHECK(dice_loss(Mat::Zero(4, 1), Mat::Zero(4, 1), {0}) == doctest::Approx(0.0));
  }
}

TEST_CASE("dice and BCE gradients match central differences") {
  for (uint64_t s = 0; s < 20; ++s) {
    Rng rng(s, 12);
    const Mat m = random_unit_interval(rng, 6, 6);
    Mat g = Mat::Zero(6, 6);
    for (Index i = 0; i < 6; ++i) g(i, i) = 1.0;
    g(2, 3) = g(3, 2) = 1.0;
    const std::vector<Index> cols{0, 2, 3, 5};
    Mat gd, gb;
    dice_loss(m, g, cols, kDiceEpsilon, &gd);
    mask_bce(m, g, cols, &gb);
    CHECK(relative_error(gd, numeric_gradient([&](const Mat& x) { return dice_loss(x, g, cols); }, m)) < 1e-6);
    CHECK(relative_error(gb, numeric_gradient([&](const Mat& x) { return mask_bce(x, g, cols); }, m)) < 1e-6);
  }
}

TEST_CASE("token contrastive loss: closed forms") {
  Mat z = Mat::Zero(2, 4);
  z(0, 0) = 1.0;
  z(1, 1) = 2.0;
  SUBCASE("all cosines 1 gives ln 3") {
    CHECK(token_contrastive_loss(z, z, z) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(std::log(3.0) == doctest::Approx(1.0986).epsilon(1e-4));
  }
  SUBCASE("cos(z̄,ẑ) = 1 and cos(z,ẑ) = −1") {
    const double e = std::exp(1.0);
    const double expected = -std::log(e / (e + 2.0 / e));
    CHECK(token_contrastive_loss(z, -z, z) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.2395).epsilon(1e-3));
  }
  SUBCASE("a zero row cannot define a cosine") {
    CHECK_THROWS_AS(token_contrastive_loss(z, z, Mat::Zero(2, 4)), DataError);
  }
}

TEST_CASE("token contrastive gradient matches central differences for all three inputs") {
  for (uint64_t s = 0; s < 20; ++s) {
    Rng rng(s, 13);
    const Mat zp = rng.normal_matrix(3, 5), zt = rng.normal_matrix(3, 5), zv = rng.normal_matrix(3, 5);
    TokenLossGrads g;
    token_contrastive_loss(zp, zt, zv, &g);
    CHECK(relative_error(g.prompt, numeric_gradient([&](const Mat& x) { return token_contrastive_loss(x, zt, zv); }, zp)) < 1e-6);
    CHECK(relative_error(g.text, numeric_gradient([&](const Mat& x) { return token_contrastive_loss(zp, x, zv); }, zt)) < 1e-6);
    CHECK(relative_error(g.video, numeric_gradient([&](const Mat& x) { return token_contrastive_loss(zp, zt, x); }, zv)) < 1e-6);
  }
}

TEST_CASE("background loss: closed forms") {
  const double delta = 0.1;
  SUBCASE("every cosine equal to the margin gives zero") {
    Mat bg = Mat::Zero(1, 4);
    bg(0, 0) = 1.0;
    Mat p = Mat::Zero(3, 4);
    for (Index j = 0; j < 3; ++j) {
      p(j, 0) = delta;
      p(j, j + 1) = std::sqrt(1 - delta * delta);
    }
    CHECK(background_loss(bg, p, delta) == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("C = 1 with cosine δ + 0.5 gives 0.25") {
    Mat bg = Mat::Zero(1, 2);
    bg(0, 0) = 1.0;
    const double c = delta + 0.5;
    Mat p(1, 2);
    p << c, std::sqrt(1 - c * c);
    CHECK(background_loss(bg, p, delta) == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("the margin must be a cosine") {
    CHECK_THROWS(background_loss(Mat::Ones(1, 2), Mat::Ones(1, 2), 1.5));
  }
}

TEST_CASE("background loss gradient matches central differences") {
  for (uint64_t s = 0; s < 20; ++s) {
    Rng rng(s, 14);
    const Mat bg = rng.normal_matrix(1, 5), p = rng.normal_matrix(3, 5);
    Mat gb, gp;
    background_loss(bg, p, 0.1, &gb, &gp);
    CHECK(relative_error(gb, numeric_gradient([&](const Mat& x) { return background_loss(x, p, 0.1); }, bg)) < 1e-6);
    CHECK(relative_error(gp, numeric_gradient([&](const Mat& x) { return background_loss(bg, x, 0.1); }, p)) < 1e-6);
  }
}

TEST_CASE("tape wrappers reproduce the pure loss values and gradients") {
  Rng rng(4, 15);
  const Mat zp = rng.normal_matrix(2, 3), zt = rng.normal_matrix(2, 3), zv = rng.normal_matrix(2, 3);
  TokenLossGrads g;
  const double v = token_contrastive_loss(zp, zt, zv, &g);
  ad::Tape tape;
  ad::Parameter p{"p", "g", zp, Mat(), true};
  const ad::Var out = ad::token_contrastive_loss(tape.param(p), tape.constant(zt), tape.constant(zv));
  CHECK(out.scalar() == v);
  tape.backward(out);
  CHECK(relative_error(tape.param(p).grad(), g.prompt) < 1e-15);
}

TEST_CASE("mask targets and supervised columns") {
  // two segments of classes 0 and 1, background label 2
  const std::vector<int> labels{2, 0, 0, 2, 1, 1, 1, 2};
  const Mat t = mask_targets(labels, 2);
  CHECK(t.col(0).sum() == 0.0);
  CHECK(t.col(1) == t.col(2));
  CHECK(t(1, 1) == 1.0);
  CHECK(t(2, 1) == 1.0);
  CHECK(t.col(1).sum() == 2.0);
  CHECK(t.col(5).sum() == 3.0);
  CHECK(t(4, 6) == 1.0);
  Rng rng(1);
  const auto cols = supervised_columns(labels, 2, rng);
  CHECK(cols.size() == 8u);  // 5 foreground + all 3 background
  std::vector<int> more(20, 2);
  more[4] = 0;
  const auto few = supervised_columns(more, 2, rng);
  CHECK(few.size() == 2u);
  CHECK(std::is_sorted(few.begin(), few.end()));
  CHECK(std::find(few.begin(), few.end(), 4) != few.end());
}
