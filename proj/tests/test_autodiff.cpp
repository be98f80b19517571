// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "mmfs/nn.hpp"
#include "support.hpp"

using namespace mmfs;
using namespace mmfs::testing;
namespace ad = mmfs::ad;
using ad::Var;

namespace {

/// Random weighted sum of every output entry, so each entry's gradient is
/// exercised with a different coefficient.
Var weighted_sum(ad::Tape&, const Var& y, uint64_t seed) {
  Rng rng(seed, 99);
  return ad::sum(ad::mul_const(y, rng.normal_matrix(y.rows(), y.cols())));
}

void check_unary(const char* name, const std::function<Var(ad::Tape&, const Var&)>& op, Index rows,
                 Index cols, double scale = 1.0, double tol = 1e-6) {
  for (uint64_t s = 0; s < 5; ++s) {
    Rng rng(s, 1);
    const Mat x = rng.normal_matrix(rows, cols, scale);
    const double err =
        tape_gradcheck([&](ad::Tape& t, const Var& v) { return weighted_sum(t, op(t, v), s); }, x);
    INFO(name, " seed ", s);
    CHECK(err < tol);
  }
}

}  // namespace

TEST_CASE("elementwise and reshaping ops match finite differences") {
  check_unary("gelu", [](ad::Tape&, const Var& x) { return ad::gelu(x); }, 4, 3);
  check_unary("sigmoid", [](ad::Tape&, const Var& x) { return ad::sigmoid(x); }, 4, 3);
  check_unary("tanh", [](ad::Tape&, const Var& x) { return ad::tanh(x); }, 4, 3);
  check_unary("softmax_rows", [](ad::Tape&, const Var& x) { return ad::softmax_rows(x); }, 4, 5);
  check_unary("l2_normalize_rows", [](ad::Tape&, const Var& x) { return ad::l2_normalize_rows(x); }, 4, 5);
  check_unary("transpose", [](ad::Tape&, const Var& x) { return ad::transpose(x); }, 3, 5);
  check_unary("scale", [](ad::Tape&, const Var& x) { return ad::scale(x, -1.7); }, 3, 2);
  check_unary("add_scalar", [](ad::Tape&, const Var& x) { return ad::mul(x, ad::add_scalar(x, 0.3)); }, 3, 2);
  check_unary("mean_rows", [](ad::Tape&, const Var& x) { return ad::mean_rows(x); }, 5, 3);
  check_unary("repeat_rows", [](ad::Tape&, const Var& x) { return ad::repeat_rows(ad::slice_rows(x, 1, 1), 4); },
              3, 4);
  check_unary("slice_cols", [](ad::Tape&, const Var& x) { return ad::slice_cols(x, 1, 2); }, 3, 4);
  check_unary("gather_rows", [](ad::Tape&, const Var& x) { return ad::gather_rows(x, {2, 0, 2}); }, 3, 4);
  check_unary("shift_rows", [](ad::Tape&, const Var& x) { return ad::shift_rows(x, -1); }, 5, 3);
  check_unary("shift_cols", [](ad::Tape&, const Var& x) { return ad::shift_cols(x, 2); }, 3, 5);
  check_unary("concat", [](ad::Tape&, const Var& x) {
    return ad::concat_cols({ad::concat_rows({x, ad::scale(x, 2.0)}), ad::concat_rows({x, x})});
  }, 3, 2);
}

TEST_CASE("relu matches finite differences away from the kink") {
  Rng rng(3, 1);
  Mat x = rng.normal_matrix(4, 4);
  x = x.array() + x.array().sign() * 0.1;  // keep entries off zero
  CHECK(tape_gradcheck([](ad::Tape& t, const Var& v) { return weighted_sum(t, ad::relu(v), 1); }, x) < 1e-6);
}

TEST_CASE("binary and broadcast ops match finite differences") {
  Rng rng(11, 2);
  const Mat b = rng.normal_matrix(4, 3);
  const Mat row = rng.normal_matrix(1, 3);
  const Mat col = rng.normal_matrix(3, 1);
  const Mat w = rng.normal_matrix(3, 5);
  auto check = [&](const char* name, const std::function<Var(ad::Tape&, const Var&)>& op, const Mat& x) {
    INFO(name);
    CHECK(tape_gradcheck([&](ad::Tape& t, const Var& v) { return weighted_sum(t, op(t, v), 7); }, x) < 1e-6);
  };
  const Mat x = rng.normal_matrix(4, 3);
  check("matmul left", [&](ad::Tape& t, const Var& v) { return ad::matmul(v, t.constant(w)); }, x);
  check("matmul right", [&](ad::Tape& t, const Var& v) { return ad::matmul(t.constant(b), v); }, col * row);
  check("matmul_nt", [&](ad::Tape& t, const Var& v) { return ad::matmul_nt(v, t.constant(b)); }, x);
  check("matmul_nt self", [&](ad::Tape&, const Var& v) { return ad::matmul_nt(v, v); }, x);
  check("add", [&](ad::Tape& t, const Var& v) { return ad::add(v, t.constant(b)); }, x);
  check("sub", [&](ad::Tape& t, const Var& v) { return ad::sub(t.constant(b), v); }, x);
  check("mul", [&](ad::Tape& t, const Var& v) { return ad::mul(v, ad::add(v, t.constant(b))); }, x);
  check("add_n", [&](ad::Tape&, const Var& v) { return ad::add_n({v, v, ad::scale(v, 3.0)}); }, x);
  check("add_row", [&](ad::Tape& t, const Var& v) { return ad::add_row(t.constant(b), v); }, row);
  check("mul_row", [&](ad::Tape& t, const Var& v) { return ad::mul_row(t.constant(b), v); }, row);
  check("mul_row both", [&](ad::Tape& t, const Var& v) { return ad::mul_row(v, t.constant(row)); }, x);
  check("add_col", [&](ad::Tape& t, const Var& v) { return ad::add_col(t.constant(b.topRows(3)), v); }, col);
  check("mul_col", [&](ad::Tape& t, const Var& v) { return ad::mul_col(t.constant(b.topRows(3)), v); }, col);
  check("layer_norm input", [&](ad::Tape& t, const Var& v) {
    return ad::layer_norm_rows(v, t.constant(row), t.constant(row.array() * 0.5));
  }, x);
  check("layer_norm gamma", [&](ad::Tape& t, const Var& v) {
    return ad::layer_norm_rows(t.constant(b), v, t.constant(row));
  }, row);
}

TEST_CASE("gradients accumulate over repeated use of a parameter") {
  ad::Parameter p{"p", "g", Mat::Constant(1, 1, 3.0), Mat(), true};
  ad::Tape tape;
  const Var a = tape.param(p);
  const Var b = tape.param(p);
  CHECK(a.id() == b.id());
  const Var y = ad::mul(a, b);  // p²
  tape.backward(y);
  CHECK(a.grad()(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("frozen parameters pass gradients through but receive none") {
  ad::Parameter frozen{"w", "g", Mat::Constant(1, 1, 2.0), Mat(), false};
  ad::Parameter live{"x", "g", Mat::Constant(1, 1, 5.0), Mat(), true};
  ad::Tape tape;
  const Var w = tape.param(frozen);
  const Var x = tape.param(live);
  CHECK_FALSE(w.requires_grad());
  tape.backward(ad::mul(w, x));
  CHECK(x.grad()(0, 0) == doctest::Approx(2.0));
  CHECK(w.grad().size() == 0);
}

TEST_CASE("layers compose and attention bias removes positions") {
  ParameterStore store;
  Rng rng(5);
  const auto attn = Attention::create(store, "a", "g", 4, rng);
  ad::Tape tape;
  const Mat q = rng.normal_matrix(2, 4);
  Mat kv = rng.normal_matrix(3, 4);
  Mat bias = Mat::Zero(2, 3);
  bias.col(2).setConstant(kMaskedScore);
  const Mat out1 = attn(tape, tape.constant(q), tape.constant(kv), &bias).value();
  kv.row(2).setConstant(100.0);  // the masked key/value must not matter
  const Mat out2 = attn(tape, tape.constant(q), tape.constant(kv), &bias).value();
  CHECK((out1 - out2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("parameter store groups and trainable flags") {
  ParameterStore store;
  store.add("a.w", "alpha", Mat::Zero(2, 2));
  store.add("b.w", "beta", Mat::Zero(1, 3));
  store.add("b.v", "beta", Mat::Zero(1, 1));
  CHECK(store.count("beta") == 4);
  store.set_trainable_groups({"alpha"});
  CHECK(store.find("a.w")->trainable);
  CHECK_FALSE(store.find("b.w")->trainable);
  CHECK(store.find("missing") == nullptr);
  CHECK_THROWS(store.add("a.w", "alpha", Mat::Zero(1, 1)));
}

TEST_CASE("the transformer block has no positional encoding: self-attention is permutation-equivariant") {
  ParameterStore store;
  Rng rng(8);
  const auto block = TransformerBlock::create(store, "t", "g", 6, 12, rng);
  const Mat x = rng.normal_matrix(7, 6);
  std::vector<Index> perm{3, 0, 6, 1, 5, 2, 4};
  Mat px(7, 6);
  for (Index i = 0; i < 7; ++i) px.row(i) = x.row(perm[static_cast<size_t>(i)]);
  ad::Tape tape;
  const Mat y = block.self_attend(tape, tape.constant(x)).value();
  const Mat py = block.self_attend(tape, tape.constant(px)).value();
  for (Index i = 0; i < 7; ++i) CHECK((py.row(i) - y.row(perm[static_cast<size_t>(i)])).norm() < 1e-12);
}
