// SPDX-License-Identifier: Apache-2.0

#include "mmfs/nn.hpp"

#include <algorithm>
#include <cmath>

#include "mmfs/errors.hpp"

namespace mmfs {

Parameter& ParameterStore::add(std::string name, std::string group, Mat init) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->group = std::move(group);
  p->value = std::move(init);
  p->zero_grad();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterStore::set_trainable_groups(const std::vector<std::string>& groups) {
  for (auto& p : params_) {
    p->trainable = std::find(groups.begin(), groups.end(), p->group) != groups.end();
  }
}

size_t ParameterStore::count(std::string_view group) const {
  size_t n = 0;
  for (const auto& p : params_) {
    if (p->group == group) n += static_cast<size_t>(p->value.size());
  }
  return n;
}

Linear Linear::create(ParameterStore& store, const std::string& name, const std::string& group,
                      Index in, Index out, Rng& rng, double gain) {
  Linear l;
  Mat w = gain == 0.0 ? Mat::Zero(in, out)
                      : rng.normal_matrix(in, out, gain / std::sqrt(static_cast<double>(in)));
  l.weight = &store.add(name + ".weight", group, std::move(w));
  l.bias = &store.add(name + ".bias", group, Mat::Zero(1, out));
  return l;
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  return ad::add_row(ad::matmul(x, tape.param(*weight)), tape.param(*bias));
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name,
                            const std::string& group, Index dim) {
  LayerNorm n;
  n.gamma = &store.add(name + ".gamma", group, Mat::Ones(1, dim));
  n.beta = &store.add(name + ".beta", group, Mat::Zero(1, dim));
  return n;
}

Var LayerNorm::operator()(Tape& tape, const Var& x) const {
  return ad::layer_norm_rows(x, tape.param(*gamma), tape.param(*beta));
}

Attention Attention::create(ParameterStore& store, const std::string& name,
                            const std::string& group, Index dim, Rng& rng) {
  Attention a;
  a.query = Linear::create(store, name + ".q", group, dim, dim, rng);
  a.key = Linear::create(store, name + ".k", group, dim, dim, rng);
  a.value = Linear::create(store, name + ".v", group, dim, dim, rng);
  a.out = Linear::create(store, name + ".o", group, dim, dim, rng);
  return a;
}

Var Attention::operator()(Tape& tape, const Var& q_in, const Var& kv_in, const Mat* bias) const {
  const Var q = query(tape, q_in);
  const Var k = key(tape, kv_in);
  const Var v = value(tape, kv_in);
  Var scores = ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (bias != nullptr) scores = ad::add_const(scores, *bias);
  const Var weights = ad::softmax_rows(scores);
  return out(tape, ad::matmul(weights, v));
}

FeedForward FeedForward::create(ParameterStore& store, const std::string& name,
                                const std::string& group, Index dim, Index hidden, Rng& rng) {
  FeedForward f;
  f.fc1 = Linear::create(store, name + ".fc1", group, dim, hidden, rng);
  f.fc2 = Linear::create(store, name + ".fc2", group, hidden, dim, rng);
  return f;
}

Var FeedForward::operator()(Tape& tape, const Var& x) const {
  return fc2(tape, ad::gelu(fc1(tape, x)));
}

TransformerBlock TransformerBlock::create(ParameterStore& store, const std::string& name,
                                          const std::string& group, Index dim, Index hidden,
                                          Rng& rng) {
  TransformerBlock b;
  b.norm_q = LayerNorm::create(store, name + ".norm_q", group, dim);
  b.norm_kv = LayerNorm::create(store, name + ".norm_kv", group, dim);
  b.norm_ff = LayerNorm::create(store, name + ".norm_ff", group, dim);
  b.attn = Attention::create(store, name + ".attn", group, dim, rng);
  b.ff = FeedForward::create(store, name + ".ff", group, dim, hidden, rng);
  return b;
}

Var TransformerBlock::self_attend(Tape& tape, const Var& x, const Mat* bias) const {
  const Var h = norm_q(tape, x);
  const Var y = ad::add(x, attn(tape, h, h, bias));
  return ad::add(y, ff(tape, norm_ff(tape, y)));
}

Var TransformerBlock::cross_attend(Tape& tape, const Var& x, const Var& memory,
                                   const Mat* bias) const {
  const Var y = ad::add(x, attn(tape, norm_q(tape, x), norm_kv(tape, memory), bias));
  return ad::add(y, ff(tape, norm_ff(tape, y)));
}

}  // namespace mmfs
