// SPDX-License-Identifier: Apache-2.0
//
// Parameter storage and the small set of layers every module is built from.

#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mmfs/autodiff.hpp"
#include "mmfs/random.hpp"

namespace mmfs {

using ad::Parameter;
using ad::Tape;
using ad::Var;

/// Owns every parameter of a model in creation order. Addresses are stable.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& add(std::string name, std::string group, Mat init);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;

  const std::vector<std::unique_ptr<Parameter>>& params() const { return params_; }

  void zero_grad();
  /// Marks every parameter trainable iff its group is listed.
  void set_trainable_groups(const std::vector<std::string>& groups);
  /// Number of scalar entries in `group`.
  size_t count(std::string_view group) const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct Linear {
  Parameter* weight = nullptr;  // in × out
  Parameter* bias = nullptr;    // 1 × out

  /// Weights drawn from N(0, gain²/in); `gain == 0` yields all-zero weights and bias.
  static Linear create(ParameterStore& store, const std::string& name, const std::string& group,
                       Index in, Index out, Rng& rng, double gain = 1.0);

  Var operator()(Tape& tape, const Var& x) const;
  Index in() const { return weight->value.rows(); }
  Index out() const { return weight->value.cols(); }
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static LayerNorm create(ParameterStore& store, const std::string& name, const std::string& group,
                          Index dim);
  Var operator()(Tape& tape, const Var& x) const;
};

/// Single-head scaled dot-product attention with input/output projections.
struct Attention {
  Linear query, key, value, out;

  static Attention create(ParameterStore& store, const std::string& name, const std::string& group,
                          Index dim, Rng& rng);
  /// `bias` is added to the n×m score matrix before the softmax (use a large
  /// negative number to exclude a position).
  Var operator()(Tape& tape, const Var& q_in, const Var& kv_in, const Mat* bias = nullptr) const;
};

struct FeedForward {
  Linear fc1, fc2;

  static FeedForward create(ParameterStore& store, const std::string& name,
                            const std::string& group, Index dim, Index hidden, Rng& rng);
  Var operator()(Tape& tape, const Var& x) const;
};

/// Pre-norm transformer block. No positional encoding anywhere.
struct TransformerBlock {
  LayerNorm norm_q, norm_kv, norm_ff;
  Attention attn;
  FeedForward ff;

  static TransformerBlock create(ParameterStore& store, const std::string& name,
                                 const std::string& group, Index dim, Index hidden, Rng& rng);

  Var self_attend(Tape& tape, const Var& x, const Mat* bias = nullptr) const;
  Var cross_attend(Tape& tape, const Var& x, const Var& memory, const Mat* bias = nullptr) const;
};

/// Additive bias value that removes a position from a softmax.
inline constexpr double kMaskedScore = -1e9;

}  // namespace mmfs
