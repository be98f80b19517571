// SPDX-License-Identifier: Apache-2.0
//
// Support-conditioned query regulation. Action queries built from the query
// video decode a foreground mask over every support shot; the binarized
// foreground, averaged over shots, is appended to the query features as the
// key/value memory of one cross-attention block.

#pragma once

#include <vector>

#include "mmfs/encoders.hpp"

namespace mmfs {

/// Soft mask 𝓛̂ of one shot and its thresholded copy.
struct ForegroundMask {
  Var soft;                 // 1 × L, in (0, 1)
  Eigen::VectorXd binary;   // L entries in {0, 1}
  double threshold = 0.5;
  bool fell_back = false;   // no location passed the threshold
};

/// binary[t] = soft[t] ≥ threshold.
Eigen::VectorXd binarize(const Mat& soft_row, double threshold);

/// Zeroes the rows of `shot` (L × D) whose mask entry is 0. An all-zero mask
/// keeps the shot unmasked and logs a warning.
Var retrieve_foreground(const Var& shot, const ForegroundMask& mask);

/// Ē_q = cross_attention(E_q, [E_q; mean_k E_s^fg]). Keys/values have 2L rows.
Var regulate_query(Tape& tape, const Var& query, const std::vector<Var>& foreground,
                   const TransformerBlock& block);

struct RegulationResult {
  Var regulated;                        // Ē_q, L × D
  std::vector<Var> query_masks;         // 𝓛_q per shot, N_q × L
  std::vector<ForegroundMask> masks;    // 𝓛̂ per shot
};

class QueryRegulator {
 public:
  QueryRegulator() = default;
  QueryRegulator(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

  /// Q_act: N_q × D, from the time-pooled query features.
  Var action_queries(Tape& tape, const Var& query) const;

  /// 𝓛_q = sigmoid(B_q E_sᵀ) for one shot, N_q × L, after the masked-attention
  /// decoder layers.
  Var decode_support_masks(Tape& tape, const Var& queries, const Var& shot) const;

  /// 𝓛̂ = sigmoid(w · 𝓛_q + b), 1 × L.
  Var weigh_queries(Tape& tape, const Var& query_masks) const;

  /// Full pass over every support shot of the episode. With masking disabled
  /// the query features are returned unchanged and no masks are produced.
  RegulationResult operator()(Tape& tape, const Var& query, const std::vector<Var>& shots) const;

  bool enabled() const { return enabled_; }
  int num_queries() const { return num_queries_; }

 private:
  bool enabled_ = true;
  int num_queries_ = 8;
  double bin_threshold_ = 0.5;
  Linear act_fc1_, act_fc2_;
  Parameter* query_embed_ = nullptr;
  std::vector<TransformerBlock> layers_;
  Linear embed_fc1_, embed_fc2_;
  Parameter* query_weight_ = nullptr;  // 1 × N_q
  Parameter* query_bias_ = nullptr;    // 1 × 1
  TransformerBlock regulator_;
};

}  // namespace mmfs
