// SPDX-License-Identifier: Apache-2.0

#include "mmfs/regulation.hpp"

#include <atomic>

#include <spdlog/spdlog.h>

#include "mmfs/errors.hpp"

namespace mmfs {

Eigen::VectorXd binarize(const Mat& soft_row, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("model.bin_threshold must lie in (0, 1)");
  }
  Eigen::VectorXd out(soft_row.size());
  for (Index t = 0; t < soft_row.size(); ++t) out(t) = soft_row(t) >= threshold ? 1.0 : 0.0;
  return out;
}

Var retrieve_foreground(const Var& shot, const ForegroundMask& mask) {
  if (mask.binary.size() != shot.rows()) {
    throw ShapeError("foreground mask has " + std::to_string(mask.binary.size()) +
                     " entries for a " + std::to_string(shot.rows()) + "-snippet shot");
  }
  if (mask.binary.sum() == 0.0) return shot;
  return ad::mul_col(shot, shot.tape()->constant(mask.binary));
}

Var regulate_query(Tape& tape, const Var& query, const std::vector<Var>& foreground,
                   const TransformerBlock& block) {
  if (foreground.empty()) throw ShapeError("query regulation needs at least one support shot");
  for (const auto& f : foreground) {
    if (f.rows() != query.rows() || f.cols() != query.cols()) {
      throw ShapeError("support foreground and query features differ in shape");
    }
  }
  const Var mean = ad::scale(ad::add_n(foreground), 1.0 / static_cast<double>(foreground.size()));
  return block.cross_attend(tape, query, ad::concat_rows({query, mean}));
}

QueryRegulator::QueryRegulator(ParameterStore& store, const ModelConfig& cfg, Rng& rng)
    : enabled_(cfg.query_masking), num_queries_(cfg.num_queries), bin_threshold_(cfg.bin_threshold) {
  if (num_queries_ < 1) throw ConfigError("model.num_queries must be at least 1");
  if (cfg.decoder_layers < 1) throw ConfigError("model.decoder_layers must be at least 1");
  binarize(Mat::Zero(1, 1), bin_threshold_);  // validates the threshold
  const std::string g = group::kDecoder;
  act_fc1_ = Linear::create(store, "decoder.act_fc1", g, cfg.dim, cfg.dim, rng);
  act_fc2_ = Linear::create(store, "decoder.act_fc2", g, cfg.dim, cfg.dim, rng);
  query_embed_ = &store.add("decoder.query_embed", g, rng.normal_matrix(num_queries_, cfg.dim, 0.5));
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    layers_.push_back(TransformerBlock::create(store, "decoder.layer" + std::to_string(l), g, cfg.dim,
                                               cfg.ff_hidden, rng));
  }
  embed_fc1_ = Linear::create(store, "decoder.mask_fc1", g, cfg.dim, cfg.dim, rng);
  embed_fc2_ = Linear::create(store, "decoder.mask_fc2", g, cfg.dim, cfg.dim, rng,
                              1.0 / std::sqrt(static_cast<double>(cfg.dim)));
  // Starts as a steep average of the query masks: sigmoid(8 · (mean − 0.5)).
  query_weight_ = &store.add("decoder.query_weight", g,
                             Mat::Constant(1, num_queries_, 8.0 / num_queries_));
  query_bias_ = &store.add("decoder.query_bias", g, Mat::Constant(1, 1, -4.0));
  regulator_ = TransformerBlock::create(store, "regulator", group::kRegulator, cfg.dim, cfg.ff_hidden, rng);
}

Var QueryRegulator::action_queries(Tape& tape, const Var& query) const {
  const Var pooled = act_fc2_(tape, ad::gelu(act_fc1_(tape, ad::mean_rows(query))));
  return ad::add(ad::repeat_rows(pooled, num_queries_), tape.param(*query_embed_));
}

Var QueryRegulator::decode_support_masks(Tape& tape, const Var& queries, const Var& shot) const {
  if (queries.cols() != shot.cols()) throw ShapeError("action queries and support features differ in width");
  auto masks = [&](const Var& x) {
    const Var b = embed_fc2_(tape, ad::gelu(embed_fc1_(tape, x)));
    return ad::sigmoid(ad::matmul_nt(b, shot));
  };
  Var x = queries;
  for (size_t l = 0; l < layers_.size(); ++l) {
    if (l == 0) {
      x = layers_[l].cross_attend(tape, x, shot);
      continue;
    }
    // Later layers only look at locations the previous layer called foreground.
    const Mat prev = masks(x).value();
    Mat bias = Mat::Zero(prev.rows(), prev.cols());
    for (Index i = 0; i < prev.rows(); ++i) {
      if ((prev.row(i).array() >= 0.5).any()) {
        for (Index t = 0; t < prev.cols(); ++t) {
          if (prev(i, t) < 0.5) bias(i, t) = kMaskedScore;
        }
      }
    }
    x = layers_[l].cross_attend(tape, x, shot, &bias);
  }
  return masks(x);
}

Var QueryRegulator::weigh_queries(Tape& tape, const Var& query_masks) const {
  if (query_masks.rows() != num_queries_) {
    throw ShapeError("expected " + std::to_string(num_queries_) + " query masks, got " +
                     std::to_string(query_masks.rows()));
  }
  const Var weighted = ad::matmul(tape.param(*query_weight_), query_masks);
  const Var bias = ad::matmul(tape.param(*query_bias_), tape.constant(Mat::Ones(1, query_masks.cols())));
  return ad::sigmoid(ad::add(weighted, bias));
}

RegulationResult QueryRegulator::operator()(Tape& tape, const Var& query,
                                            const std::vector<Var>& shots) const {
  RegulationResult out;
  if (!enabled_ || shots.empty()) {
    out.regulated = query;
    return out;
  }
  const Var queries = action_queries(tape, query);
  std::vector<Var> foreground;
  for (const auto& shot : shots) {
    if (shot.rows() != query.rows()) throw ShapeError("support and query timelines differ in length");
    Var lq = decode_support_masks(tape, queries, shot);
    ForegroundMask m;
    m.soft = weigh_queries(tape, lq);
    m.threshold = bin_threshold_;
    m.binary = binarize(m.soft.value(), bin_threshold_);
    if (m.binary.sum() == 0.0) {
      m.fell_back = true;
      static std::atomic<bool> warned{false};
      if (!warned.exchange(true)) {
        spdlog::warn("representation mask is empty for a support shot; using the unmasked features");
      }
    }
    foreground.push_back(retrieve_foreground(shot, m));
    out.query_masks.push_back(std::move(lq));
    out.masks.push_back(std::move(m));
  }
  out.regulated = regulate_query(tape, query, foreground, regulator_);
  return out;
}

}  // namespace mmfs
