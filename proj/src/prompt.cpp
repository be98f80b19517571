// SPDX-License-Identifier: Apache-2.0

#include "mmfs/prompt.hpp"

#include "mmfs/errors.hpp"

namespace mmfs {

SemanticsTokenizer::SemanticsTokenizer(ParameterStore& store, const ModelConfig& cfg, Rng& rng)
    : kind_(cfg.tokenizer), tokens_(cfg.tokens_per_class) {
  if (tokens_ < 1) throw ConfigError("model.tokens_per_class must be at least 1");
  const std::string g = group::kTokenizer;
  if (kind_ == TokenizerKind::kSetAttention) {
    set_block_ = TransformerBlock::create(store, "tokenizer.set", g, cfg.dim, cfg.ff_hidden, rng);
    pool_block_ = TransformerBlock::create(store, "tokenizer.pool", g, cfg.dim, cfg.ff_hidden, rng);
    seeds_ = &store.add("tokenizer.seeds", g, rng.normal_matrix(tokens_, cfg.dim));
    to_token_space_ = Linear::create(store, "tokenizer.out", g, cfg.dim, cfg.dim, rng);
  } else {
    for (int j = 0; j < 3; ++j) {
      taps_.push_back(Linear::create(store, "tokenizer.conv.tap" + std::to_string(j), g, cfg.dim,
                                     cfg.dim, rng, 1.0 / std::sqrt(3.0)));
    }
    for (int t = 0; t < tokens_; ++t) {
      token_heads_.push_back(
          Linear::create(store, "tokenizer.head" + std::to_string(t), g, cfg.dim, cfg.dim, rng));
    }
  }
}

Var gather_foreground(const SupportFeatures& support) {
  std::vector<Var> parts;
  for (size_t k = 0; k < support.masked.size(); ++k) {
    std::vector<Index> rows;
    const auto& m = support.masks[k];
    for (Index t = 0; t < m.size(); ++t) {
      if (m(t) != 0.0) rows.push_back(t);
    }
    if (!rows.empty()) parts.push_back(ad::gather_rows(support.masked[k], rows));
  }
  if (parts.empty()) throw EmptySupportMask("support set has no foreground snippets");
  return parts.size() == 1 ? parts.front() : ad::concat_rows(parts);
}

Var SemanticsTokenizer::pool_set(Tape& tape, const Var& set) const {
  if (!set.value().allFinite()) throw NumericalError("tokenizer input is not finite");
  if (kind_ == TokenizerKind::kSetAttention) {
    const Var h = set_block_.self_attend(tape, set);
    const Var pooled = pool_block_.cross_attend(tape, tape.param(*seeds_), h);
    return to_token_space_(tape, pooled);
  }
  std::vector<Var> conv;
  for (int j = 0; j < 3; ++j) conv.push_back(taps_[static_cast<size_t>(j)](tape, ad::shift_rows(set, j - 1)));
  const Var pooled = ad::mean_rows(ad::gelu(ad::add_n(conv)));
  std::vector<Var> tokens;
  for (const auto& head : token_heads_) tokens.push_back(head(tape, pooled));
  return tokens.size() == 1 ? tokens.front() : ad::concat_rows(tokens);
}

Var SemanticsTokenizer::operator()(Tape& tape, const SupportFeatures& support) const {
  if (support.masked.empty()) throw DataError("tokenizer needs at least one support shot");
  for (const auto& s : support.masked) {
    if (!s.value().allFinite()) throw NumericalError("tokenizer input is not finite");
  }
  if (kind_ == TokenizerKind::kSetAttention) return pool_set(tape, gather_foreground(support));

  // 1-D CNN: convolve each shot along time, then average the foreground.
  std::vector<Var> rows;
  for (size_t k = 0; k < support.masked.size(); ++k) {
    const Var& x = support.masked[k];
    std::vector<Var> conv;
    for (int j = 0; j < 3; ++j) conv.push_back(taps_[static_cast<size_t>(j)](tape, ad::shift_rows(x, j - 1)));
    const Var y = ad::gelu(ad::add_n(conv));
    std::vector<Index> fg;
    for (Index t = 0; t < support.masks[k].size(); ++t) {
      if (support.masks[k](t) != 0.0) fg.push_back(t);
    }
    if (!fg.empty()) rows.push_back(ad::gather_rows(y, fg));
  }
  if (rows.empty()) throw EmptySupportMask("support set has no foreground snippets");
  const Var pooled = ad::mean_rows(rows.size() == 1 ? rows.front() : ad::concat_rows(rows));
  std::vector<Var> tokens;
  for (const auto& head : token_heads_) tokens.push_back(head(tape, pooled));
  return tokens.size() == 1 ? tokens.front() : ad::concat_rows(tokens);
}

Var assemble_prompt(const Var& context, const Var& class_tokens, int max_tokens) {
  const Index n = context.rows() + class_tokens.rows() + 1;
  if (n > max_tokens) {
    throw PromptTooLong("prompt needs " + std::to_string(n) + " tokens including end-of-text; limit is " +
                        std::to_string(max_tokens));
  }
  return ad::concat_rows({context, class_tokens});
}

Var encode_prompts(Tape& tape, const std::vector<Var>& prompts, const TextEncoder& text) {
  if (prompts.empty()) throw DataError("no prompts to encode");
  std::vector<Var> rows;
  for (const auto& p : prompts) rows.push_back(text.encode(tape, p));
  return ad::l2_normalize_rows(rows.size() == 1 ? rows.front() : ad::concat_rows(rows));
}

Var build_prototypes(const Var& class_rows, const Var& background) {
  return ad::concat_rows({class_rows, ad::l2_normalize_rows(background)});
}

PromptLearner::PromptLearner(ParameterStore& store, const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg), tokenizer_(store, cfg, rng) {
  placeholders_ = &store.add("prompt.placeholders", group::kPrompt,
                             rng.normal_matrix(cfg.placeholder_tokens, cfg.dim));
  learned_context_ = &store.add("prompt.learned_context", group::kPrompt,
                                rng.normal_matrix(cfg.tokens_per_class, cfg.dim));
  Mat bg = rng.normal_matrix(1, cfg.dim);
  background_ = &store.add("prompt.background", group::kBackground, bg / bg.norm());
  video_proj_ = Linear::create(store, "prompt.video_proj", group::kVideoEmbed, cfg.dim, cfg.dim, rng);
}

Var PromptLearner::video_embedding(Tape& tape, const SupportFeatures& support) const {
  return ad::l2_normalize_rows(video_proj_(tape, ad::mean_rows(gather_foreground(support))));
}

PromptOutputs PromptLearner::operator()(Tape& tape, Mode mode,
                                        const std::vector<std::string>& class_names,
                                        const std::vector<SupportFeatures>& support,
                                        const TextEncoder& text) const {
  const size_t n = class_names.size();
  if (n == 0) throw DataError("prompt learner needs at least one class");
  if (mode != Mode::kZS && support.size() != n) {
    throw DataError("prompt learner needs support features for every class");
  }

  PromptOutputs out;
  if (mode != Mode::kZS) {
    if (cfg_.context_source == ContextSource::kLearned) {
      out.contexts.assign(n, tape.param(*learned_context_));
    } else if (cfg_.prompt_sharing == PromptSharing::kClassGeneric) {
      std::vector<Var> sets;
      for (const auto& s : support) sets.push_back(gather_foreground(s));
      out.contexts.assign(n, tokenizer_.pool_set(tape, ad::concat_rows(sets)));
    } else {
      for (const auto& s : support) out.contexts.push_back(tokenizer_(tape, s));
    }
    std::vector<Var> embeds;
    for (const auto& s : support) embeds.push_back(video_embedding(tape, s));
    out.video_embed = n == 1 ? embeds.front() : ad::concat_rows(embeds);
  }

  // FS mode never reads class names.
  std::vector<Var> names;
  if (mode != Mode::kFS) {
    for (const auto& name : class_names) names.push_back(text.embed_class_name(tape, name));
  }

  if (mode != Mode::kFS) out.text_only = encode_prompts(tape, names, text);

  if (mode == Mode::kZS) {
    out.class_rows = out.text_only;
  } else {
    std::vector<Var> prompts;
    const Var placeholders = tape.param(*placeholders_);
    for (size_t c = 0; c < n; ++c) {
      const Var& tail = mode == Mode::kFS ? placeholders : names[c];
      prompts.push_back(assemble_prompt(out.contexts[c], tail, text.max_tokens()));
    }
    out.class_rows = encode_prompts(tape, prompts, text);
  }
  out.background = ad::l2_normalize_rows(tape.param(*background_));
  out.prototypes = ad::concat_rows({out.class_rows, out.background});
  return out;
}

}  // namespace mmfs
