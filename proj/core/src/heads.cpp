#include "strel/heads.hpp"

#include <cmath>

#include "strel/error.hpp"
#include "strel/ops.hpp"

namespace strel {

void HeadConfig::validate() const {
  if (num_classes < 1) throw ConfigError("HeadConfig: num_classes must be >= 1");
  if (type == HeadType::SOnly && use_memory) {
    throw ConfigError("HeadConfig: the s_only head does not support a memory bank");
  }
}

namespace {

void check_persons(const std::vector<PersonFeature>& persons) {
  if (persons.empty()) throw ValueError("relation head: degenerate input, no persons");
  const Shape& first = persons[0].values.shape();
  if (first.size() != 4) throw ShapeError("relation head: person features must be CxTxhxw");
  for (const PersonFeature& p : persons) {
    if (p.values.shape() != first) {
      throw ShapeError(msg("relation head: person feature shapes differ: ", shape_str(first),
                           " vs ", shape_str(p.values.shape())));
    }
  }
}

ops::Reduce to_reduce(Agg agg) { return agg == Agg::Mean ? ops::Reduce::Mean : ops::Reduce::Max; }

}  // namespace

std::vector<TokenSequence> build_tokens_s_only(const std::vector<PersonFeature>& persons,
                                               Agg agg) {
  check_persons(persons);
  const Shape& s = persons[0].values.shape();
  const std::size_t c = s[0], cells = s[2] * s[3];
  std::vector<Tensor> per_person;  // [cells x C] each
  per_person.reserve(persons.size());
  for (const PersonFeature& p : persons) {
    Tensor r = ops::reduce(p.values, {1}, to_reduce(agg));  // [C x h x w]
    per_person.push_back(ops::transpose2d(ops::reshape(r, {c, cells})));
  }
  std::vector<TokenSequence> seqs;
  seqs.reserve(cells);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    std::vector<Tensor> rows;
    rows.reserve(persons.size());
    std::vector<int> sources;
    for (std::size_t i = 0; i < persons.size(); ++i) {
      rows.push_back(ops::slice(per_person[i], 0, cell, 1));
      sources.push_back(persons[i].person_index);
    }
    seqs.push_back(TokenSequence{ops::concat(rows, 0), std::move(sources)});
  }
  return seqs;
}

std::vector<TokenSequence> build_tokens_t_only(const std::vector<PersonFeature>& persons,
                                               Agg agg) {
  check_persons(persons);
  const Shape& s = persons[0].values.shape();
  const std::size_t t = s[1];
  std::vector<Tensor> per_person;  // [T x C] each
  per_person.reserve(persons.size());
  for (const PersonFeature& p : persons) {
    Tensor r = ops::reduce(p.values, {2, 3}, to_reduce(agg));  // [C x T]
    per_person.push_back(ops::transpose2d(r));
  }
  std::vector<TokenSequence> seqs;
  seqs.reserve(t);
  for (std::size_t ti = 0; ti < t; ++ti) {
    std::vector<Tensor> rows;
    rows.reserve(persons.size());
    std::vector<int> sources;
    for (std::size_t i = 0; i < persons.size(); ++i) {
      rows.push_back(ops::slice(per_person[i], 0, ti, 1));
      sources.push_back(persons[i].person_index);
    }
    seqs.push_back(TokenSequence{ops::concat(rows, 0), std::move(sources)});
  }
  return seqs;
}

TokenSequence encoder_block(const TokenSequence& seq, const EncoderBlockParams& p) {
  const Tensor& x = seq.tokens;
  if (x.ndim() != 2 || x.shape()[1] != static_cast<std::size_t>(p.dim)) {
    throw ShapeError(msg("encoder_block: tokens must be [L x ", p.dim, "], got ",
                         shape_str(x.shape())));
  }
  const std::size_t dim = static_cast<std::size_t>(p.dim);
  const std::size_t nh = static_cast<std::size_t>(p.num_heads);
  const std::size_t dh = dim / nh;

  Tensor normed = ops::layer_norm(x, p.ln1_gain->tensor, p.ln1_bias->tensor);
  Tensor q = ops::matmul(normed, p.wq->tensor);
  Tensor k = ops::matmul(normed, p.wk->tensor);
  Tensor v = ops::matmul(normed, p.wv->tensor);

  std::vector<Tensor> head_outs;
  head_outs.reserve(nh);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t hi = 0; hi < nh; ++hi) {
    Tensor qh = ops::slice(q, 1, hi * dh, dh);
    Tensor kh = ops::slice(k, 1, hi * dh, dh);
    Tensor vh = ops::slice(v, 1, hi * dh, dh);
    Tensor scores = ops::scale(ops::matmul(qh, ops::transpose2d(kh)), inv_sqrt_dh);
    Tensor attn = ops::softmax_last(scores);
    head_outs.push_back(ops::matmul(attn, vh));
  }
  Tensor attended = ops::matmul(ops::concat(head_outs, 1), p.wo->tensor);
  Tensor mid = ops::add(x, attended);

  Tensor normed2 = ops::layer_norm(mid, p.ln2_gain->tensor, p.ln2_bias->tensor);
  Tensor ff = ops::matmul(ops::gelu(ops::matmul(normed2, p.ff1->tensor)), p.ff2->tensor);
  return TokenSequence{ops::add(mid, ff), seq.sources};
}

RelationHead::RelationHead(const HeadConfig& cfg, int channels, int num_heads, ParamStore& store,
                           const std::string& prefix, Rng& init_rng)
    : cfg_(cfg), channels_(channels) {
  cfg_.validate();
  const std::size_t c = static_cast<std::size_t>(channels);
  if (channels % num_heads != 0) {
    throw ConfigError(msg("RelationHead: channels ", channels, " not divisible by ", num_heads,
                          " heads"));
  }
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(c));
  // The residual branches close with zero-initialized projections, so a
  // freshly built relation head computes exactly the aggregated-feature
  // linear classifier and attention grows from there.
  enc_.wq = &store.add(prefix + ".enc.wq", init_normal({c, c}, proj_std, init_rng));
  enc_.wk = &store.add(prefix + ".enc.wk", init_normal({c, c}, proj_std, init_rng));
  enc_.wv = &store.add(prefix + ".enc.wv", init_normal({c, c}, proj_std, init_rng));
  enc_.wo = &store.add(prefix + ".enc.wo", Tensor::zeros({c, c}));
  enc_.ff1 = &store.add(prefix + ".enc.ff1", init_fan_in({c, 4 * c}, c, init_rng));
  enc_.ff2 = &store.add(prefix + ".enc.ff2", Tensor::zeros({4 * c, c}));
  enc_.ln1_gain = &store.add(prefix + ".enc.ln1.gain", Tensor::full({c}, 1.0));
  enc_.ln1_bias = &store.add(prefix + ".enc.ln1.bias", Tensor::zeros({c}));
  enc_.ln2_gain = &store.add(prefix + ".enc.ln2.gain", Tensor::full({c}, 1.0));
  enc_.ln2_bias = &store.add(prefix + ".enc.ln2.bias", Tensor::zeros({c}));
  enc_.num_heads = num_heads;
  enc_.dim = channels;

  const std::size_t k = static_cast<std::size_t>(cfg_.num_classes);
  fc1_ = &store.add(prefix + ".cls.fc1.weight", init_fan_in({c, c}, c, init_rng));
  fc1_bias_ = &store.add(prefix + ".cls.fc1.bias", Tensor::zeros({c}));
  fc2_ = &store.add(prefix + ".cls.fc2.weight", init_normal({c, k}, proj_std, init_rng));
  fc2_bias_ = &store.add(prefix + ".cls.fc2.bias", Tensor::zeros({k}));
}

void RelationHead::reinit(Rng& rng) {
  const std::size_t c = static_cast<std::size_t>(channels_);
  const std::size_t k = static_cast<std::size_t>(cfg_.num_classes);
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(c));
  auto redraw = [&rng](Parameter* p, Tensor values) {
    std::copy(values.data().begin(), values.data().end(), p->tensor.data().begin());
  };
  redraw(enc_.wq, init_normal({c, c}, proj_std, rng));
  redraw(enc_.wk, init_normal({c, c}, proj_std, rng));
  redraw(enc_.wv, init_normal({c, c}, proj_std, rng));
  redraw(enc_.wo, Tensor::zeros({c, c}));
  redraw(enc_.ff1, init_fan_in({c, 4 * c}, c, rng));
  redraw(enc_.ff2, Tensor::zeros({4 * c, c}));
  redraw(enc_.ln1_gain, Tensor::full({c}, 1.0));
  redraw(enc_.ln1_bias, Tensor::zeros({c}));
  redraw(enc_.ln2_gain, Tensor::full({c}, 1.0));
  redraw(enc_.ln2_bias, Tensor::zeros({c}));
  redraw(fc1_, init_fan_in({c, c}, c, rng));
  redraw(fc1_bias_, Tensor::zeros({c}));
  redraw(fc2_, init_normal({c, k}, proj_std, rng));
  redraw(fc2_bias_, Tensor::zeros({k}));
}

Tensor RelationHead::classify(const Tensor& person_vec) const {
  Tensor h = ops::add_bias(ops::matmul(person_vec, fc1_->tensor), fc1_bias_->tensor);
  h = ops::gelu(h);
  return ops::add_bias(ops::matmul(h, fc2_->tensor), fc2_bias_->tensor);
}

Tensor RelationHead::forward(const std::vector<PersonFeature>& persons,
                             const std::vector<std::vector<double>>& memory_vectors) const {
  check_persons(persons);
  if (!cfg_.use_memory && !memory_vectors.empty()) {
    throw ConfigError("relation head: memory tokens supplied but use_memory is off");
  }
  const std::size_t n = persons.size();
  const std::size_t c = persons[0].values.shape()[0];
  if (c != static_cast<std::size_t>(channels_)) {
    throw ShapeError(msg("relation head: expected ", channels_, " channels, got ", c));
  }

  if (cfg_.type == HeadType::Linear) {
    std::vector<Tensor> rows;
    rows.reserve(n);
    for (const PersonFeature& p : persons) {
      Tensor v = ops::reduce(p.values, {1, 2, 3}, ops::Reduce::Mean);  // [C]
      rows.push_back(classify(ops::reshape(v, {1, c})));
    }
    return ops::concat(rows, 0);
  }

  std::vector<TokenSequence> seqs = cfg_.type == HeadType::SOnly
                                        ? build_tokens_s_only(persons, cfg_.agg)
                                        : build_tokens_t_only(persons, cfg_.agg);

  if (cfg_.use_memory && !memory_vectors.empty()) {
    std::vector<double> flat;
    flat.reserve(memory_vectors.size() * c);
    for (const auto& v : memory_vectors) {
      if (v.size() != c) {
        throw ShapeError(msg("relation head: memory vector dim ", v.size(), ", expected ", c));
      }
      flat.insert(flat.end(), v.begin(), v.end());
    }
    Tensor mem = Tensor::from_data({memory_vectors.size(), c}, std::move(flat));
    for (TokenSequence& seq : seqs) {
      seq.tokens = ops::concat({seq.tokens, mem}, 0);
      seq.sources.insert(seq.sources.end(), memory_vectors.size(), -1);
    }
  }

  std::vector<std::vector<Tensor>> person_rows(n);
  for (const TokenSequence& seq : seqs) {
    TokenSequence out = encoder_block(seq, enc_);
    for (std::size_t i = 0; i < n; ++i) {
      person_rows[i].push_back(ops::slice(out.tokens, 0, i, 1));
    }
  }
  const double inv_positions = 1.0 / static_cast<double>(seqs.size());
  std::vector<Tensor> logits_rows;
  logits_rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor avg = ops::scale(ops::add_n(person_rows[i]), inv_positions);  // [1 x C]
    logits_rows.push_back(classify(avg));
  }
  return ops::concat(logits_rows, 0);
}

Tensor predict_scores(const Tensor& logits) { return ops::sigmoid(logits); }

}  // namespace strel
