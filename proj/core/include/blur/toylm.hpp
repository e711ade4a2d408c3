#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "blur/vecmath.hpp"

namespace blur {

// Bigram MLP: logits(x) = W2ᵀ tanh(W1 E[x] + b1) + b2.
// Packing order: E (V×H), W1 (H×H), W2 (H×V), b1 (H), b2 (V), all row-major.
struct ToyLMShape {
  std::size_t vocab = 32;
  std::size_t hidden = 16;

  std::size_t num_params() const { return vocab * hidden + hidden * hidden + hidden * vocab + hidden + vocab; }
  std::size_t off_E() const { return 0; }
  std::size_t off_W1() const { return vocab * hidden; }
  std::size_t off_W2() const { return off_W1() + hidden * hidden; }
  std::size_t off_b1() const { return off_W2() + hidden * vocab; }
  std::size_t off_b2() const { return off_b1() + hidden; }
};

enum class Layer { embedding_out, hidden_out };
std::string to_string(Layer layer);
Layer parse_layer(const std::string& name);

// Activations for every context token at once (row x = context token x).
struct ForwardCache {
  std::size_t vocab = 0, hidden = 0;
  std::vector<double> h0;    // V×H
  std::vector<double> h1;    // V×H
  std::vector<double> logp;  // V×V, log π(y | x)

  double log_prob(int x, int y) const { return logp[static_cast<std::size_t>(x) * vocab + y]; }
  std::span<const double> layer(Layer l, int x) const;
};

ForwardCache forward(const ToyLMShape& shape, const ParamVector& params);

// Gradient of  Σ_xy logp_weights[x,y]·logπ(y|x) + Σ_x ⟨d_h1[x], h1[x]⟩ + Σ_x ⟨d_h0[x], h0[x]⟩.
// Any of the three may be empty.
struct Cotangents {
  std::vector<double> logp_weights;
  std::vector<double> d_h1;
  std::vector<double> d_h0;
};
ParamVector backprop(const ToyLMShape& shape, const ParamVector& params, const ForwardCache& fwd,
                     const Cotangents& cot);

class ToyLM {
 public:
  ToyLM(ToyLMShape shape, ParamVector params);
  // N(0, scale^2) entries.
  static ToyLM random(ToyLMShape shape, std::uint64_t seed, double scale);

  const ToyLMShape& shape() const { return shape_; }
  const ParamVector& params() const { return params_; }
  ForwardCache forward() const { return blur::forward(shape_, params_); }

 private:
  ToyLMShape shape_;
  ParamVector params_;
};

using Sequence = std::vector<int>;

struct Secret {
  Sequence prompt;
  Sequence continuation;
};

enum class DatasetRole { forget, retain };

struct TokenDataset {
  std::vector<Sequence> sequences;
  DatasetRole role = DatasetRole::retain;
  std::vector<Secret> secrets;
};

// One (x, y) pair; log π(y|x) = Σ_t log π(y_t | previous token).
struct Sample {
  Sequence prompt;
  Sequence response;
};

// Each sequence becomes (first token, remaining tokens).
std::vector<Sample> sequence_samples(std::span<const Sequence> sequences);

double sample_log_prob(const ForwardCache& fwd, const Sample& s);

struct CorpusParams {
  std::uint64_t seed = 1;
  std::size_t vocab = 32;
  std::size_t n_retain = 200;
  std::size_t n_forget = 50;
  std::size_t n_secrets = 12;
  std::size_t seq_len = 16;
  double chain_peak = 0.7;        // mass on one preferred successor
  double dirichlet_alpha = 0.3;   // concentration of the remaining mass
};

struct Corpus {
  TokenDataset retain;
  TokenDataset forget;
  std::vector<double> transition;  // (V - n_secrets)^2 Markov matrix
};

// Secret k uses the reserved prompt token V - n_secrets + k, which the chain
// never emits, followed by one chain token. Forget sequence i starts with
// secret i mod n_secrets.
Corpus generate_corpus(const CorpusParams& params);

// Retain sequences split into a training part and the last `holdout_fraction`.
struct RetainSplit {
  std::vector<Sequence> train;
  std::vector<Sequence> holdout;
};
RetainSplit split_retain(const TokenDataset& retain, double holdout_fraction = 0.2);

struct FinetuneResult {
  ToyLM model;
  std::vector<double> loss_history;  // cross-entropy before each epoch
};

// Full-batch gradient descent on mean sequence cross-entropy.
FinetuneResult finetune(const ToyLM& model, std::span<const Sample> samples, int epochs, double eta);

struct MemorizationReport {
  double verb_mem = 0.0;
  double know_mem_forget = 0.0;
  double know_mem_retain = 0.0;
};

MemorizationReport evaluate(const ForwardCache& fwd, std::span<const Secret> secrets,
                            std::span<const Sequence> holdout);
MemorizationReport evaluate(const ToyLM& model, std::span<const Secret> secrets,
                            std::span<const Sequence> holdout);

// Text formats: one sequence per line of space-separated ids;
// secrets as `prompt_ids<TAB>continuation_ids`.
void write_sequences(const std::string& path, std::span<const Sequence> seqs);
std::vector<Sequence> read_sequences(const std::string& path);
void write_secrets(const std::string& path, std::span<const Secret> secrets);
std::vector<Secret> read_secrets(const std::string& path);

}  // namespace blur
