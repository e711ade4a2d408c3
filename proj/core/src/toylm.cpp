#include "blur/toylm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "blur/rng.hpp"

namespace blur {

std::string to_string(Layer layer) {
  return layer == Layer::embedding_out ? "embedding_out" : "hidden_out";
}

Layer parse_layer(const std::string& name) {
  if (name == "embedding_out") return Layer::embedding_out;
  if (name == "hidden_out") return Layer::hidden_out;
  throw ConfigError("unknown layer '" + name + "'");
}

std::span<const double> ForwardCache::layer(Layer l, int x) const {
  const auto& m = l == Layer::embedding_out ? h0 : h1;
  return std::span<const double>(m).subspan(static_cast<std::size_t>(x) * hidden, hidden);
}

ForwardCache forward(const ToyLMShape& shape, const ParamVector& params) {
  if (params.dim() != shape.num_params()) throw DimensionError("toy LM: parameter count mismatch");
  const std::size_t V = shape.vocab, H = shape.hidden;
  const double* p = params.data();
  const double* E = p + shape.off_E();
  const double* W1 = p + shape.off_W1();
  const double* W2 = p + shape.off_W2();
  const double* b1 = p + shape.off_b1();
  const double* b2 = p + shape.off_b2();

  ForwardCache c;
  c.vocab = V;
  c.hidden = H;
  c.h0.assign(E, E + V * H);
  c.h1.assign(V * H, 0.0);
  c.logp.assign(V * V, 0.0);
  for (std::size_t x = 0; x < V; ++x) {
    const double* h0 = E + x * H;
    double* h1 = &c.h1[x * H];
    for (std::size_t i = 0; i < H; ++i) {
      double s = b1[i];
      for (std::size_t j = 0; j < H; ++j) s += W1[i * H + j] * h0[j];
      h1[i] = std::tanh(s);
    }
    double* z = &c.logp[x * V];
    for (std::size_t k = 0; k < V; ++k) z[k] = b2[k];
    for (std::size_t i = 0; i < H; ++i) {
      const double a = h1[i];
      const double* w = W2 + i * V;
      for (std::size_t k = 0; k < V; ++k) z[k] += a * w[k];
    }
    const double zmax = *std::max_element(z, z + V);
    double se = 0.0;
    for (std::size_t k = 0; k < V; ++k) se += std::exp(z[k] - zmax);
    const double lse = zmax + std::log(se);
    for (std::size_t k = 0; k < V; ++k) z[k] -= lse;
  }
  return c;
}

ParamVector backprop(const ToyLMShape& shape, const ParamVector& params, const ForwardCache& fwd,
                     const Cotangents& cot) {
  const std::size_t V = shape.vocab, H = shape.hidden;
  if (params.dim() != shape.num_params()) throw DimensionError("toy LM: parameter count mismatch");
  if ((!cot.logp_weights.empty() && cot.logp_weights.size() != V * V) ||
      (!cot.d_h1.empty() && cot.d_h1.size() != V * H) ||
      (!cot.d_h0.empty() && cot.d_h0.size() != V * H)) {
    throw DimensionError("toy LM backprop: cotangent shape mismatch");
  }
  const double* p = params.data();
  const double* W1 = p + shape.off_W1();
  const double* W2 = p + shape.off_W2();

  std::vector<double> g(shape.num_params(), 0.0);
  double* gE = &g[shape.off_E()];
  double* gW1 = &g[shape.off_W1()];
  double* gW2 = &g[shape.off_W2()];
  double* gb1 = &g[shape.off_b1()];
  double* gb2 = &g[shape.off_b2()];

  std::vector<double> dz(V), dh1(H), dpre(H);
  for (std::size_t x = 0; x < V; ++x) {
    const double* h0 = &fwd.h0[x * H];
    const double* h1 = &fwd.h1[x * H];
    std::fill(dh1.begin(), dh1.end(), 0.0);
    if (!cot.logp_weights.empty()) {
      const double* C = &cot.logp_weights[x * V];
      double row = 0.0;
      for (std::size_t k = 0; k < V; ++k) row += C[k];
      bool any = row != 0.0;
      for (std::size_t k = 0; k < V && !any; ++k) any = C[k] != 0.0;
      if (any) {
        const double* lp = &fwd.logp[x * V];
        for (std::size_t k = 0; k < V; ++k) {
          dz[k] = C[k] - row * std::exp(lp[k]);
          gb2[k] += dz[k];
        }
        for (std::size_t i = 0; i < H; ++i) {
          const double* w = W2 + i * V;
          double* gw = gW2 + i * V;
          double s = 0.0;
          for (std::size_t k = 0; k < V; ++k) {
            gw[k] += h1[i] * dz[k];
            s += dz[k] * w[k];
          }
          dh1[i] = s;
        }
      }
    }
    if (!cot.d_h1.empty()) {
      for (std::size_t i = 0; i < H; ++i) dh1[i] += cot.d_h1[x * H + i];
    }
    for (std::size_t i = 0; i < H; ++i) {
      dpre[i] = dh1[i] * (1.0 - h1[i] * h1[i]);
      gb1[i] += dpre[i];
      for (std::size_t j = 0; j < H; ++j) gW1[i * H + j] += dpre[i] * h0[j];
    }
    double* ge = gE + x * H;
    for (std::size_t j = 0; j < H; ++j) {
      double s = cot.d_h0.empty() ? 0.0 : cot.d_h0[x * H + j];
      for (std::size_t i = 0; i < H; ++i) s += dpre[i] * W1[i * H + j];
      ge[j] = s;
    }
  }
  return ParamVector(std::move(g));
}

ToyLM::ToyLM(ToyLMShape shape, ParamVector params) : shape_(shape), params_(std::move(params)) {
  if (shape_.vocab < 2 || shape_.hidden < 1) throw ConfigError("toy LM: vocab >= 2 and hidden >= 1 required");
  if (params_.dim() != shape_.num_params()) throw DimensionError("toy LM: parameter count mismatch");
}

ToyLM ToyLM::random(ToyLMShape shape, std::uint64_t seed, double scale) {
  Rng rng(seed);
  std::vector<double> p(shape.num_params());
  for (double& x : p) x = scale * rng.normal();
  return ToyLM(shape, ParamVector(std::move(p)));
}

std::vector<Sample> sequence_samples(std::span<const Sequence> sequences) {
  std::vector<Sample> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) {
    if (s.size() < 2) throw ConfigError("sequence shorter than 2 tokens");
    out.push_back({Sequence(s.begin(), s.begin() + 1), Sequence(s.begin() + 1, s.end())});
  }
  return out;
}

double sample_log_prob(const ForwardCache& fwd, const Sample& s) {
  int prev = s.prompt.back();
  double lp = 0.0;
  for (int t : s.response) {
    lp += fwd.log_prob(prev, t);
    prev = t;
  }
  return lp;
}

namespace {

std::size_t categorical(Rng& rng, std::span<const double> probs) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

}  // namespace

Corpus generate_corpus(const CorpusParams& cp) {
  if (cp.seq_len < 2) throw ConfigError("corpus: seq_len must be >= 2");
  if (cp.n_secrets > cp.n_forget) throw ConfigError("corpus: n_secrets must be <= n_forget");
  if (cp.vocab < cp.n_secrets + 2) throw ConfigError("corpus: vocab too small for n_secrets");
  if (!(cp.chain_peak >= 0.0 && cp.chain_peak <= 1.0)) throw ConfigError("corpus: chain_peak must be in [0,1]");
  if (!(cp.dirichlet_alpha > 0.0)) throw ConfigError("corpus: dirichlet_alpha must be > 0");

  Rng rng(cp.seed);
  const std::size_t vc = cp.vocab - cp.n_secrets;
  Corpus out;
  out.transition.assign(vc * vc, 0.0);
  for (std::size_t i = 0; i < vc; ++i) {
    double* row = &out.transition[i * vc];
    double sum = 0.0;
    for (std::size_t j = 0; j < vc; ++j) sum += (row[j] = rng.gamma(cp.dirichlet_alpha));
    for (std::size_t j = 0; j < vc; ++j) row[j] *= (1.0 - cp.chain_peak) / sum;
    row[rng.below(vc)] += cp.chain_peak;
  }

  auto sample_chain = [&] {
    Sequence s;
    s.reserve(cp.seq_len);
    s.push_back(static_cast<int>(rng.below(vc)));
    while (s.size() < cp.seq_len) {
      const auto row = std::span<const double>(out.transition).subspan(s.back() * vc, vc);
      s.push_back(static_cast<int>(categorical(rng, row)));
    }
    return s;
  };

  out.retain.role = DatasetRole::retain;
  for (std::size_t i = 0; i < cp.n_retain; ++i) out.retain.sequences.push_back(sample_chain());

  out.forget.role = DatasetRole::forget;
  for (std::size_t k = 0; k < cp.n_secrets; ++k) {
    out.forget.secrets.push_back({{static_cast<int>(vc + k)}, {static_cast<int>(rng.below(vc))}});
  }
  for (std::size_t i = 0; i < cp.n_forget; ++i) {
    Sequence s = sample_chain();
    if (cp.n_secrets > 0) {
      const Secret& sec = out.forget.secrets[i % cp.n_secrets];
      s[0] = sec.prompt[0];
      s[1] = sec.continuation[0];
    }
    out.forget.sequences.push_back(std::move(s));
  }
  return out;
}

RetainSplit split_retain(const TokenDataset& retain, double holdout_fraction) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout fraction must be in (0,1)");
  }
  const std::size_t n = retain.sequences.size();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - holdout_fraction)));
  RetainSplit s;
  s.train.assign(retain.sequences.begin(), retain.sequences.begin() + n_train);
  s.holdout.assign(retain.sequences.begin() + n_train, retain.sequences.end());
  return s;
}

FinetuneResult finetune(const ToyLM& model, std::span<const Sample> samples, int epochs, double eta) {
  if (epochs < 0) throw ConfigError("finetune: epochs must be >= 0");
  if (!(eta > 0.0)) throw ConfigError("finetune: eta must be > 0");
  if (samples.empty()) throw ConfigError("finetune: empty corpus");
  const ToyLMShape shape = model.shape();
  const std::size_t V = shape.vocab;
  std::vector<double> weights(V * V, 0.0);
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  for (const auto& s : samples) {
    int prev = s.prompt.back();
    for (int t : s.response) {
      weights[static_cast<std::size_t>(prev) * V + t] -= inv_n;
      prev = t;
    }
  }
  std::vector<double> theta = model.params().values();
  FinetuneResult res{model, {}};
  for (int e = 0; e < epochs; ++e) {
    ParamVector p(theta);
    const ForwardCache fwd = forward(shape, p);
    double loss = 0.0;
    for (std::size_t i = 0; i < V * V; ++i) loss += weights[i] * fwd.logp[i];
    if (!std::isfinite(loss)) throw NumericalError("finetune diverged at epoch " + std::to_string(e));
    res.loss_history.push_back(loss);
    const ParamVector g = backprop(shape, p, fwd, {weights, {}, {}});
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= eta * g[i];
    if (!all_finite(theta)) throw NumericalError("finetune diverged at epoch " + std::to_string(e));
  }
  res.model = ToyLM(shape, ParamVector(std::move(theta)));
  return res;
}

MemorizationReport evaluate(const ForwardCache& fwd, std::span<const Secret> secrets,
                            std::span<const Sequence> holdout) {
  const std::size_t V = fwd.vocab;
  auto argmax = [&](int x) {
    const double* row = &fwd.logp[static_cast<std::size_t>(x) * V];
    return static_cast<int>(std::max_element(row, row + V) - row);
  };
  MemorizationReport r;
  if (!secrets.empty()) {
    double verb = 0.0, know = 0.0;
    for (const auto& s : secrets) {
      int prev = s.prompt.back();
      bool exact = true;
      double lp = 0.0;
      for (int t : s.continuation) {
        exact = exact && argmax(prev) == t;
        lp += fwd.log_prob(prev, t);
        prev = t;
      }
      verb += exact ? 1.0 : 0.0;
      know += std::exp(lp);
    }
    r.verb_mem = verb / static_cast<double>(secrets.size());
    r.know_mem_forget = know / static_cast<double>(secrets.size());
  }
  std::size_t hits = 0, total = 0;
  for (const auto& s : holdout) {
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      hits += argmax(s[i]) == s[i + 1] ? 1 : 0;
      ++total;
    }
  }
  r.know_mem_retain = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
  return r;
}

MemorizationReport evaluate(const ToyLM& model, std::span<const Secret> secrets,
                            std::span<const Sequence> holdout) {
  return evaluate(model.forward(), secrets, holdout);
}

namespace {

std::string join_ids(const Sequence& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(s[i]);
  }
  return out;
}

Sequence parse_ids(const std::string& text, const std::string& path, std::size_t lineno) {
  std::istringstream in(text);
  Sequence s;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    int v = -1;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || v < 0) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": bad token id '" + tok + "'");
    }
    s.push_back(v);
  }
  return s;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  return in;
}

}  // namespace

void write_sequences(const std::string& path, std::span<const Sequence> seqs) {
  auto out = open_out(path);
  for (const auto& s : seqs) out << join_ids(s) << '\n';
}

std::vector<Sequence> read_sequences(const std::string& path) {
  auto in = open_in(path);
  std::vector<Sequence> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    out.push_back(parse_ids(line, path, n));
  }
  return out;
}

void write_secrets(const std::string& path, std::span<const Secret> secrets) {
  auto out = open_out(path);
  for (const auto& s : secrets) out << join_ids(s.prompt) << '\t' << join_ids(s.continuation) << '\n';
}

std::vector<Secret> read_secrets(const std::string& path) {
  auto in = open_in(path);
  std::vector<Secret> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ConfigError(path + ":" + std::to_string(n) + ": missing tab");
    out.push_back({parse_ids(line.substr(0, tab), path, n), parse_ids(line.substr(tab + 1), path, n)});
  }
  return out;
}

}  // namespace blur
