// SPDX-License-Identifier: Apache-2.0
#include "psl/encoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "psl/digest.hpp"
#include "psl/error.hpp"
#include "psl/fileio.hpp"
#include "psl/random.hpp"

namespace psl {

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::size_t dim) : tokens_(std::move(tokens)), dim_(dim) {
  if (dim_ < 2) throw ConfigError("embedding dimension must be at least 2, got " + std::to_string(dim_));
  if (tokens_.empty() || tokens_.front() != kNullToken)
    throw ConfigError("vocabulary must start with \"<null>\"");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& tok = tokens_[i];
    if (tok.empty() || tok.find_first_of(" \t\r\n:") != std::string::npos)
      throw ConfigError("invalid vocabulary token '" + tok + "'");
    if (!index_.emplace(tok, i).second) throw ConfigError("duplicate vocabulary token '" + tok + "'");
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path, std::size_t dim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocabulary file '" + path.string() + "'");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens), dim);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& t : tokens_) out += t + '\n';
  write_file_atomic(path, out);
}

bool Vocabulary::contains(std::string_view token) const { return index_of(token).has_value(); }

std::optional<std::size_t> Vocabulary::index_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------

PromptSpec PromptSpec::parse(std::string_view text) {
  PromptSpec spec;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    PromptEntry entry;
    const auto colon = word.rfind(':');
    if (colon != std::string::npos) {
      entry.token = word.substr(0, colon);
      const std::string w = word.substr(colon + 1);
      std::size_t used = 0;
      try {
        entry.weight = std::stod(w, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != w.size() || w.empty() || entry.token.empty())
        throw ConfigError("malformed prompt entry '" + word + "'");
    } else {
      entry.token = word;
    }
    spec.entries.push_back(std::move(entry));
  }
  return spec;
}

PromptSpec PromptSpec::with(std::string token, double weight) const {
  PromptSpec out = *this;
  out.entries.push_back({std::move(token), weight});
  return out;
}

bool PromptSpec::contains(std::string_view token) const {
  for (const auto& e : entries)
    if (e.token == token) return true;
  return false;
}

std::string PromptSpec::to_string() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i) os << ' ';
    os << entries[i].token;
    if (entries[i].weight != 1.0) os << ':' << entries[i].weight;
  }
  return os.str();
}

std::string EncoderHash::hex() const { return hex_u64(value); }

// ---------------------------------------------------------------------------

EncoderHash PromptEncoder::digest(const Vocabulary& vocab, std::span<const double> table,
                                  std::span<const double> mixing) {
  Fnv1a64 h;
  h.update_u64(vocab.size());
  for (const auto& t : vocab.tokens()) {
    h.update_u64(t.size());
    h.update(t);
  }
  h.update_u64(vocab.dim());
  h.update(table);
  h.update(mixing);
  return EncoderHash{h.digest()};
}

PromptEncoder PromptEncoder::build(const Vocabulary& vocab, std::uint64_t seed) {
  if (vocab.dim() < 2) throw ConfigError("encoder dimension must be at least 2");
  PromptEncoder enc;
  enc.vocab_ = vocab;
  enc.seed_ = seed;
  const std::size_t d = vocab.dim();
  const std::size_t n = vocab.size();
  Rng rng = make_rng(seed, 0);
  enc.table_.assign(n * d, 0.0);
  // Unit-scale rows: each entry ~ N(0, 1/d). Row 0 ("<null>") stays zero.
  const double row_scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) enc.table_[i * d + j] = row_scale * standard_normal(rng);
  Rng mix_rng = make_rng(seed, 1);
  enc.mixing_.resize(d * d);
  for (auto& v : enc.mixing_) v = row_scale * standard_normal(mix_rng);
  enc.hash_ = digest(enc.vocab_, enc.table_, enc.mixing_);
  return enc;
}

std::span<const double> PromptEncoder::embedding(std::string_view token) const {
  auto idx = vocab_.index_of(token);
  if (!idx) throw LookupError("unknown token '" + std::string(token) + "'");
  return std::span<const double>(table_).subspan(*idx * dim(), dim());
}

std::vector<double> PromptEncoder::encode(const PromptSpec& prompt, const EmbeddingOverrides& overrides) const {
  const std::size_t d = dim();
  std::vector<double> aggregate(d, 0.0);
  for (const auto& entry : prompt.entries) {
    std::span<const double> e;
    if (auto it = overrides.find(entry.token); it != overrides.end()) {
      if (it->second.size() != d)
        throw DimensionError("override for '" + entry.token + "' has dimension " + std::to_string(it->second.size()) +
                             ", encoder expects " + std::to_string(d));
      e = it->second;
    } else {
      e = embedding(entry.token);
    }
    for (std::size_t j = 0; j < d; ++j) aggregate[j] += entry.weight * e[j];
  }
  std::vector<double> cond(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double a = aggregate[i];
    for (std::size_t j = 0; j < d; ++j) cond[j] += a * mixing_[i * d + j];
  }
  return cond;
}

Tensor PromptEncoder::encode(const PromptSpec& prompt, const TensorOverrides& overrides) const {
  const std::size_t d = dim();
  std::vector<double> frozen(d, 0.0);
  Tensor learned;
  for (const auto& entry : prompt.entries) {
    if (auto it = overrides.find(entry.token); it != overrides.end()) {
      const Tensor& e = it->second;
      if (e.numel() != d)
        throw DimensionError("override for '" + entry.token + "' has " + std::to_string(e.numel()) +
                             " values, encoder expects " + std::to_string(d));
      Tensor row = e.rank() == 2 ? e : broadcast(e, 1);
      Tensor term = scale(row, entry.weight);
      learned = learned.defined() ? add(learned, term) : term;
      continue;
    }
    const auto e = embedding(entry.token);
    for (std::size_t j = 0; j < d; ++j) frozen[j] += entry.weight * e[j];
  }
  Tensor aggregate = Tensor::row(std::move(frozen));
  if (learned.defined()) aggregate = add(aggregate, learned);
  return matmul(aggregate, Tensor::from({d, d}, mixing_));
}

EncoderHash encoder_hash(const PromptEncoder& encoder) { return encoder.hash(); }

}  // namespace psl
