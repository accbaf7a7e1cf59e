#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "mome/config.hpp"
#include "mome/tensor.hpp"

namespace mome {

// One precomputed hidden-state matrix, keyed by sample id.
struct EmbeddingRecord {
  std::string id;
  Tensor matrix;  // M x d'
};

// Deterministic surrogate for an LLM encoder: whitespace-tokenizes the text
// and derives one unit-variance pseudo-random row per token from the token's
// 64-bit FNV-1a hash. M = min(token count, max_tokens).
Tensor hash_embed_text(const std::string& text, std::size_t dprime,
                       std::size_t max_tokens);

// JSONL, one record per line: {"id":"...","dims":[M,dprime],"data":[...]}.
// A uniform d' across records is enforced. An empty file yields an empty map.
std::unordered_map<std::string, EmbeddingRecord> load_precomputed_embeddings(
    const std::string& path);

void save_precomputed_embeddings(const std::vector<EmbeddingRecord>& records,
                                 const std::string& path);

// Source of per-sample context matrices H_raw. Read-only after construction.
class ContextProvider {
 public:
  virtual ~ContextProvider() = default;
  virtual Tensor context(const std::string& id,
                         const std::string& text) const = 0;
  virtual std::size_t dprime() const = 0;
};

class HashedContextProvider : public ContextProvider {
 public:
  HashedContextProvider(std::size_t dprime, std::size_t max_tokens)
      : dprime_(dprime), max_tokens_(max_tokens) {}
  Tensor context(const std::string&, const std::string& text) const override {
    return hash_embed_text(text, dprime_, max_tokens_);
  }
  std::size_t dprime() const override { return dprime_; }

 private:
  std::size_t dprime_;
  std::size_t max_tokens_;
};

// Looks matrices up by sample id; unknown ids raise NotFoundError.
class FileContextProvider : public ContextProvider {
 public:
  explicit FileContextProvider(const std::string& path);
  Tensor context(const std::string& id, const std::string&) const override;
  std::size_t dprime() const override { return dprime_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::unordered_map<std::string, EmbeddingRecord> records_;
  std::size_t dprime_ = 0;
};

std::unique_ptr<ContextProvider> make_context_provider(
    const ContextConfig& cfg);

}  // namespace mome
