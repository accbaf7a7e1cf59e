#include "mome/context_provider.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mome/error.hpp"
#include "mome/rng.hpp"

namespace mome {

namespace {

using nlohmann::json;

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

}  // namespace

Tensor hash_embed_text(const std::string& text, std::size_t dprime,
                       std::size_t max_tokens) {
  if (dprime < 1) throw ConfigError("hash_embed_text: dprime must be >= 1");
  if (max_tokens < 1) {
    throw ConfigError("hash_embed_text: max_tokens must be >= 1");
  }
  std::vector<std::string> tokens = whitespace_tokens(text);
  if (tokens.empty()) {
    throw DataError("hash_embed_text: no tokens in text");
  }
  std::size_t M = std::min(tokens.size(), max_tokens);
  Tensor H(M, dprime);
  for (std::size_t t = 0; t < M; ++t) {
    RandomStream row_rng(fnv1a64(tokens[t]));
    for (std::size_t j = 0; j < dprime; ++j) {
      H.at(t, j) = row_rng.normal();
    }
  }
  return H;
}

std::unordered_map<std::string, EmbeddingRecord> load_precomputed_embeddings(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings file: " + path);
  std::unordered_map<std::string, EmbeddingRecord> records;
  std::size_t dprime = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("embeddings parse error at " + path + ":" +
                      std::to_string(lineno) + ": " + e.what());
    }
    EmbeddingRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      std::vector<std::size_t> dims =
          j.at("dims").get<std::vector<std::size_t>>();
      std::vector<double> data = j.at("data").get<std::vector<double>>();
      if (dims.size() != 2) {
        throw DataError("dims must have two entries");
      }
      rec.matrix = Tensor::from_rows(dims[0], dims[1], std::move(data));
    } catch (const json::exception& e) {
      throw DataError("embeddings record error at " + path + ":" +
                      std::to_string(lineno) + ": " + e.what());
    }
    if (rec.matrix.rows < 1) {
      throw DataError("embeddings record '" + rec.id + "' has no rows");
    }
    if (!rec.matrix.all_finite()) {
      throw DataError("embeddings record '" + rec.id +
                      "' has non-finite entries");
    }
    if (dprime == 0) {
      dprime = rec.matrix.cols;
    } else if (rec.matrix.cols != dprime) {
      throw DataError("embeddings record '" + rec.id + "' has d'=" +
                      std::to_string(rec.matrix.cols) +
                      ", file previously used d'=" + std::to_string(dprime));
    }
    records[rec.id] = std::move(rec);
  }
  return records;
}

void save_precomputed_embeddings(const std::vector<EmbeddingRecord>& records,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embeddings file: " + path);
  for (const EmbeddingRecord& rec : records) {
    json j{{"id", rec.id},
           {"dims", {rec.matrix.rows, rec.matrix.cols}},
           {"data", rec.matrix.data}};
    out << j.dump() << "\n";
  }
}

FileContextProvider::FileContextProvider(const std::string& path) {
  records_ = load_precomputed_embeddings(path);
  if (!records_.empty()) dprime_ = records_.begin()->second.matrix.cols;
}

Tensor FileContextProvider::context(const std::string& id,
                                    const std::string&) const {
  auto it = records_.find(id);
  if (it == records_.end()) {
    throw NotFoundError("no embedding for sample id '" + id + "'");
  }
  return it->second.matrix;
}

std::unique_ptr<ContextProvider> make_context_provider(
    const ContextConfig& cfg) {
  if (cfg.provider == "hashed") {
    return std::make_unique<HashedContextProvider>(cfg.dprime, cfg.max_tokens);
  }
  if (cfg.provider == "file") {
    if (cfg.embeddings_path.empty()) {
      throw ConfigError(
          "context.provider 'file' requires context.embeddings_path");
    }
    return std::make_unique<FileContextProvider>(cfg.embeddings_path);
  }
  throw ConfigError("unknown context provider: " + cfg.provider);
}

}  // namespace mome
