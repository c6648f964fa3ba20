#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "grid/errors.hpp"
#include "grid/text.hpp"
#include "grid/util.hpp"

namespace grid {

// Per-text encoding: one row per word plus a sentence-level embedding, all of width dim().
struct EmbeddingBundle {
  std::vector<std::vector<double>> words;  // m x d, m = word count
  std::vector<double> sentence;            // d
};

// Shared text backbone. One instance encodes both the instruction and every node
// sentence of a run, so embeddings live in a single space.
class TextEncoder {
public:
  virtual ~TextEncoder() = default;
  virtual int dim() const = 0;
  // Stable identity baked into checkpoints; loading under a different encoder fails fast.
  virtual std::string digest() const = 0;
  virtual std::vector<EmbeddingBundle> encode_batch(const std::vector<std::string>& texts) = 0;

  EmbeddingBundle encode_sentence(const std::string& text) {
    return encode_batch({text}).front();
  }
};

// Deterministic stand-in for a real language model: every lowercased word hashes to a
// fixed unit vector, sentences average their words. Identical words always collide to
// identical rows, which is exactly the property the matching tests rely on.
class ToyEncoder final : public TextEncoder {
public:
  explicit ToyEncoder(int d = 64) : d_(d) {
    if (d_ <= 0) throw ConfigError("encoder dim must be positive");
  }

  int dim() const override { return d_; }
  std::string digest() const override { return "toy:d=" + std::to_string(d_); }

  std::vector<EmbeddingBundle> encode_batch(const std::vector<std::string>& texts) override {
    std::vector<EmbeddingBundle> out;
    out.reserve(texts.size());
    for (const std::string& text : texts) out.push_back(encode_one(text));
    return out;
  }

private:
  EmbeddingBundle encode_one(const std::string& text) const {
    EmbeddingBundle b;
    b.sentence.assign(static_cast<std::size_t>(d_), 0.0);
    for (const std::string& word : util::tokenize(util::lowercase(text)))
      b.words.push_back(word_vector(word));
    if (b.words.empty()) return b;  // empty text: no words, zero sentence
    for (const auto& w : b.words)
      for (int i = 0; i < d_; ++i) b.sentence[static_cast<std::size_t>(i)] += w[static_cast<std::size_t>(i)];
    double norm = 0.0;
    for (double v : b.sentence) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 1e-12)
      for (double& v : b.sentence) v /= norm;
    return b;
  }

  std::vector<double> word_vector(const std::string& word) const {
    std::uint64_t state = util::fnv1a64(word);
    std::vector<double> v(static_cast<std::size_t>(d_));
    for (int i = 0; i < d_; ++i)
      v[static_cast<std::size_t>(i)] = 2.0 * util::to_unit(util::splitmix64(state)) - 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 1e-12)
      for (double& x : v) x /= norm;
    else
      v[0] = 1.0;
    return v;
  }

  int d_;
};

struct ExternalEncoderConfig {
  std::string endpoint;     // http://host:port/path; read from GRID_ENCODER_ENDPOINT if empty
  std::string api_key;      // optional bearer token; read from GRID_ENCODER_API_KEY if empty
  int timeout_ms = 10000;
  int retries = 2;          // extra attempts after the first failure
  int backoff_ms = 100;
};

// Bridges to a real embedding service: POST {"texts": [...]} and expect
// {"embeddings": [[...]], "tokens": [[[...]]]} with aligned outer lengths.
class ExternalEncoder final : public TextEncoder {
public:
  explicit ExternalEncoder(ExternalEncoderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty())
      if (const char* env = std::getenv("GRID_ENCODER_ENDPOINT")) cfg_.endpoint = env;
    if (cfg_.api_key.empty())
      if (const char* env = std::getenv("GRID_ENCODER_API_KEY")) cfg_.api_key = env;
    if (cfg_.endpoint.empty())
      throw ConfigError("external encoder needs an endpoint (GRID_ENCODER_ENDPOINT)");
    parse_endpoint();
  }

  int dim() const override {
    if (d_ == 0)
      throw ConfigError("external encoder dim unknown before the first encode_batch call");
    return d_;
  }
  std::string digest() const override { return "external:" + cfg_.endpoint; }

  std::vector<EmbeddingBundle> encode_batch(const std::vector<std::string>& texts) override {
    nlohmann::json req{{"texts", texts}};
    const std::string body = req.dump();

    int last_status = -1;
    std::string last_error = "connection failed";
    const int attempts_max = cfg_.retries + 1;
    for (int attempt = 1; attempt <= attempts_max; ++attempt) {
      if (attempt > 1 && cfg_.backoff_ms > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms));
      httplib::Client client(host_, port_);
      client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
      client.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
      httplib::Headers headers;
      if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
      auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        last_status = -1;
        last_error = "no response: " + httplib::to_string(res.error());
        continue;
      }
      last_status = res->status;
      if (res->status != 200) {
        last_error = "http status " + std::to_string(res->status);
        continue;
      }
      try {
        return parse_response(res->body, texts.size());
      } catch (const ParseError& e) {
        last_error = e.what();  // malformed body; retrying may hit a healthy replica
      }
    }
    throw ExternalServiceError(last_error, attempts_max, last_status);
  }

private:
  void parse_endpoint() {
    std::string url = cfg_.endpoint;
    const std::string scheme = "http://";
    if (url.rfind(scheme, 0) != 0)
      throw ConfigError("external encoder endpoint must start with http:// , got " + url);
    url = url.substr(scheme.size());
    std::size_t slash = url.find('/');
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
    std::string hostport = url.substr(0, slash);
    std::size_t colon = hostport.find(':');
    host_ = hostport.substr(0, colon);
    port_ = colon == std::string::npos ? 80 : std::stoi(hostport.substr(colon + 1));
    if (host_.empty()) throw ConfigError("external encoder endpoint has no host");
  }

  std::vector<EmbeddingBundle> parse_response(const std::string& body, std::size_t expected) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("encoder response is not JSON: ") + e.what());
    }
    try {
      const nlohmann::json& emb = j.at("embeddings");
      const nlohmann::json& tok = j.at("tokens");
      if (emb.size() != expected || tok.size() != expected)
        throw ParseError("encoder response length mismatch");
      std::vector<EmbeddingBundle> out(expected);
      for (std::size_t i = 0; i < expected; ++i) {
        out[i].sentence = emb[i].get<std::vector<double>>();
        for (const auto& w : tok[i]) out[i].words.push_back(w.get<std::vector<double>>());
        const std::size_t d = out[i].sentence.size();
        if (d == 0) throw ParseError("encoder returned an empty embedding");
        for (const auto& w : out[i].words)
          if (w.size() != d) throw ParseError("token width differs from sentence width");
        if (d_ == 0) d_ = static_cast<int>(d);
        if (static_cast<int>(d) != d_) throw ParseError("embedding width changed mid-run");
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("encoder response schema: ") + e.what());
    }
  }

  ExternalEncoderConfig cfg_;
  std::string host_;
  std::string path_;
  int port_ = 80;
  int d_ = 0;
};

// Sentence-embedding rows for every node of a graph, in node order. Sentences come from
// node_sentence(n, with_id=false): ids never reach the encoder, so relabeling nodes can
// only permute rows, never change them.
template <typename Graph>
std::vector<std::vector<double>> encode_nodes(const Graph& g, TextEncoder& enc) {
  std::vector<EmbeddingBundle> bundles = enc.encode_batch(node_sentences_for_encoding(g));
  std::vector<std::vector<double>> rows;
  rows.reserve(bundles.size());
  for (EmbeddingBundle& b : bundles) rows.push_back(std::move(b.sentence));
  return rows;
}

inline std::unique_ptr<TextEncoder> make_encoder(const std::string& backend, int toy_dim,
                                                 const ExternalEncoderConfig& ext = {}) {
  if (backend == "toy") return std::make_unique<ToyEncoder>(toy_dim);
  if (backend == "external") return std::make_unique<ExternalEncoder>(ext);
  throw ConfigError("unknown encoder backend '" + backend + "'");
}

}  // namespace grid
