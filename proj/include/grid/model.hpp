#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grid/autodiff.hpp"
#include "grid/errors.hpp"

namespace grid {

// Architecture hyperparameters. d must equal the text encoder width; heads must divide d.
struct ModelConfig {
  int d = 64;            // embedding width
  int heads = 4;         // attention heads for every attention block
  int gat_layers = 2;    // per-graph GAT depth
  int enhancer_layers = 3;
  int encdec_layers = 2; // transformer encoder and decoder depth
  int k_robot = 16;      // fixed row budget of the action head
  double dropout = 0.0;  // attention/FFN dropout rate during training
  double leaky_slope = 0.2;  // slope of the GAT scoring LeakyReLU

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    if (d <= 0 || heads <= 0 || d % heads != 0)
      throw ConfigError("model: heads must divide d");
    if (gat_layers < 1 || enhancer_layers < 1 || encdec_layers < 1)
      throw ConfigError("model: every stack needs at least one layer");
    if (k_robot < 1) throw ConfigError("model: k_robot must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must be in [0,1)");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d", c.d},
                     {"heads", c.heads},
                     {"gat_layers", c.gat_layers},
                     {"enhancer_layers", c.enhancer_layers},
                     {"encdec_layers", c.encdec_layers},
                     {"k_robot", c.k_robot},
                     {"dropout", c.dropout},
                     {"leaky_slope", c.leaky_slope}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("d").get_to(c.d);
  j.at("heads").get_to(c.heads);
  j.at("gat_layers").get_to(c.gat_layers);
  j.at("enhancer_layers").get_to(c.enhancer_layers);
  j.at("encdec_layers").get_to(c.encdec_layers);
  j.at("k_robot").get_to(c.k_robot);
  j.at("dropout").get_to(c.dropout);
  j.at("leaky_slope").get_to(c.leaky_slope);
}

// Named trainable tensors in canonical (sorted-name) order. The sorted order fixes the
// traversal sequence of the optimizer, the checkpoint layout, and gradient checks.
class ModelParams {
public:
  using Map = std::map<std::string, ad::Mat<double>>;

  Map& tensors() { return p_; }
  const Map& tensors() const { return p_; }

  ad::Mat<double>& at(const std::string& name) {
    auto it = p_.find(name);
    if (it == p_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  const ad::Mat<double>& at(const std::string& name) const {
    auto it = p_.find(name);
    if (it == p_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::size_t total_coeffs() const {
    std::size_t n = 0;
    for (const auto& [name, m] : p_) n += static_cast<std::size_t>(m.size());
    return n;
  }

  bool operator==(const ModelParams& o) const {
    if (p_.size() != o.p_.size()) return false;
    for (auto a = p_.begin(), b = o.p_.begin(); a != p_.end(); ++a, ++b) {
      if (a->first != b->first) return false;
      if (a->second.rows() != b->second.rows() || a->second.cols() != b->second.cols())
        return false;
      if (a->second != b->second) return false;
    }
    return true;
  }

  // Glorot-uniform init for weight matrices, zeros for biases, ones for layer-norm
  // gains. A single generator walks the sorted names, so init is reproducible.
  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams out;
    declare_all(cfg, [&out](const std::string& name, int rows, int cols) {
      out.p_[name] = ad::Mat<double>::Zero(rows, cols);
    });
    std::mt19937_64 rng(seed);
    for (auto& [name, m] : out.p_) {
      if (ends_with(name, ".gamma")) {
        m.setOnes();
      } else if (ends_with(name, ".beta") || name.find(".b") != std::string::npos) {
        m.setZero();
      } else {
        const double r = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        std::uniform_real_distribution<double> dist(-r, r);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
          for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
      }
    }
    return out;
  }

  // Emits every (name, rows, cols) of the architecture in declaration order.
  template <typename Fn>
  static void declare_all(const ModelConfig& cfg, Fn&& fn) {
    const int d = cfg.d;
    auto attention = [&](const std::string& p) {
      fn(p + ".Wq", d, d);
      fn(p + ".bq", 1, d);
      fn(p + ".Wk", d, d);
      fn(p + ".bk", 1, d);
      fn(p + ".Wv", d, d);
      fn(p + ".bv", 1, d);
      fn(p + ".Wo", d, d);
      fn(p + ".bo", 1, d);
    };
    auto layer_norm = [&](const std::string& p) {
      fn(p + ".gamma", 1, d);
      fn(p + ".beta", 1, d);
    };
    auto ffn = [&](const std::string& p) {
      fn(p + ".W1", d, 2 * d);
      fn(p + ".b1", 1, 2 * d);
      fn(p + ".W2", 2 * d, d);
      fn(p + ".b2", 1, d);
    };
    for (const char* stack : {"gat_robot", "gat_scene"}) {
      for (int l = 0; l < cfg.gat_layers; ++l) {
        const std::string p = std::string(stack) + "." + std::to_string(l);
        fn(p + ".W", l == 0 ? 2 * d : d, d);
        fn(p + ".b", 1, d);
        fn(p + ".a_src", d, 1);
        fn(p + ".a_dst", d, 1);
      }
    }
    for (int l = 0; l < cfg.enhancer_layers; ++l) {
      const std::string p = "enh." + std::to_string(l);
      attention(p + ".ca_i");  // queries = instruction words
      attention(p + ".ca_g");  // queries = graph queries
    }
    for (int l = 0; l < cfg.encdec_layers; ++l) {
      const std::string p = "enc." + std::to_string(l);
      attention(p + ".self");
      layer_norm(p + ".ln1");
      layer_norm(p + ".ln2");
      ffn(p + ".ffn");
    }
    layer_norm("enc.final_ln");
    for (int l = 0; l < cfg.encdec_layers; ++l) {
      const std::string p = "dec." + std::to_string(l);
      attention(p + ".self");
      attention(p + ".cross");
      layer_norm(p + ".ln1");
      layer_norm(p + ".ln2");
      layer_norm(p + ".ln3");
      ffn(p + ".ffn");
    }
    layer_norm("dec.final_ln");
    fn("head_act.W1", cfg.k_robot * d, d);
    fn("head_act.b1", 1, d);
    fn("head_act.W2", d, 8);
    fn("head_act.b2", 1, 8);
    fn("head_obj.W1", d, d);
    fn("head_obj.b1", 1, d);
    fn("head_obj.W2", d, 1);
    fn("head_obj.b2", 1, 1);
  }

private:
  static bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  }

  Map p_;
};

// First and second Adam moments, keyed like the parameters they track.
struct AdamState {
  std::map<std::string, ad::Mat<double>> m;
  std::map<std::string, ad::Mat<double>> v;
  long step = 0;

  bool empty() const { return m.empty(); }
};

// Everything needed to resume or evaluate a run.
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  AdamState opt;              // empty when saved for inference only
  std::string encoder_digest; // must match the encoder used at load time
  std::string config_digest;  // digest of the generating run config, informational
  long iteration = 0;         // completed training iterations
};

namespace detail {

constexpr char kCheckpointMagic[9] = "GRIDCKP1";

inline void write_mat(std::ofstream& os, const ad::Mat<double>& m) {
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

inline ad::Mat<double> read_mat(std::ifstream& is, int rows, int cols) {
  ad::Mat<double> m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
  if (!is) throw ParseError("checkpoint truncated");
  return m;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json arrays = nlohmann::json::array();
  auto list = [&arrays](const std::string& name, const ad::Mat<double>& m) {
    arrays.push_back(nlohmann::json{
        {"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  };
  for (const auto& [name, m] : ck.params.tensors()) list(name, m);
  if (!ck.opt.empty()) {
    for (const auto& [name, m] : ck.opt.m) list("opt.m." + name, m);
    for (const auto& [name, m] : ck.opt.v) list("opt.v." + name, m);
  }
  nlohmann::json header{{"version", 1},
                        {"model_config", ck.config},
                        {"encoder_digest", ck.encoder_digest},
                        {"config_digest", ck.config_digest},
                        {"iteration", ck.iteration},
                        {"opt_step", ck.opt.step},
                        {"has_optimizer", !ck.opt.empty()},
                        {"arrays", arrays}};
  const std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write checkpoint to " + path);
  os.write(detail::kCheckpointMagic, 8);
  const std::uint64_t len = hs.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, m] : ck.params.tensors()) detail::write_mat(os, m);
  if (!ck.opt.empty()) {
    for (const auto& [name, m] : ck.opt.m) detail::write_mat(os, m);
    for (const auto& [name, m] : ck.opt.v) detail::write_mat(os, m);
  }
  if (!os) throw ConfigError("short write on checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(detail::kCheckpointMagic, 8))
    throw ParseError("not a checkpoint file: " + path);
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!is || len > (1ull << 30)) throw ParseError("checkpoint header length corrupt");
  std::string hs(len, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(len));
  if (!is) throw ParseError("checkpoint header truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  Checkpoint ck;
  try {
    ck.config = header.at("model_config").get<ModelConfig>();
    ck.encoder_digest = header.at("encoder_digest").get<std::string>();
    ck.config_digest = header.value("config_digest", std::string());
    ck.iteration = header.at("iteration").get<long>();
    ck.opt.step = header.at("opt_step").get<long>();
    for (const nlohmann::json& a : header.at("arrays")) {
      const std::string name = a.at("name").get<std::string>();
      ad::Mat<double> m =
          detail::read_mat(is, a.at("rows").get<int>(), a.at("cols").get<int>());
      if (name.rfind("opt.m.", 0) == 0)
        ck.opt.m[name.substr(6)] = std::move(m);
      else if (name.rfind("opt.v.", 0) == 0)
        ck.opt.v[name.substr(6)] = std::move(m);
      else
        ck.params.tensors()[name] = std::move(m);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header schema: ") + e.what());
  }

  // Shape audit against the declared architecture.
  std::size_t declared = 0;
  ModelParams::declare_all(ck.config, [&](const std::string& name, int rows, int cols) {
    ++declared;
    const ad::Mat<double>& m = ck.params.at(name);
    if (m.rows() != rows || m.cols() != cols)
      throw ParseError("checkpoint tensor " + name + " has the wrong shape");
  });
  if (declared != ck.params.tensors().size())
    throw ParseError("checkpoint carries unexpected tensors");
  return ck;
}

}  // namespace grid
