#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "grid/autodiff.hpp"
#include "grid/encoder.hpp"
#include "grid/errors.hpp"
#include "grid/graph.hpp"
#include "grid/model.hpp"
#include "grid/state_machine.hpp"

namespace grid {

// Model parameters materialized as leaves on one tape. Training reads gradients back
// through these ids; inference just needs the values.
template <typename T>
class ParamSet {
public:
  ParamSet(ad::Tape<T>& tape, const ModelParams& params) {
    for (const auto& [name, m] : params.tensors())
      ids_.emplace(name, tape.leaf(ad::Mat<T>(m.template cast<T>())));
  }

  int at(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) throw ConfigError("parameter set misses '" + name + "'");
    return it->second;
  }

  const std::map<std::string, int>& ids() const { return ids_; }

private:
  std::map<std::string, int> ids_;
};

// Per-forward dropout source. Masks are sampled here so a training step is a pure
// function of (params, sample, seed).
struct DropoutCtx {
  double rate = 0.0;
  std::mt19937_64 rng{0};

  bool active() const { return rate > 0.0; }
};

namespace net {

template <typename T>
int dropout(ad::Tape<T>& tape, int x, DropoutCtx* ctx) {
  if (ctx == nullptr || !ctx->active()) return x;
  const auto& v = tape.val(x);
  ad::Mat<T> mask(v.rows(), v.cols());
  std::bernoulli_distribution keep(1.0 - ctx->rate);
  const T scale = static_cast<T>(1.0 / (1.0 - ctx->rate));
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) mask(i, j) = keep(ctx->rng) ? scale : T(0);
  return tape.hadamard(x, tape.leaf(std::move(mask)));
}

// One multi-head graph-attention pass. Edges are ordinal (src,dst) pairs with messages
// flowing src -> dst; attention normalizes over each destination's in-neighborhood,
// which always includes a self loop.
template <typename T>
int gat_layer(ad::Tape<T>& tape, const ParamSet<T>& P, const std::string& prefix, int x,
              const std::vector<std::pair<int, int>>& edges_with_loops,
              const std::vector<std::vector<int>>& dst_groups, int heads, T leaky_slope) {
  const int h = tape.add_rowvec(tape.matmul(x, P.at(prefix + ".W")), P.at(prefix + ".b"));
  const Eigen::Index d = tape.val(h).cols();
  const Eigen::Index dh = d / heads;
  const Eigen::Index n = tape.val(h).rows();

  std::vector<int> src_idx, dst_idx;
  src_idx.reserve(edges_with_loops.size());
  dst_idx.reserve(edges_with_loops.size());
  for (const auto& [s, t] : edges_with_loops) {
    src_idx.push_back(s);
    dst_idx.push_back(t);
  }

  std::vector<int> head_outs;
  for (int t = 0; t < heads; ++t) {
    int ht = tape.slice_cols(h, t * dh, dh);
    int a_src = tape.slice_rows(P.at(prefix + ".a_src"), t * dh, dh);
    int a_dst = tape.slice_rows(P.at(prefix + ".a_dst"), t * dh, dh);
    int score_src = tape.matmul(ht, a_src);  // n x 1
    int score_dst = tape.matmul(ht, a_dst);
    int e = tape.add(tape.gather_rows(score_src, src_idx), tape.gather_rows(score_dst, dst_idx));
    int alpha = tape.segment_softmax(tape.leaky_relu(e, leaky_slope), dst_groups);
    int messages = tape.row_scale(tape.gather_rows(ht, src_idx), alpha);
    head_outs.push_back(tape.scatter_add_rows(messages, dst_idx, n));
  }
  return tape.concat_cols(head_outs);
}

// Graph feature extraction: node tokens concatenated with the broadcast instruction
// sentence, then the GAT stack with ELU between layers.
template <typename T>
int gat_extract(ad::Tape<T>& tape, const ParamSet<T>& P, const ModelConfig& cfg,
                const std::string& stack, int node_tokens, int instr_sentence,
                const std::vector<std::pair<int, int>>& edges) {
  const Eigen::Index n = tape.val(node_tokens).rows();
  std::vector<std::pair<int, int>> with_loops = edges;
  for (Eigen::Index i = 0; i < n; ++i)
    with_loops.emplace_back(static_cast<int>(i), static_cast<int>(i));
  std::vector<std::vector<int>> dst_groups(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < with_loops.size(); ++k)
    dst_groups[static_cast<std::size_t>(with_loops[k].second)].push_back(static_cast<int>(k));

  int x = tape.concat_cols({node_tokens, tape.repeat_row(instr_sentence, n)});
  for (int l = 0; l < cfg.gat_layers; ++l) {
    const std::string prefix = stack + "." + std::to_string(l);
    x = gat_layer(tape, P, prefix, x, with_loops, dst_groups, cfg.heads,
                  static_cast<T>(cfg.leaky_slope));
    if (l + 1 < cfg.gat_layers) x = tape.elu(x);
  }
  return x;
}

// Standard multi-head attention block with output projection.
template <typename T>
int mha(ad::Tape<T>& tape, const ParamSet<T>& P, const std::string& prefix, int q_in,
        int kv_in, int heads, DropoutCtx* drop) {
  int Q = tape.add_rowvec(tape.matmul(q_in, P.at(prefix + ".Wq")), P.at(prefix + ".bq"));
  int K = tape.add_rowvec(tape.matmul(kv_in, P.at(prefix + ".Wk")), P.at(prefix + ".bk"));
  int V = tape.add_rowvec(tape.matmul(kv_in, P.at(prefix + ".Wv")), P.at(prefix + ".bv"));
  const Eigen::Index d = tape.val(Q).cols();
  const Eigen::Index dh = d / heads;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  std::vector<int> heads_out;
  for (int t = 0; t < heads; ++t) {
    int Qt = tape.slice_cols(Q, t * dh, dh);
    int Kt = tape.slice_cols(K, t * dh, dh);
    int Vt = tape.slice_cols(V, t * dh, dh);
    int A = tape.row_softmax(tape.scale(tape.matmul(Qt, Kt, false, true), inv_sqrt));
    heads_out.push_back(tape.matmul(A, Vt));
  }
  int O = tape.add_rowvec(tape.matmul(tape.concat_cols(heads_out), P.at(prefix + ".Wo")),
                          P.at(prefix + ".bo"));
  return dropout(tape, O, drop);
}

template <typename T>
int ffn(ad::Tape<T>& tape, const ParamSet<T>& P, const std::string& prefix, int x,
        DropoutCtx* drop) {
  int h = tape.relu(tape.add_rowvec(tape.matmul(x, P.at(prefix + ".W1")), P.at(prefix + ".b1")));
  h = dropout(tape, h, drop);
  return tape.add_rowvec(tape.matmul(h, P.at(prefix + ".W2")), P.at(prefix + ".b2"));
}

template <typename T>
int layer_norm(ad::Tape<T>& tape, const ParamSet<T>& P, const std::string& prefix, int x) {
  return tape.layer_norm(x, P.at(prefix + ".gamma"), P.at(prefix + ".beta"));
}

struct EnhancedFeatures {
  int fusion;   // instruction word stream after the last layer (m x d)
  int q_robot;  // robot graph queries (K x d)
  int q_scene;  // scene graph queries (M x d)
};

// Feature enhancer: N layers of parallel bidirectional cross attention with residuals.
// Both directions of a layer read the previous layer's streams, so the two updates of
// one layer commute.
template <typename T>
EnhancedFeatures enhance(ad::Tape<T>& tape, const ParamSet<T>& P, const ModelConfig& cfg,
                         int instr_words, int y_robot, int y_scene, DropoutCtx* drop) {
  const Eigen::Index k = tape.val(y_robot).rows();
  const Eigen::Index m = tape.val(y_scene).rows();
  int words = instr_words;
  int graph = tape.concat_rows({y_robot, y_scene});
  for (int l = 0; l < cfg.enhancer_layers; ++l) {
    const std::string p = "enh." + std::to_string(l);
    int words_next = tape.add(words, mha(tape, P, p + ".ca_i", words, graph, cfg.heads, drop));
    int graph_next = tape.add(graph, mha(tape, P, p + ".ca_g", graph, words, cfg.heads, drop));
    words = words_next;
    graph = graph_next;
  }
  return {words, tape.slice_rows(graph, 0, k), tape.slice_rows(graph, k, m)};
}

// Sinusoidal position table, added to the fusion stream only: word order carries
// meaning, graph queries must stay permutation equivariant.
template <typename T>
ad::Mat<T> sinusoidal_positions(Eigen::Index n, Eigen::Index d) {
  ad::Mat<T> pe(n, d);
  for (Eigen::Index pos = 0; pos < n; ++pos) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, 2.0 * static_cast<double>(i / 2) / static_cast<double>(d));
      pe(pos, i) = static_cast<T>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

// Pre-norm transformer encoder over the fusion features.
template <typename T>
int encoder_stack(ad::Tape<T>& tape, const ParamSet<T>& P, const ModelConfig& cfg, int fusion,
                  DropoutCtx* drop) {
  const auto& v = tape.val(fusion);
  int x = tape.add(fusion, tape.leaf(sinusoidal_positions<T>(v.rows(), v.cols())));
  for (int l = 0; l < cfg.encdec_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    int u = layer_norm(tape, P, p + ".ln1", x);
    x = tape.add(x, mha(tape, P, p + ".self", u, u, cfg.heads, drop));
    int v2 = layer_norm(tape, P, p + ".ln2", x);
    x = tape.add(x, ffn(tape, P, p + ".ffn", v2, drop));
  }
  return layer_norm(tape, P, "enc.final_ln", x);
}

// Pre-norm transformer decoder; one stack serves the concatenated robot and scene
// queries, which enter without positional encoding.
template <typename T>
int decoder_stack(ad::Tape<T>& tape, const ParamSet<T>& P, const ModelConfig& cfg, int queries,
                  int memory, DropoutCtx* drop) {
  int x = queries;
  for (int l = 0; l < cfg.encdec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    int u = layer_norm(tape, P, p + ".ln1", x);
    x = tape.add(x, mha(tape, P, p + ".self", u, u, cfg.heads, drop));
    int u2 = layer_norm(tape, P, p + ".ln2", x);
    x = tape.add(x, mha(tape, P, p + ".cross", u2, memory, cfg.heads, drop));
    int u3 = layer_norm(tape, P, p + ".ln3", x);
    x = tape.add(x, ffn(tape, P, p + ".ffn", u3, drop));
  }
  return layer_norm(tape, P, "dec.final_ln", x);
}

struct DecodedLogits {
  int action;  // 1 x 8
  int object;  // 1 x M
};

// Task decoder: transformer encoder over fusion, shared decoder over graph queries,
// then the decoupled heads. Robot rows are zero-padded to k_robot before the action
// MLP so the flattened input width is architecture-constant.
template <typename T>
DecodedLogits decode(ad::Tape<T>& tape, const ParamSet<T>& P, const ModelConfig& cfg,
                     int fusion, int q_robot, int q_scene, DropoutCtx* drop) {
  const Eigen::Index k = tape.val(q_robot).rows();
  const Eigen::Index m = tape.val(q_scene).rows();
  if (k > cfg.k_robot)
    throw TooManyRobotNodes(static_cast<std::size_t>(k),
                            static_cast<std::size_t>(cfg.k_robot));

  int memory = encoder_stack(tape, P, cfg, fusion, drop);
  int queries = tape.concat_rows({q_robot, q_scene});
  int decoded = decoder_stack(tape, P, cfg, queries, memory, drop);
  int f_robot = tape.slice_rows(decoded, 0, k);
  int f_scene = tape.slice_rows(decoded, k, m);

  int act_in = tape.reshape_row(tape.pad_rows(f_robot, cfg.k_robot));
  int act_h = tape.relu(
      tape.add_rowvec(tape.matmul(act_in, P.at("head_act.W1")), P.at("head_act.b1")));
  int action = tape.add_rowvec(tape.matmul(act_h, P.at("head_act.W2")), P.at("head_act.b2"));

  int obj_h = tape.relu(
      tape.add_rowvec(tape.matmul(f_scene, P.at("head_obj.W1")), P.at("head_obj.b1")));
  int obj_col = tape.add_rowvec(tape.matmul(obj_h, P.at("head_obj.W2")), P.at("head_obj.b2"));
  int object = tape.reshape_row(obj_col);

  return {action, object};
}

}  // namespace net

// Graph tensors ready for the tape: token rows in ascending-id node order and ordinal
// edge endpoints.
struct GraphEncoding {
  std::vector<std::vector<double>> tokens;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> node_ids;  // ordinal -> node id
};

template <typename Graph>
GraphEncoding encode_graph_for_net(const Graph& g, TextEncoder& enc) {
  GraphEncoding out;
  out.tokens = encode_nodes(g, enc);
  out.node_ids.reserve(g.nodes.size());
  for (const Node& n : g.nodes) out.node_ids.push_back(n.id);
  for (const Edge& e : g.edges)
    out.edges.emplace_back(g.index_of(e.src), g.index_of(e.dst));
  return out;
}

template <typename T>
ad::Mat<T> rows_to_mat(const std::vector<std::vector<double>>& rows) {
  ad::Mat<T> m(static_cast<Eigen::Index>(rows.size()),
               static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<T>(rows[i][j]);
  return m;
}

// Word rows of an instruction; falls back to the sentence row for wordless text so the
// fusion stream is never empty.
template <typename T>
ad::Mat<T> instruction_word_rows(const EmbeddingBundle& b) {
  if (b.words.empty()) return rows_to_mat<T>({b.sentence});
  return rows_to_mat<T>(b.words);
}

struct ForwardOutput {
  std::vector<double> action_logits;           // 8, indexed by Action
  std::vector<double> object_logits;           // M, ascending scene node id order
  std::vector<int> object_ids;                 // logit index -> scene node id
};

namespace net {

// Builds the whole network on the given tape and returns the logit node ids.
template <typename T>
DecodedLogits build_network(ad::Tape<T>& tape, const ParamSet<T>& P, const ModelConfig& cfg,
                            int instr_words, int instr_sentence, int robot_tokens,
                            const std::vector<std::pair<int, int>>& robot_edges,
                            int scene_tokens,
                            const std::vector<std::pair<int, int>>& scene_edges,
                            DropoutCtx* drop = nullptr) {
  int y_robot =
      gat_extract(tape, P, cfg, "gat_robot", robot_tokens, instr_sentence, robot_edges);
  int y_scene =
      gat_extract(tape, P, cfg, "gat_scene", scene_tokens, instr_sentence, scene_edges);
  EnhancedFeatures enh = enhance(tape, P, cfg, instr_words, y_robot, y_scene, drop);
  return decode(tape, P, cfg, enh.fusion, enh.q_robot, enh.q_scene, drop);
}

}  // namespace net

// Scalar-typed forward pass; T=double for training parity, T=float for deployment-style
// numerics. Throws InvalidGraph on inconsistent inputs and TooManyRobotNodes when the
// robot graph exceeds the action head budget.
template <typename T>
ForwardOutput forward_as(const std::string& instruction, const RobotGraph& r,
                         const SceneGraph& s, const ModelParams& params,
                         const ModelConfig& cfg, TextEncoder& enc) {
  cfg.validate();
  validate_pair(r, s);
  if (enc.dim() != cfg.d)
    throw ConfigError("encoder width " + std::to_string(enc.dim()) +
                      " != model width " + std::to_string(cfg.d));

  EmbeddingBundle instr = enc.encode_sentence(instruction);
  GraphEncoding rg = encode_graph_for_net(r, enc);
  GraphEncoding sg = encode_graph_for_net(s, enc);

  ad::Tape<T> tape;
  ParamSet<T> P(tape, params);
  int instr_words = tape.leaf(instruction_word_rows<T>(instr));
  int instr_sent = tape.leaf(rows_to_mat<T>({instr.sentence}));
  int robot_tokens = tape.leaf(rows_to_mat<T>(rg.tokens));
  int scene_tokens = tape.leaf(rows_to_mat<T>(sg.tokens));

  net::DecodedLogits out = net::build_network(tape, P, cfg, instr_words, instr_sent,
                                              robot_tokens, rg.edges, scene_tokens, sg.edges);

  ForwardOutput fo;
  const auto& act = tape.val(out.action);
  const auto& obj = tape.val(out.object);
  fo.action_logits.assign(act.data(), act.data() + act.size());
  fo.object_logits.assign(obj.data(), obj.data() + obj.size());
  fo.object_ids = sg.node_ids;
  return fo;
}

inline ForwardOutput forward(const std::string& instruction, const RobotGraph& r,
                             const SceneGraph& s, const ModelParams& params,
                             const ModelConfig& cfg, TextEncoder& enc) {
  return forward_as<double>(instruction, r, s, params, cfg, enc);
}

// Argmax with ties resolved to the lowest index, for both heads.
inline Subtask predict_from_output(const ForwardOutput& out) {
  int best_a = 0;
  for (int i = 1; i < kNumActions; ++i)
    if (out.action_logits[static_cast<std::size_t>(i)] >
        out.action_logits[static_cast<std::size_t>(best_a)])
      best_a = i;
  std::size_t best_o = 0;
  for (std::size_t i = 1; i < out.object_logits.size(); ++i)
    if (out.object_logits[i] > out.object_logits[best_o]) best_o = i;
  return Subtask{static_cast<Action>(best_a), out.object_ids[best_o]};
}

inline Subtask predict(const std::string& instruction, const RobotGraph& r, const SceneGraph& s,
                       const ModelParams& params, const ModelConfig& cfg, TextEncoder& enc) {
  return predict_from_output(forward(instruction, r, s, params, cfg, enc));
}

}  // namespace grid
