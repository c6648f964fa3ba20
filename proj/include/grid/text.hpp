#pragma once

#include <string>
#include <vector>

#include "grid/graph.hpp"

namespace grid {

// Natural-language name of a node: "[state] [color] category [id]".
// Examples: "purple display shelves 3", "closed brown cabinet 5", "robot 0".
// with_id=false yields the label-free form fed to the text encoder, so swapping
// node ids can never change embeddings; prompts always include the id.
inline std::string node_sentence(const Node& n, bool with_id) {
  std::string out;
  if (const std::string* state = n.attr("state")) out += *state + " ";
  if (const std::string* color = n.attr("color")) out += *color + " ";
  out += n.category;
  if (with_id) out += " " + std::to_string(n.id);
  return out;
}

namespace detail {

inline std::string short_name(const Node& n) {
  return n.category + " " + std::to_string(n.id);
}

template <typename Graph>
std::string edge_sentence(const Graph& g, const Edge& e) {
  const Node* src = g.find(e.src);
  const Node* dst = g.find(e.dst);
  std::string rel;
  if (e.relation == "on") rel = "is on";
  else if (e.relation == "in") rel = "is in";
  else if (e.relation == "near") rel = "is near";
  else rel = "is grasped by";
  return short_name(*src) + " " + rel + " " + short_name(*dst);
}

template <typename Graph>
std::string describe(const Graph& g, const std::string& nodes_lead,
                     const std::string& edges_lead) {
  std::string out = nodes_lead;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (i > 0) out += ", ";
    out += node_sentence(g.nodes[i], /*with_id=*/true);
  }
  out += ". " + edges_lead;
  if (g.edges.empty()) {
    out += "none";
  } else {
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
      if (i > 0) out += ", ";
      out += edge_sentence(g, g.edges[i]);
    }
  }
  out += ".";
  return out;
}

}  // namespace detail

// Prompt body for the scene section, e.g.
// "The current scene has objects with ids: floor 0, dining room 1, black dining table 2.
//  The relationships between objects in the scenes are: dining room 1 is on floor 0, ...".
inline std::string graph_to_text(const SceneGraph& s) {
  return detail::describe(s, "The current scene has objects with ids: ",
                          "The relationships between objects in the scenes are: ");
}

// Prompt body for the robot section, e.g.
// "The objects and object IDs around the robot: robot 0, brown pen 2.
//  The relationships between objects around the robot are: pen 2 is grasped by robot 0.".
inline std::string graph_to_text(const RobotGraph& r) {
  return detail::describe(r, "The objects and object IDs around the robot: ",
                          "The relationships between objects around the robot are: ");
}

// Encoder-facing node sentences in node order (ids stripped, see node_sentence).
template <typename Graph>
std::vector<std::string> node_sentences_for_encoding(const Graph& g) {
  std::vector<std::string> out;
  out.reserve(g.nodes.size());
  for (const Node& n : g.nodes) out.push_back(node_sentence(n, /*with_id=*/false));
  return out;
}

}  // namespace grid
