#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "grid/errors.hpp"

namespace grid {

// One entity in a graph. attributes is an ordered map so serialization is byte-stable.
// Known keys: "color", "pickable" ("true"), "articulation" ("revolute"|"longitudinal"),
// "state" ("open"|"closed").
struct Node {
  int id = 0;
  std::string category;
  std::map<std::string, std::string> attributes;
  std::array<double, 3> position{0.0, 0.0, 0.0};

  bool operator==(const Node&) const = default;

  const std::string* attr(const std::string& key) const {
    auto it = attributes.find(key);
    return it == attributes.end() ? nullptr : &it->second;
  }
  bool attr_is(const std::string& key, const std::string& val) const {
    const std::string* v = attr(key);
    return v != nullptr && *v == val;
  }
};

// Directed edge src -> dst. Scene relations: "on", "in" (child -> parent).
// Robot relations: "near" (robot -> object), "grasped_by" (object -> robot).
struct Edge {
  int src = 0;
  int dst = 0;
  std::string relation;

  bool operator==(const Edge&) const = default;
  // Canonical order: (src, dst, relation).
  bool operator<(const Edge& o) const {
    return std::tie(src, dst, relation) < std::tie(o.src, o.dst, o.relation);
  }
};

namespace detail {

inline void sort_edges(std::vector<Edge>& edges) { std::sort(edges.begin(), edges.end()); }

inline void check_common(const std::vector<Node>& nodes, const std::vector<Edge>& edges,
                         const std::set<std::string>& allowed_relations) {
  if (nodes.empty()) throw InvalidGraph("no nodes");
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    if (nodes[i].id >= nodes[i + 1].id)
      throw InvalidGraph("node ids must be strictly ascending, got " +
                         std::to_string(nodes[i].id) + " before " +
                         std::to_string(nodes[i + 1].id));
  }
  std::set<int> ids;
  for (const Node& n : nodes) ids.insert(n.id);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const Edge& e = edges[i];
    if (!ids.count(e.src) || !ids.count(e.dst))
      throw InvalidGraph("edge references unknown node " +
                         std::to_string(ids.count(e.src) ? e.dst : e.src));
    if (e.src == e.dst) throw InvalidGraph("self edge on node " + std::to_string(e.src));
    if (!allowed_relations.count(e.relation))
      throw InvalidGraph("relation '" + e.relation + "' not allowed");
    if (i > 0 && !(edges[i - 1] < e))
      throw InvalidGraph("edges must be strictly ascending in (src, dst, relation) order");
  }
}

}  // namespace detail

// Environment state: a forest of containment edges rooted at a single floor node.
// Depth layers: 0 floor, 1 rooms, 2 furniture, 3 small objects; depth never exceeds 3.
struct SceneGraph {
  std::vector<Node> nodes;  // strictly ascending by id
  std::vector<Edge> edges;  // strictly ascending by (src, dst, relation)

  bool operator==(const SceneGraph&) const = default;

  std::size_t size() const { return nodes.size(); }

  // Ordinal of a node id within the sorted node list; -1 if absent.
  int index_of(int id) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                               [](const Node& n, int v) { return n.id < v; });
    if (it == nodes.end() || it->id != id) return -1;
    return static_cast<int>(it - nodes.begin());
  }

  const Node* find(int id) const {
    int i = index_of(id);
    return i < 0 ? nullptr : &nodes[static_cast<std::size_t>(i)];
  }
  Node* find(int id) {
    int i = index_of(id);
    return i < 0 ? nullptr : &nodes[static_cast<std::size_t>(i)];
  }

  // Parent id via the unique outgoing containment edge; nullopt for the root.
  std::optional<int> parent_of(int id) const {
    for (const Edge& e : edges)
      if (e.src == id) return e.dst;
    return std::nullopt;
  }

  std::vector<int> children_of(int id) const {
    std::vector<int> out;
    for (const Edge& e : edges)
      if (e.dst == id) out.push_back(e.src);
    std::sort(out.begin(), out.end());
    return out;
  }

  // Structural root of the containment forest (the floor): the unique parentless node
  // that is not a detached pickable object. Validation guarantees uniqueness.
  int root_id() const {
    for (const Node& n : nodes)
      if (!parent_of(n.id).has_value() && !n.attr_is("pickable", "true")) return n.id;
    throw InvalidGraph("no root");
  }

  void canonicalize() { detail::sort_edges(edges); }
};

// Robot-centric state: node id 0 is the robot; every other node mirrors a scene node
// (same id, category, attributes, position). Edges: "near" robot->object for each object
// in the robot's reach set, "grasped_by" object->robot for the held object (at most one).
struct RobotGraph {
  std::vector<Node> nodes;
  std::vector<Edge> edges;

  bool operator==(const RobotGraph&) const = default;

  std::size_t size() const { return nodes.size(); }

  int index_of(int id) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                               [](const Node& n, int v) { return n.id < v; });
    if (it == nodes.end() || it->id != id) return -1;
    return static_cast<int>(it - nodes.begin());
  }

  const Node* find(int id) const {
    int i = index_of(id);
    return i < 0 ? nullptr : &nodes[static_cast<std::size_t>(i)];
  }
  Node* find(int id) {
    int i = index_of(id);
    return i < 0 ? nullptr : &nodes[static_cast<std::size_t>(i)];
  }

  // Id of the held object, if any.
  std::optional<int> grasped_id() const {
    for (const Edge& e : edges)
      if (e.relation == "grasped_by") return e.src;
    return std::nullopt;
  }

  // Ids the robot is near, ascending.
  std::vector<int> near_ids() const {
    std::vector<int> out;
    for (const Edge& e : edges)
      if (e.relation == "near") out.push_back(e.dst);
    std::sort(out.begin(), out.end());
    return out;
  }

  void canonicalize() { detail::sort_edges(edges); }
};

// Throws InvalidGraph unless s is a canonical single-rooted containment forest of depth <= 3
// with consistent attributes on articulated nodes.
inline void validate_graph(const SceneGraph& s) {
  detail::check_common(s.nodes, s.edges, {"on", "in"});
  std::map<int, int> parent;
  for (const Edge& e : s.edges) {
    if (parent.count(e.src))
      throw InvalidGraph("node " + std::to_string(e.src) + " has two parents");
    parent[e.src] = e.dst;
  }
  // Exactly one structural root; further parentless nodes must be detached pickable
  // leaves (objects currently held by a robot are removed from the containment forest).
  int structural_roots = 0;
  for (const Node& n : s.nodes) {
    if (parent.count(n.id)) continue;
    if (n.attr_is("pickable", "true")) {
      bool has_child = false;
      for (const auto& [c, p] : parent) has_child |= (p == n.id);
      if (has_child)
        throw InvalidGraph("detached node " + std::to_string(n.id) + " has children");
    } else {
      ++structural_roots;
    }
  }
  if (structural_roots != 1)
    throw InvalidGraph(std::to_string(structural_roots) +
                       " structural roots, expected exactly 1");
  // Depth check also proves acyclicity: every chain must reach the root in <= 3 hops.
  for (const Node& n : s.nodes) {
    int depth = 0;
    int cur = n.id;
    while (parent.count(cur)) {
      cur = parent[cur];
      if (++depth > 3)
        throw InvalidGraph("node " + std::to_string(n.id) + " deeper than 3 or in a cycle");
    }
  }
  for (const Node& n : s.nodes) {
    const std::string* art = n.attr("articulation");
    const std::string* st = n.attr("state");
    if (art != nullptr) {
      if (*art != "revolute" && *art != "longitudinal")
        throw InvalidGraph("node " + std::to_string(n.id) + " has articulation '" + *art + "'");
      if (st == nullptr || (*st != "open" && *st != "closed"))
        throw InvalidGraph("articulated node " + std::to_string(n.id) +
                           " needs state open|closed");
    } else if (st != nullptr) {
      throw InvalidGraph("node " + std::to_string(n.id) + " has state without articulation");
    }
  }
}

// Throws InvalidGraph unless r has the robot at id 0, at most one grasped edge, and
// near/grasped edges with the right endpoints. Every non-robot node must be referenced
// by at least one edge (the robot graph carries no free-floating context).
inline void validate_graph(const RobotGraph& r) {
  detail::check_common(r.nodes, r.edges, {"near", "grasped_by"});
  const Node* robot = r.find(0);
  if (robot == nullptr || robot->category != "robot")
    throw InvalidGraph("robot graph needs node 0 with category 'robot'");
  int grasped = 0;
  std::set<int> referenced;
  for (const Edge& e : r.edges) {
    if (e.relation == "near") {
      if (e.src != 0 || e.dst == 0) throw InvalidGraph("near edge must be robot -> object");
      referenced.insert(e.dst);
    } else {  // grasped_by
      if (e.dst != 0 || e.src == 0) throw InvalidGraph("grasped_by edge must be object -> robot");
      referenced.insert(e.src);
      ++grasped;
    }
  }
  if (grasped > 1) throw InvalidGraph("more than one grasped object");
  for (const Node& n : r.nodes)
    if (n.id != 0 && !referenced.count(n.id))
      throw InvalidGraph("robot-graph node " + std::to_string(n.id) + " has no edge");
}

// Cross-graph consistency: every non-robot node of r mirrors a scene node with the same
// category and attributes, except the held object which exists in s but is detached there.
inline void validate_pair(const RobotGraph& r, const SceneGraph& s) {
  validate_graph(s);
  validate_graph(r);
  for (const Node& n : r.nodes) {
    if (n.id == 0) continue;
    const Node* sn = s.find(n.id);
    if (sn == nullptr)
      throw InvalidGraph("robot-graph node " + std::to_string(n.id) + " missing from scene");
    if (sn->category != n.category || sn->attributes != n.attributes)
      throw InvalidGraph("robot-graph node " + std::to_string(n.id) +
                         " out of sync with scene");
  }
  if (std::optional<int> g = r.grasped_id()) {
    if (s.parent_of(*g).has_value())
      throw InvalidGraph("grasped node " + std::to_string(*g) +
                         " still has a scene parent");
  }
}

}  // namespace grid
