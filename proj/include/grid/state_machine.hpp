#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "grid/errors.hpp"
#include "grid/graph.hpp"

namespace grid {

// The eight primitive robot skills. Enum order fixes the action head's logit layout
// and the canonical ordering of feasible sets; do not reorder.
enum class Action : int {
  move = 0,
  pick = 1,
  place_to = 2,
  revolute_open = 3,
  revolute_close = 4,
  longitudinal_open = 5,
  longitudinal_close = 6,
  finish = 7,
};

inline constexpr int kNumActions = 8;

// Wire form used in dataset files and subtask keys ("place_to").
inline const char* action_name(Action a) {
  switch (a) {
    case Action::move: return "move";
    case Action::pick: return "pick";
    case Action::place_to: return "place_to";
    case Action::revolute_open: return "revolute_open";
    case Action::revolute_close: return "revolute_close";
    case Action::longitudinal_open: return "longitudinal_open";
    case Action::longitudinal_close: return "longitudinal_close";
    case Action::finish: return "finish";
  }
  return "?";
}

// Spoken form used in prompts and parsed from planner replies ("place to").
inline const char* action_phrase(Action a) {
  switch (a) {
    case Action::move: return "move";
    case Action::pick: return "pick";
    case Action::place_to: return "place to";
    case Action::revolute_open: return "revolute open";
    case Action::revolute_close: return "revolute close";
    case Action::longitudinal_open: return "longitudinal open";
    case Action::longitudinal_close: return "longitudinal close";
    case Action::finish: return "finish";
  }
  return "?";
}

inline std::optional<Action> action_from_name(const std::string& name) {
  for (int i = 0; i < kNumActions; ++i) {
    Action a = static_cast<Action>(i);
    if (name == action_name(a)) return a;
  }
  return std::nullopt;
}

// One planner step: an action applied to a scene node. For finish the object id is
// always 0 (the robot's own id); for every other action it names a scene node.
struct Subtask {
  Action action = Action::finish;
  int object_id = 0;

  bool operator==(const Subtask&) const = default;
  bool operator<(const Subtask& o) const {
    if (action != o.action) return static_cast<int>(action) < static_cast<int>(o.action);
    return object_id < o.object_id;
  }
};

inline std::string to_string(const Subtask& t) {
  return std::string(action_name(t.action)) + "-" + std::to_string(t.object_id);
}

namespace detail {

// Same-parent nodes, excluding the node itself. The root has no siblings.
inline std::vector<int> siblings_of(const SceneGraph& s, int id) {
  std::vector<int> out;
  std::optional<int> p = s.parent_of(id);
  if (!p.has_value()) return out;
  for (int c : s.children_of(*p))
    if (c != id) out.push_back(c);
  return out;
}

// Reach set after moving to target: the target, its children, and its siblings.
// Children are included so contents of the approached furniture are reachable
// (picking from a table the robot just moved to); siblings so adjacent furniture
// in the same room can be operated without another move.
inline std::vector<int> near_set(const SceneGraph& s, int target) {
  std::vector<int> out = s.children_of(target);
  for (int sib : siblings_of(s, target)) out.push_back(sib);
  out.push_back(target);
  std::sort(out.begin(), out.end());
  return out;
}

// A held object can be released onto t when t is reachable, not the floor root,
// not pickable itself (placement keeps the forest depth <= 3), and open if articulated.
inline bool placeable_on(const SceneGraph& s, const Node& t, int root) {
  if (t.id == root) return false;
  if (t.attr_is("pickable", "true")) return false;
  if (t.attr("articulation") != nullptr && !t.attr_is("state", "open")) return false;
  return true;
}

}  // namespace detail

// Enumerates every subtask whose precondition holds in (r, s), ascending by
// (action, object_id). Rules:
//   move x            x is any scene node except the floor root
//   pick x            gripper empty, robot near x, x pickable, x's parent not a closed container
//   place_to t        gripper holds some object, robot near t, t placeable (see above)
//   revolute_open x   robot near x, articulation revolute, state closed
//   revolute_close x  robot near x, articulation revolute, state open
//   longitudinal_*    same with articulation longitudinal
//   finish            always feasible, carries the robot id 0
inline std::vector<Subtask> feasible_subtasks(const RobotGraph& r, const SceneGraph& s) {
  std::vector<Subtask> out;
  const int root = s.root_id();
  for (const Node& n : s.nodes)
    if (n.id != root) out.push_back({Action::move, n.id});

  const std::optional<int> held = r.grasped_id();
  const std::vector<int> near = r.near_ids();

  for (int id : near) {
    const Node* n = s.find(id);
    if (n == nullptr) continue;  // validate_pair rejects this; stay defensive
    if (!held.has_value() && n->attr_is("pickable", "true")) {
      std::optional<int> p = s.parent_of(id);
      bool boxed_in = false;
      if (p.has_value()) {
        const Node* parent = s.find(*p);
        boxed_in = parent != nullptr && parent->attr_is("state", "closed");
      }
      if (!boxed_in) out.push_back({Action::pick, id});
    }
    if (held.has_value() && id != *held && detail::placeable_on(s, *n, root))
      out.push_back({Action::place_to, id});
    const std::string* art = n->attr("articulation");
    if (art != nullptr) {
      const bool open = n->attr_is("state", "open");
      if (*art == "revolute")
        out.push_back({open ? Action::revolute_close : Action::revolute_open, id});
      else
        out.push_back({open ? Action::longitudinal_close : Action::longitudinal_open, id});
    }
  }

  out.push_back({Action::finish, 0});
  std::sort(out.begin(), out.end());
  return out;
}

// State after executing t from (r, s). Inputs are untouched; outputs are canonical and
// valid whenever the inputs were. Throws InfeasibleSubtask when t's precondition fails.
struct StatePair {
  RobotGraph robot;
  SceneGraph scene;
};

inline StatePair apply_subtask(const RobotGraph& r, const SceneGraph& s, const Subtask& t) {
  {
    std::vector<Subtask> feas = feasible_subtasks(r, s);
    if (!std::binary_search(feas.begin(), feas.end(), t))
      throw InfeasibleSubtask(to_string(t));
  }

  StatePair out{r, s};
  RobotGraph& nr = out.robot;
  SceneGraph& ns = out.scene;

  switch (t.action) {
    case Action::move: {
      // Rebuild the robot graph: robot + held object + fresh near set around the target.
      const std::optional<int> held = r.grasped_id();
      Node robot = *r.find(0);
      robot.position = ns.find(t.object_id)->position;
      std::vector<Node> nodes{robot};
      std::vector<Edge> edges;
      for (int id : detail::near_set(ns, t.object_id)) {
        if (held.has_value() && id == *held) continue;  // held object is detached from the scene
        nodes.push_back(*ns.find(id));
        edges.push_back({0, id, "near"});
      }
      if (held.has_value()) {
        Node carried = *r.find(*held);
        carried.position = robot.position;  // held objects travel with the robot
        ns.find(*held)->position = robot.position;
        nodes.push_back(std::move(carried));
        edges.push_back({*held, 0, "grasped_by"});
      }
      std::sort(nodes.begin(), nodes.end(),
                [](const Node& a, const Node& b) { return a.id < b.id; });
      nr.nodes = std::move(nodes);
      nr.edges = std::move(edges);
      nr.canonicalize();
      break;
    }
    case Action::pick: {
      // Detach from the scene, swap the near edge for a grasped edge.
      std::erase_if(ns.edges, [&](const Edge& e) { return e.src == t.object_id; });
      std::erase_if(nr.edges, [&](const Edge& e) {
        return e.relation == "near" && e.dst == t.object_id;
      });
      nr.edges.push_back({t.object_id, 0, "grasped_by"});
      Node* held = nr.find(t.object_id);
      held->position = nr.find(0)->position;
      ns.find(t.object_id)->position = held->position;
      nr.canonicalize();
      ns.canonicalize();
      break;
    }
    case Action::place_to: {
      const int held = *r.grasped_id();
      const Node* target = ns.find(t.object_id);
      // Containers take "in", open surfaces take "on".
      const char* rel = target->attr("articulation") != nullptr ? "in" : "on";
      ns.edges.push_back({held, t.object_id, rel});
      Node* placed = ns.find(held);
      placed->position = target->position;
      placed->position[2] += 0.1;
      std::erase_if(nr.edges, [&](const Edge& e) { return e.relation == "grasped_by"; });
      nr.edges.push_back({0, held, "near"});
      nr.find(held)->position = placed->position;
      nr.canonicalize();
      ns.canonicalize();
      break;
    }
    case Action::revolute_open:
    case Action::longitudinal_open:
    case Action::revolute_close:
    case Action::longitudinal_close: {
      const bool opening =
          t.action == Action::revolute_open || t.action == Action::longitudinal_open;
      ns.find(t.object_id)->attributes["state"] = opening ? "open" : "closed";
      // The robot graph mirrors scene node data.
      nr.find(t.object_id)->attributes["state"] = opening ? "open" : "closed";
      break;
    }
    case Action::finish:
      break;  // terminal marker, no state change
  }
  return out;
}

}  // namespace grid
