#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grid/errors.hpp"
#include "grid/graph.hpp"
#include "grid/state_machine.hpp"

namespace grid {

// State after one executed subtask.
struct Stage {
  SceneGraph scene;
  RobotGraph robot;

  bool operator==(const Stage&) const = default;
};

// One task: initial state, instruction, the ground-truth subtask sequence, and the state
// after each subtask. stages[k] is the post-state of subtasks[k]; the input for predicting
// subtasks[k] is stages[k-1] (or the initial pair for k = 0). The last subtask is finish
// and leaves the state unchanged.
struct TaskRecord {
  std::int64_t task_id = 0;
  std::string instruction;
  SceneGraph scene_0;
  RobotGraph robot_0;
  std::vector<Subtask> subtasks;
  std::vector<Stage> stages;

  bool operator==(const TaskRecord&) const = default;

  // Input state for predicting subtasks[k].
  const SceneGraph& scene_before(std::size_t k) const {
    return k == 0 ? scene_0 : stages[k - 1].scene;
  }
  const RobotGraph& robot_before(std::size_t k) const {
    return k == 0 ? robot_0 : stages[k - 1].robot;
  }
};

namespace detail {

using json = nlohmann::json;

inline json node_to_json(const Node& n) {
  json attrs = json::object();
  for (const auto& [k, v] : n.attributes) attrs[k] = v;
  return json{{"id", n.id},
              {"category", n.category},
              {"attributes", attrs},
              {"position", n.position}};
}

inline Node node_from_json(const json& j) {
  Node n;
  n.id = j.at("id").get<int>();
  n.category = j.at("category").get<std::string>();
  for (const auto& [k, v] : j.at("attributes").items()) n.attributes[k] = v.get<std::string>();
  const json& pos = j.at("position");
  if (!pos.is_array() || pos.size() != 3) throw ParseError("position must have 3 entries");
  for (std::size_t i = 0; i < 3; ++i) n.position[i] = pos[i].get<double>();
  return n;
}

template <typename Graph>
json graph_to_json(const Graph& g) {
  json nodes = json::array();
  for (const Node& n : g.nodes) nodes.push_back(node_to_json(n));
  json edges = json::array();
  for (const Edge& e : g.edges)
    edges.push_back(json{{"src", e.src}, {"dst", e.dst}, {"relation", e.relation}});
  return json{{"nodes", nodes}, {"edges", edges}};
}

template <typename Graph>
Graph graph_from_json(const json& j) {
  Graph g;
  for (const json& n : j.at("nodes")) g.nodes.push_back(node_from_json(n));
  for (const json& e : j.at("edges"))
    g.edges.push_back(Edge{e.at("src").get<int>(), e.at("dst").get<int>(),
                           e.at("relation").get<std::string>()});
  validate_graph(g);
  return g;
}

}  // namespace detail

// One task per line; key order inside a line is lexicographic, so equal records
// serialize to identical bytes.
inline std::string serialize_trace(const TaskRecord& t) {
  using detail::json;
  json subtasks = json::array();
  for (const Subtask& st : t.subtasks)
    subtasks.push_back(json{{"action", action_name(st.action)}, {"object_id", st.object_id}});
  json stages = json::array();
  for (const Stage& stage : t.stages)
    stages.push_back(json{{"scene", detail::graph_to_json(stage.scene)},
                          {"robot", detail::graph_to_json(stage.robot)}});
  json j{{"task_id", t.task_id},
         {"instruction", t.instruction},
         {"scene_0", detail::graph_to_json(t.scene_0)},
         {"robot_0", detail::graph_to_json(t.robot_0)},
         {"subtasks", subtasks},
         {"stages", stages}};
  return j.dump();
}

// Parses one line produced by serialize_trace. Throws ParseError on malformed JSON or
// schema violations and InvalidGraph when an embedded graph fails validation.
inline TaskRecord deserialize_trace(const std::string& line) {
  using detail::json;
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad trace line: ") + e.what());
  }
  try {
    TaskRecord t;
    t.task_id = j.at("task_id").get<std::int64_t>();
    t.instruction = j.at("instruction").get<std::string>();
    t.scene_0 = detail::graph_from_json<SceneGraph>(j.at("scene_0"));
    t.robot_0 = detail::graph_from_json<RobotGraph>(j.at("robot_0"));
    for (const json& st : j.at("subtasks")) {
      auto action = action_from_name(st.at("action").get<std::string>());
      if (!action.has_value())
        throw ParseError("unknown action '" + st.at("action").get<std::string>() + "'");
      t.subtasks.push_back({*action, st.at("object_id").get<int>()});
    }
    for (const json& stage : j.at("stages"))
      t.stages.push_back(Stage{detail::graph_from_json<SceneGraph>(stage.at("scene")),
                               detail::graph_from_json<RobotGraph>(stage.at("robot"))});
    if (t.subtasks.size() != t.stages.size())
      throw ParseError("subtasks and stages must have equal length");
    return t;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad trace schema: ") + e.what());
  }
}

inline void write_dataset(std::ostream& os, const std::vector<TaskRecord>& tasks) {
  for (const TaskRecord& t : tasks) os << serialize_trace(t) << '\n';
}

inline std::vector<TaskRecord> read_dataset(std::istream& is) {
  std::vector<TaskRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(deserialize_trace(line));
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace grid
