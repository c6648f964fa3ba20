#pragma once

// Hand-built states shared across test suites. The two-room scene exercises every
// feasibility rule: open surfaces, a closed revolute container with contents, and
// a closed longitudinal container.
//
//   floor 0
//   |- dining room 1
//   |  |- dining table 2          (surface)
//   |  |  `- teacup 7             (pickable, white)
//   |  `- cabinet 3               (revolute, closed, brown)
//   |     `- plate 8              (pickable, blue)
//   `- kitchen 4
//      |- kitchen table 5         (surface)
//      |  `- apple 9              (pickable, red)
//      `- drawer 6                (longitudinal, closed, gray)

#include <string>

#include "grid/graph.hpp"

namespace fixtures {

inline grid::Node make_node(int id, std::string category,
                            std::map<std::string, std::string> attrs = {},
                            std::array<double, 3> pos = {0, 0, 0}) {
  grid::Node n;
  n.id = id;
  n.category = std::move(category);
  n.attributes = std::move(attrs);
  n.position = pos;
  return n;
}

inline grid::SceneGraph two_room_scene() {
  grid::SceneGraph s;
  s.nodes = {
      make_node(0, "floor"),
      make_node(1, "dining room", {}, {0, 0, 0}),
      make_node(2, "dining table", {}, {1, 0, 0}),
      make_node(3, "cabinet",
                {{"articulation", "revolute"}, {"color", "brown"}, {"state", "closed"}},
                {2, 0, 0}),
      make_node(4, "kitchen", {}, {5, 0, 0}),
      make_node(5, "kitchen table", {}, {6, 0, 0}),
      make_node(6, "drawer",
                {{"articulation", "longitudinal"}, {"color", "gray"}, {"state", "closed"}},
                {7, 0, 0}),
      make_node(7, "teacup", {{"color", "white"}, {"pickable", "true"}}, {1, 0, 1}),
      make_node(8, "plate", {{"color", "blue"}, {"pickable", "true"}}, {2, 0, 1}),
      make_node(9, "apple", {{"color", "red"}, {"pickable", "true"}}, {6, 0, 1}),
  };
  s.edges = {
      {1, 0, "on"}, {2, 1, "on"}, {3, 1, "in"}, {4, 0, "on"},
      {5, 4, "on"}, {6, 4, "in"}, {7, 2, "on"}, {8, 3, "in"},
      {9, 5, "on"},
  };
  s.canonicalize();
  return s;
}

// Robot that has not moved yet: no near edges, empty gripper.
inline grid::RobotGraph initial_robot() {
  grid::RobotGraph r;
  r.nodes = {make_node(0, "robot")};
  return r;
}

}  // namespace fixtures
