#include <gtest/gtest.h>

#include <sstream>

#include "grid/state_machine.hpp"
#include "grid/text.hpp"
#include "grid/trace.hpp"

#include "fixtures.hpp"

using grid::Action;
using grid::Node;
using grid::RobotGraph;
using grid::SceneGraph;
using grid::StatePair;
using grid::TaskRecord;

TEST(Text, NodeSentences) {
  Node shelves = fixtures::make_node(3, "display shelves", {{"color", "purple"}});
  EXPECT_EQ(grid::node_sentence(shelves, true), "purple display shelves 3");
  EXPECT_EQ(grid::node_sentence(shelves, false), "purple display shelves");

  Node cabinet = fixtures::make_node(
      5, "cabinet", {{"articulation", "revolute"}, {"color", "brown"}, {"state", "closed"}});
  EXPECT_EQ(grid::node_sentence(cabinet, true), "closed brown cabinet 5");

  Node floor = fixtures::make_node(0, "floor");
  EXPECT_EQ(grid::node_sentence(floor, true), "floor 0");
}

TEST(Text, SceneDescription) {
  SceneGraph s = fixtures::two_room_scene();
  std::string text = grid::graph_to_text(s);
  EXPECT_NE(text.find("The current scene has objects with ids: floor 0, dining room 1"),
            std::string::npos);
  EXPECT_NE(text.find("The relationships between objects in the scenes are: "),
            std::string::npos);
  EXPECT_NE(text.find("dining room 1 is on floor 0"), std::string::npos);
  EXPECT_NE(text.find("plate 8 is in cabinet 3"), std::string::npos);
  // Edge sentences name nodes by category and id only.
  EXPECT_EQ(text.find("blue plate 8 is in"), std::string::npos);
}

TEST(Text, RobotDescription) {
  RobotGraph r = fixtures::initial_robot();
  r.nodes.push_back(fixtures::make_node(2, "pen", {{"color", "brown"}}));
  r.edges = {{2, 0, "grasped_by"}};
  std::string text = grid::graph_to_text(r);
  EXPECT_NE(text.find("The objects and object IDs around the robot: robot 0, brown pen 2."),
            std::string::npos);
  EXPECT_NE(text.find("pen 2 is grasped by robot 0"), std::string::npos);

  std::string empty = grid::graph_to_text(fixtures::initial_robot());
  EXPECT_NE(empty.find("The relationships between objects around the robot are: none."),
            std::string::npos);
}

TEST(Text, EncodingSentencesDropIds) {
  SceneGraph s = fixtures::two_room_scene();
  std::vector<std::string> rows = grid::node_sentences_for_encoding(s);
  ASSERT_EQ(rows.size(), s.nodes.size());
  EXPECT_EQ(rows[0], "floor");
  EXPECT_EQ(rows[3], "closed brown cabinet");
  EXPECT_EQ(rows[7], "white teacup");
}

namespace {

TaskRecord sample_record() {
  TaskRecord t;
  t.task_id = 42;
  t.instruction = "Please help me take the teacup from the dining table to the kitchen table.";
  t.scene_0 = fixtures::two_room_scene();
  t.robot_0 = fixtures::initial_robot();
  t.subtasks = {{Action::move, 2}, {Action::pick, 7}, {Action::move, 5},
                {Action::place_to, 5}, {Action::finish, 0}};
  StatePair st{t.robot_0, t.scene_0};
  for (const grid::Subtask& sub : t.subtasks) {
    st = grid::apply_subtask(st.robot, st.scene, sub);
    t.stages.push_back({st.scene, st.robot});
  }
  return t;
}

}  // namespace

TEST(Trace, RoundTripPreservesEverything) {
  TaskRecord t = sample_record();
  std::string line = grid::serialize_trace(t);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  TaskRecord back = grid::deserialize_trace(line);
  EXPECT_EQ(back, t);
}

TEST(Trace, SerializationIsByteStable) {
  TaskRecord t = sample_record();
  EXPECT_EQ(grid::serialize_trace(t), grid::serialize_trace(t));
  EXPECT_EQ(grid::serialize_trace(grid::deserialize_trace(grid::serialize_trace(t))),
            grid::serialize_trace(t));
}

TEST(Trace, StageAccessors) {
  TaskRecord t = sample_record();
  EXPECT_EQ(t.scene_before(0), t.scene_0);
  EXPECT_EQ(t.robot_before(2), t.stages[1].robot);
  // finish is recorded but changes nothing.
  EXPECT_EQ(t.stages[4], t.stages[3]);
}

TEST(Trace, MalformedLinesThrow) {
  EXPECT_THROW(grid::deserialize_trace("not json"), grid::ParseError);
  EXPECT_THROW(grid::deserialize_trace("{}"), grid::ParseError);
  EXPECT_THROW(grid::deserialize_trace(R"({"task_id": 1})"), grid::ParseError);

  // Unknown action name.
  TaskRecord t = sample_record();
  std::string line = grid::serialize_trace(t);
  std::string bad = line;
  bad.replace(bad.find("\"pick\""), 6, "\"yeet\"");
  EXPECT_THROW(grid::deserialize_trace(bad), grid::ParseError);

  // Graph violations surface as InvalidGraph.
  std::string cyclic = line;
  // scene_0 edges include {"dst":0,...,"src":1}; retarget node 1's parent to itself -> self edge.
  std::size_t pos = cyclic.find("\"dst\":0,\"relation\":\"on\",\"src\":1");
  ASSERT_NE(pos, std::string::npos);
  cyclic.replace(pos, 31, "\"dst\":1,\"relation\":\"on\",\"src\":1");
  EXPECT_THROW(grid::deserialize_trace(cyclic), grid::InvalidGraph);
}

TEST(Trace, DatasetStreamRoundTrip) {
  TaskRecord t = sample_record();
  TaskRecord t2 = sample_record();
  t2.task_id = 43;
  std::stringstream ss;
  grid::write_dataset(ss, {t, t2});

  std::vector<TaskRecord> back = grid::read_dataset(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], t);
  EXPECT_EQ(back[1], t2);

  std::stringstream bad("{\"task_id\": 1}\n");
  try {
    grid::read_dataset(bad);
    FAIL() << "expected ParseError";
  } catch (const grid::ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
  }
}
