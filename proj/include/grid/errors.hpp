#pragma once

#include <stdexcept>
#include <string>

namespace grid {

// Graph failed structural validation; what() names the first violated invariant.
class InvalidGraph : public std::runtime_error {
public:
  explicit InvalidGraph(const std::string& msg) : std::runtime_error("invalid graph: " + msg) {}
};

// A subtask was applied whose precondition does not hold in the given state.
class InfeasibleSubtask : public std::runtime_error {
public:
  explicit InfeasibleSubtask(const std::string& msg)
      : std::runtime_error("infeasible subtask: " + msg) {}
};

// Malformed serialized artifact (trace line, checkpoint, config).
class ParseError : public std::runtime_error {
public:
  explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

// Config combination that cannot produce a valid run (e.g. too few objects for the room range).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

// Remote encoder / planner endpoint failed after the configured retries.
class ExternalServiceError : public std::runtime_error {
public:
  ExternalServiceError(const std::string& msg, int attempts_, int last_status_)
      : std::runtime_error("external service error: " + msg + " (attempts=" +
                           std::to_string(attempts_) + ", last_status=" +
                           std::to_string(last_status_) + ")"),
        attempts(attempts_), last_status(last_status_) {}
  int attempts;
  int last_status;  // HTTP status of the last attempt, -1 when the connection itself failed
};

// Robot graph exceeds the fixed row budget of the action head.
class TooManyRobotNodes : public std::runtime_error {
public:
  TooManyRobotNodes(std::size_t got, std::size_t cap)
      : std::runtime_error("robot graph has " + std::to_string(got) +
                           " nodes, action head capacity is " + std::to_string(cap)) {}
};

}  // namespace grid
