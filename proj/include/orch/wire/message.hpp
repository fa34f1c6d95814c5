/* Copyright 2026 The Orch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef ORCH_WIRE_MESSAGE_HPP_
#define ORCH_WIRE_MESSAGE_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "orch/core/types.hpp"
#include "orch/util/result.hpp"

namespace orch {

// Master <-> executor vocabulary. One frame = one canonical JSON object with
// a "type" discriminator, keys sorted, terminated by a single newline byte.
// Every message carries `attempt` so receivers can classify frames as
// current-attempt or stale without further context.

enum class MessageType { Register, Spec, Heartbeat, Exit, Teardown };

enum class ChildState { NotStarted, Running, Exited };

inline const char* to_string(MessageType t) {
  switch (t) {
    case MessageType::Register: return "REGISTER";
    case MessageType::Spec: return "SPEC";
    case MessageType::Heartbeat: return "HEARTBEAT";
    case MessageType::Exit: return "EXIT";
    case MessageType::Teardown: return "TEARDOWN";
  }
  return "?";
}

inline const char* to_string(ChildState s) {
  switch (s) {
    case ChildState::NotStarted: return "NOT_STARTED";
    case ChildState::Running: return "RUNNING";
    case ChildState::Exited: return "EXITED";
  }
  return "?";
}

struct RegisterPayload {
  std::string host;
  int port = 0;
  std::optional<int> ui_port;

  bool operator==(const RegisterPayload&) const = default;
};

struct SpecPayload {
  std::string cluster_spec;  // canonical encoding, embedded as a string

  bool operator==(const SpecPayload&) const = default;
};

struct HeartbeatPayload {
  ChildState child_state = ChildState::NotStarted;

  bool operator==(const HeartbeatPayload&) const = default;
};

struct ExitPayload {
  int code = 0;

  bool operator==(const ExitPayload&) const = default;
};

struct TeardownPayload {
  std::int64_t grace_ms = 0;

  bool operator==(const TeardownPayload&) const = default;
};

struct Message {
  int attempt = 1;
  std::optional<TaskId> task;  // absent on master->executor broadcasts
  std::variant<RegisterPayload, SpecPayload, HeartbeatPayload, ExitPayload, TeardownPayload>
      payload;

  bool operator==(const Message&) const = default;

  MessageType type() const { return static_cast<MessageType>(payload.index()); }

  static Message make_register(int attempt, TaskId task, std::string host, int port,
                               std::optional<int> ui_port = std::nullopt) {
    return Message{attempt, std::move(task), RegisterPayload{std::move(host), port, ui_port}};
  }
  static Message make_spec(int attempt, std::string encoded_spec) {
    return Message{attempt, std::nullopt, SpecPayload{std::move(encoded_spec)}};
  }
  static Message make_heartbeat(int attempt, TaskId task, ChildState state) {
    return Message{attempt, std::move(task), HeartbeatPayload{state}};
  }
  static Message make_exit(int attempt, TaskId task, int code) {
    return Message{attempt, std::move(task), ExitPayload{code}};
  }
  static Message make_teardown(int attempt, std::int64_t grace_ms) {
    return Message{attempt, std::nullopt, TeardownPayload{grace_ms}};
  }
};

enum class DecodeErrorKind { MalformedSyntax, UnknownType, MissingField, InvariantViolation };

struct DecodeError {
  DecodeErrorKind kind;
  std::string detail;
};

inline const char* to_string(DecodeErrorKind k) {
  switch (k) {
    case DecodeErrorKind::MalformedSyntax: return "malformed-syntax";
    case DecodeErrorKind::UnknownType: return "unknown-type";
    case DecodeErrorKind::MissingField: return "missing-field";
    case DecodeErrorKind::InvariantViolation: return "invariant-violation";
  }
  return "?";
}

// One newline-terminated line, sorted keys, UTF-8, no interior newlines.
inline std::string encode(const Message& msg) {
  nlohmann::json obj = nlohmann::json::object();
  obj["type"] = to_string(msg.type());
  obj["attempt"] = msg.attempt;
  if (msg.task) obj["task"] = msg.task->str();
  switch (msg.type()) {
    case MessageType::Register: {
      const auto& p = std::get<RegisterPayload>(msg.payload);
      obj["host"] = p.host;
      obj["port"] = p.port;
      if (p.ui_port) obj["ui_port"] = *p.ui_port;
      break;
    }
    case MessageType::Spec:
      obj["cluster_spec"] = std::get<SpecPayload>(msg.payload).cluster_spec;
      break;
    case MessageType::Heartbeat:
      obj["child_state"] = to_string(std::get<HeartbeatPayload>(msg.payload).child_state);
      break;
    case MessageType::Exit:
      obj["code"] = std::get<ExitPayload>(msg.payload).code;
      break;
    case MessageType::Teardown:
      obj["grace_ms"] = std::get<TeardownPayload>(msg.payload).grace_ms;
      break;
  }
  return obj.dump() + "\n";
}

namespace wiredetail {

inline Result<std::int64_t, DecodeError> require_int(const nlohmann::json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end())
    return DecodeError{DecodeErrorKind::MissingField, name};
  if (!it->is_number_integer())
    return DecodeError{DecodeErrorKind::InvariantViolation, std::string(name) + " is not an integer"};
  return it->get<std::int64_t>();
}

inline Result<std::string, DecodeError> require_string(const nlohmann::json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end())
    return DecodeError{DecodeErrorKind::MissingField, name};
  if (!it->is_string())
    return DecodeError{DecodeErrorKind::InvariantViolation, std::string(name) + " is not a string"};
  return it->get<std::string>();
}

inline bool field_allowed(MessageType type, const std::string& key) {
  if (key == "type" || key == "attempt") return true;
  switch (type) {
    case MessageType::Register:
      return key == "task" || key == "host" || key == "port" || key == "ui_port";
    case MessageType::Spec:
      return key == "cluster_spec";
    case MessageType::Heartbeat:
      return key == "task" || key == "child_state";
    case MessageType::Exit:
      return key == "task" || key == "code";
    case MessageType::Teardown:
      return key == "grace_ms";
  }
  return false;
}

}  // namespace wiredetail

// Accepts a single line with or without its trailing newline; interior
// newlines are malformed. Strict about unknown fields so protocol drift is
// detectable, and about unknown discriminators so evolution is detectable.
inline Result<Message, DecodeError> decode(std::string_view frame) {
  using wiredetail::require_int;
  using wiredetail::require_string;

  if (!frame.empty() && frame.back() == '\n') frame.remove_suffix(1);
  if (frame.empty())
    return DecodeError{DecodeErrorKind::MalformedSyntax, "empty frame"};
  if (frame.find('\n') != std::string_view::npos)
    return DecodeError{DecodeErrorKind::MalformedSyntax, "interior newline"};

  nlohmann::json obj = nlohmann::json::parse(frame, nullptr, false);
  if (obj.is_discarded() || !obj.is_object())
    return DecodeError{DecodeErrorKind::MalformedSyntax, "not a JSON object"};

  auto type_field = require_string(obj, "type");
  if (!type_field) return type_field.error();
  const std::string& type_name = type_field.value();

  MessageType type;
  if (type_name == "REGISTER") type = MessageType::Register;
  else if (type_name == "SPEC") type = MessageType::Spec;
  else if (type_name == "HEARTBEAT") type = MessageType::Heartbeat;
  else if (type_name == "EXIT") type = MessageType::Exit;
  else if (type_name == "TEARDOWN") type = MessageType::Teardown;
  else return DecodeError{DecodeErrorKind::UnknownType, type_name};

  for (const auto& [key, _] : obj.items())
    if (!wiredetail::field_allowed(type, key))
      return DecodeError{DecodeErrorKind::InvariantViolation, "unexpected field: " + key};

  Message msg;
  auto attempt = require_int(obj, "attempt");
  if (!attempt) return attempt.error();
  if (attempt.value() < 1)
    return DecodeError{DecodeErrorKind::InvariantViolation, "attempt must be >= 1"};
  msg.attempt = static_cast<int>(attempt.value());

  const bool task_required =
      type == MessageType::Register || type == MessageType::Heartbeat || type == MessageType::Exit;
  if (task_required) {
    auto task_field = require_string(obj, "task");
    if (!task_field) return task_field.error();
    auto task = TaskId::parse(task_field.value());
    if (!task)
      return DecodeError{DecodeErrorKind::InvariantViolation, "bad task id: " + task_field.value()};
    msg.task = *task;
  }

  switch (type) {
    case MessageType::Register: {
      RegisterPayload p;
      auto host = require_string(obj, "host");
      if (!host) return host.error();
      p.host = host.value();
      auto port = require_int(obj, "port");
      if (!port) return port.error();
      if (port.value() < 1 || port.value() > 65535)
        return DecodeError{DecodeErrorKind::InvariantViolation, "port out of range"};
      p.port = static_cast<int>(port.value());
      if (obj.contains("ui_port")) {
        auto ui = require_int(obj, "ui_port");
        if (!ui) return ui.error();
        if (ui.value() < 1 || ui.value() > 65535)
          return DecodeError{DecodeErrorKind::InvariantViolation, "ui_port out of range"};
        p.ui_port = static_cast<int>(ui.value());
      }
      msg.payload = std::move(p);
      break;
    }
    case MessageType::Spec: {
      auto spec = require_string(obj, "cluster_spec");
      if (!spec) return spec.error();
      msg.payload = SpecPayload{spec.value()};
      break;
    }
    case MessageType::Heartbeat: {
      auto state = require_string(obj, "child_state");
      if (!state) return state.error();
      HeartbeatPayload p;
      if (state.value() == "NOT_STARTED") p.child_state = ChildState::NotStarted;
      else if (state.value() == "RUNNING") p.child_state = ChildState::Running;
      else if (state.value() == "EXITED") p.child_state = ChildState::Exited;
      else
        return DecodeError{DecodeErrorKind::InvariantViolation,
                           "bad child_state: " + state.value()};
      msg.payload = p;
      break;
    }
    case MessageType::Exit: {
      auto code = require_int(obj, "code");
      if (!code) return code.error();
      msg.payload = ExitPayload{static_cast<int>(code.value())};
      break;
    }
    case MessageType::Teardown: {
      auto grace = require_int(obj, "grace_ms");
      if (!grace) return grace.error();
      if (grace.value() < 0)
        return DecodeError{DecodeErrorKind::InvariantViolation, "grace_ms must be >= 0"};
      msg.payload = TeardownPayload{grace.value()};
      break;
    }
  }
  return msg;
}

}  // namespace orch

#endif  // ORCH_WIRE_MESSAGE_HPP_
