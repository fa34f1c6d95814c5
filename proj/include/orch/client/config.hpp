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
#ifndef ORCH_CLIENT_CONFIG_HPP_
#define ORCH_CLIENT_CONFIG_HPP_

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "orch/core/types.hpp"
#include "orch/util/log.hpp"
#include "orch/util/result.hpp"

namespace orch {
namespace client {

// Hadoop-style property document:
//   <configuration>
//     <property><name>orch.worker.instances</name><value>2</value></property>
//   </configuration>
// Duplicate names resolve last-wins with a warning. Unknown orch.* keys are
// hard errors: silent config typos are the failure mode to kill.

struct RawProperty {
  std::string name;
  std::string value;
};

struct ConfigError {
  std::string key;  // offending property or field
  std::string message;
};

namespace configdetail {

inline std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline Result<std::int64_t, std::string> parse_positive_int(const std::string& text,
                                                            std::int64_t min_value) {
  const std::string t = trim(text);
  if (t.empty() || t.size() > 10) return std::string("not a number: '" + text + "'");
  for (char c : t)
    if (!std::isdigit(static_cast<unsigned char>(c)))
      return std::string("not a number: '" + text + "'");
  const std::int64_t v = std::stoll(t);
  if (v < min_value)
    return std::string("must be >= " + std::to_string(min_value) + ", got " + t);
  return v;
}

inline Result<bool, std::string> parse_bool(const std::string& text) {
  const std::string t = trim(text);
  if (t == "true") return true;
  if (t == "false") return false;
  return std::string("not a boolean (true|false): '" + text + "'");
}

}  // namespace configdetail

// Memory strings: bare number or `m` suffix = MiB, `g` suffix = GiB,
// case-insensitive. No fractions.
inline Result<std::int64_t, std::string> parse_memory(const std::string& text) {
  const std::string t = configdetail::trim(text);
  if (t.empty()) return std::string("malformed-memory-string: ''");
  std::int64_t multiplier = 1;
  std::string digits = t;
  const char suffix = static_cast<char>(std::tolower(static_cast<unsigned char>(t.back())));
  if (suffix == 'm' || suffix == 'g') {
    multiplier = suffix == 'g' ? 1024 : 1;
    digits = t.substr(0, t.size() - 1);
  }
  if (digits.empty() || digits.size() > 12) return "malformed-memory-string: '" + text + "'";
  for (char c : digits)
    if (!std::isdigit(static_cast<unsigned char>(c)))
      return "malformed-memory-string: '" + text + "'";
  return std::stoll(digits) * multiplier;
}

inline Result<std::vector<RawProperty>, std::string> parse_xml_properties(
    const std::string& document) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(document);
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    return std::string("malformed XML: ") + e.what();
  }
  auto configuration = tree.get_child_optional("configuration");
  if (!configuration) return std::string("malformed XML: no <configuration> root");
  std::vector<RawProperty> out;
  for (const auto& [tag, node] : *configuration) {
    if (tag != "property") continue;
    auto name = node.get_optional<std::string>("name");
    if (!name) return std::string("malformed XML: <property> without <name>");
    auto value = node.get_optional<std::string>("value");
    out.push_back({configdetail::trim(*name), value ? configdetail::trim(*value) : ""});
  }
  return out;
}

// Group names the XML grammar accepts. Keys naming anything else are
// rejected outright: with an open vocabulary a misspelled group would
// silently become a new one-task group, which is exactly the class of
// config typo this parser exists to catch. Programmatic JobSpecs (and the
// harness scenario format) take any well-formed group name.
inline const std::vector<std::string>& known_group_names() {
  static const std::vector<std::string> names = {"worker", "ps", "chief", "evaluator", "master"};
  return names;
}

// Recognized keys:
//   orch.<group>.{instances,memory,vcores,gpus,tracked}
//       for <group> in known_group_names()
//   orch.application.{name,command,archive,max-attempts,heartbeat-ms,
//                     heartbeat-miss-limit}
//   orch.scheduler.<key>           (opaque passthrough)
// Overrides apply after file properties. The result always passes
// validate_job_spec or comes back as named errors.
inline Result<ValidatedJobSpec, std::vector<ConfigError>> parse_config(
    const std::string& xml_document, const std::vector<std::string>& overrides = {}) {
  using configdetail::parse_bool;
  using configdetail::parse_positive_int;

  std::vector<ConfigError> errors;

  auto properties = parse_xml_properties(xml_document);
  if (!properties) return std::vector<ConfigError>{{"", properties.error()}};

  std::vector<RawProperty> all = properties.value();
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      errors.push_back({o, "override must be name=value"});
      continue;
    }
    all.push_back({configdetail::trim(o.substr(0, eq)), configdetail::trim(o.substr(eq + 1))});
  }
  if (!errors.empty()) return errors;

  // Last-wins with a warning, preserving first-appearance order.
  std::vector<RawProperty> effective;
  for (const auto& p : all) {
    auto it = std::find_if(effective.begin(), effective.end(),
                           [&](const RawProperty& e) { return e.name == p.name; });
    if (it != effective.end()) {
      log_warn("config", "duplicate property " + p.name + ", last wins");
      it->value = p.value;
    } else {
      effective.push_back(p);
    }
  }

  JobSpec spec;
  spec.max_attempts = 3;
  spec.heartbeat_interval_ms = 1000;
  spec.heartbeat_miss_limit = 3;

  struct GroupDraft {
    TaskGroupSpec group;
    bool tracked_set = false;
  };
  std::vector<GroupDraft> drafts;
  auto draft_of = [&](const std::string& name) -> GroupDraft& {
    for (auto& d : drafts)
      if (d.group.name == name) return d;
    GroupDraft d;
    d.group.name = name;
    d.group.instances = 1;
    d.group.resources = {1024, 1, 0};
    d.group.tracked = name != "ps";  // worker-style groups count, ps does not
    drafts.push_back(std::move(d));
    return drafts.back();
  };

  for (const auto& p : effective) {
    if (p.name.rfind("orch.", 0) != 0) {
      log_warn("config", "ignoring non-orch property " + p.name);
      continue;
    }
    const std::string rest = p.name.substr(5);
    const auto dot = rest.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= rest.size()) {
      errors.push_back({p.name, "unknown key"});
      continue;
    }
    const std::string scope = rest.substr(0, dot);
    const std::string attr = rest.substr(dot + 1);

    if (scope == "scheduler") {
      spec.scheduler_config[attr] = p.value;
      continue;
    }
    if (scope == "application") {
      if (attr == "name") {
        spec.job_name = p.value;
      } else if (attr == "command") {
        std::istringstream in(p.value);
        std::string tok;
        spec.command.clear();
        while (in >> tok) spec.command.push_back(tok);
      } else if (attr == "archive") {
        spec.archive_path = p.value;
      } else if (attr == "max-attempts") {
        auto v = parse_positive_int(p.value, 1);
        if (!v) errors.push_back({p.name, v.error()});
        else spec.max_attempts = static_cast<int>(v.value());
      } else if (attr == "heartbeat-ms") {
        auto v = parse_positive_int(p.value, 1);
        if (!v) errors.push_back({p.name, v.error()});
        else spec.heartbeat_interval_ms = v.value();
      } else if (attr == "heartbeat-miss-limit") {
        auto v = parse_positive_int(p.value, 1);
        if (!v) errors.push_back({p.name, v.error()});
        else spec.heartbeat_miss_limit = static_cast<int>(v.value());
      } else {
        errors.push_back({p.name, "unknown key"});
      }
      continue;
    }

    // orch.<group>.<attr>
    const auto& known = known_group_names();
    if (std::find(known.begin(), known.end(), scope) == known.end()) {
      errors.push_back({p.name, "unknown key (no such task group: " + scope + ")"});
      continue;
    }
    if (attr == "instances") {
      auto v = parse_positive_int(p.value, 1);
      if (!v) errors.push_back({p.name, v.error()});
      else draft_of(scope).group.instances = static_cast<int>(v.value());
    } else if (attr == "memory") {
      auto v = parse_memory(p.value);
      if (!v) errors.push_back({p.name, v.error()});
      else draft_of(scope).group.resources.memory_mb = v.value();
    } else if (attr == "vcores") {
      auto v = parse_positive_int(p.value, 1);
      if (!v) errors.push_back({p.name, v.error()});
      else draft_of(scope).group.resources.vcores = static_cast<int>(v.value());
    } else if (attr == "gpus") {
      auto v = parse_positive_int(p.value, 0);
      if (!v) errors.push_back({p.name, v.error()});
      else draft_of(scope).group.resources.gpus = static_cast<int>(v.value());
    } else if (attr == "tracked") {
      auto v = parse_bool(p.value);
      if (!v) errors.push_back({p.name, v.error()});
      else {
        draft_of(scope).group.tracked = v.value();
        draft_of(scope).tracked_set = true;
      }
    } else {
      errors.push_back({p.name, "unknown key"});
    }
  }

  if (!errors.empty()) return errors;

  for (auto& d : drafts) spec.groups.push_back(std::move(d.group));

  auto validated = validate_job_spec(std::move(spec));
  if (!validated) {
    for (const auto& e : validated.error()) errors.push_back({e.field, e.message});
    return errors;
  }
  return std::move(validated.value());
}

}  // namespace client
}  // namespace orch

#endif  // ORCH_CLIENT_CONFIG_HPP_
