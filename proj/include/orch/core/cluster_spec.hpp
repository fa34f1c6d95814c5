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
#ifndef ORCH_CORE_CLUSTER_SPEC_HPP_
#define ORCH_CORE_CLUSTER_SPEC_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "orch/core/types.hpp"
#include "orch/util/result.hpp"

namespace orch {

struct Endpoint {
  std::string host;
  int port = 0;

  bool operator==(const Endpoint&) const = default;

  std::string str() const { return host + ":" + std::to_string(port); }

  // "host:port", port in [1, 65535]. Splits on the last colon.
  static std::optional<Endpoint> parse(const std::string& s) {
    auto colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= s.size()) return std::nullopt;
    Endpoint ep;
    ep.host = s.substr(0, colon);
    const std::string port = s.substr(colon + 1);
    if (port.size() > 5) return std::nullopt;
    for (char c : port)
      if (c < '0' || c > '9') return std::nullopt;
    ep.port = std::stoi(port);
    if (ep.port < 1 || ep.port > 65535) return std::nullopt;
    return ep;
  }
};

// The global rendezvous map: group name -> ordered endpoint list, position i
// holding the endpoint of task index i.
class ClusterSpec {
 public:
  ClusterSpec() = default;
  explicit ClusterSpec(std::map<std::string, std::vector<std::string>> endpoints)
      : endpoints_(std::move(endpoints)) {}

  bool operator==(const ClusterSpec&) const = default;

  const std::map<std::string, std::vector<std::string>>& endpoints() const { return endpoints_; }

  void set(const TaskId& task, const std::string& endpoint) {
    auto& list = endpoints_[task.group];
    if (static_cast<int>(list.size()) <= task.index) list.resize(task.index + 1);
    list[task.index] = endpoint;
  }

  std::optional<std::string> endpoint_of(const TaskId& task) const {
    auto it = endpoints_.find(task.group);
    if (it == endpoints_.end()) return std::nullopt;
    if (task.index < 0 || task.index >= static_cast<int>(it->second.size())) return std::nullopt;
    return it->second[task.index];
  }

  // Structural validity against a job: dense per-group lists of the right
  // length, every entry a parsable host:port.
  std::vector<std::string> violations_against(const JobSpec& job) const {
    std::vector<std::string> out;
    for (const auto& g : job.groups) {
      auto it = endpoints_.find(g.name);
      if (it == endpoints_.end()) {
        out.push_back("missing group: " + g.name);
        continue;
      }
      if (static_cast<int>(it->second.size()) != g.instances)
        out.push_back("group " + g.name + ": expected " + std::to_string(g.instances) +
                      " endpoints, got " + std::to_string(it->second.size()));
      for (const auto& ep : it->second)
        if (!Endpoint::parse(ep)) out.push_back("group " + g.name + ": bad endpoint " + ep);
    }
    for (const auto& [name, _] : endpoints_)
      if (!job.find_group(name)) out.push_back("unknown group: " + name);
    return out;
  }

 private:
  std::map<std::string, std::vector<std::string>> endpoints_;  // sorted keys
};

// Canonical textual form: keys sorted lexicographically, values in index
// order, no insignificant whitespace, UTF-8. Identical specs produce
// byte-identical output; this is the single serialized form everywhere
// (wire protocol, child environment, trace logs).
inline std::string canonical_spec_encoding(const ClusterSpec& spec) {
  nlohmann::json obj = nlohmann::json::object();
  for (const auto& [group, eps] : spec.endpoints()) obj[group] = eps;
  return obj.dump();
}

inline Result<ClusterSpec, std::string> parse_cluster_spec(const std::string& bytes) {
  nlohmann::json obj = nlohmann::json::parse(bytes, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) return std::string("cluster spec is not an object");
  std::map<std::string, std::vector<std::string>> endpoints;
  for (const auto& [group, eps] : obj.items()) {
    if (!eps.is_array()) return "group " + group + ": endpoint list is not an array";
    std::vector<std::string> list;
    for (const auto& ep : eps) {
      if (!ep.is_string()) return "group " + group + ": endpoint is not a string";
      list.push_back(ep.get<std::string>());
    }
    endpoints[group] = std::move(list);
  }
  return ClusterSpec(std::move(endpoints));
}

}  // namespace orch

#endif  // ORCH_CORE_CLUSTER_SPEC_HPP_
