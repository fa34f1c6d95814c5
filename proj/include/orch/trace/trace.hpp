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
#ifndef ORCH_TRACE_TRACE_HPP_
#define ORCH_TRACE_TRACE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace orch {

// One structured record per state transition and per message sent/received.
// Records are totally ordered by (time, sequence of emission); traces are
// replay-stable for a fixed (scenario, seed).
struct TraceRecord {
  std::int64_t t = 0;  // virtual or monotonic wall ms
  int attempt = 1;
  std::string subject;  // "group/index", "job", or "cluster"
  std::string event;
  nlohmann::json detail = nlohmann::json::object();
};

using Trace = std::vector<TraceRecord>;

// Serialized with the wire protocol's canonical object encoding so traces
// stay greppable and diffable.
inline std::string trace_record_to_line(const TraceRecord& r) {
  nlohmann::json obj = nlohmann::json::object();
  obj["t"] = r.t;
  obj["attempt"] = r.attempt;
  obj["subject"] = r.subject;
  obj["event"] = r.event;
  obj["detail"] = r.detail;
  return obj.dump() + "\n";
}

inline std::string trace_to_ndjson(const Trace& trace) {
  std::string out;
  for (const auto& r : trace) out += trace_record_to_line(r);
  return out;
}

class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void append(const TraceRecord& record) = 0;
};

class TraceCollector : public TraceSink {
 public:
  void append(const TraceRecord& record) override { trace_.push_back(record); }
  const Trace& trace() const { return trace_; }
  Trace take() { return std::move(trace_); }

 private:
  Trace trace_;
};

// Fans one record stream out to several consumers (collector + live printer).
class TeeSink : public TraceSink {
 public:
  void add(TraceSink* sink) { sinks_.push_back(sink); }
  void append(const TraceRecord& record) override {
    for (auto* s : sinks_) s->append(record);
  }

 private:
  std::vector<TraceSink*> sinks_;
};

}  // namespace orch

#endif  // ORCH_TRACE_TRACE_HPP_
