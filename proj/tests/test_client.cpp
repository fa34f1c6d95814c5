#include <filesystem>
#include <fstream>

#include <catch2/catch_amalgamated.hpp>

#include "orch/client/config.hpp"
#include "orch/client/client.hpp"
#include "orch/client/package.hpp"

using namespace orch;
using namespace orch::client;

namespace {

std::string wrap(const std::vector<std::pair<std::string, std::string>>& props) {
  std::string doc = "<configuration>\n";
  for (const auto& [name, value] : props)
    doc += "  <property><name>" + name + "</name><value>" + value + "</value></property>\n";
  doc += "</configuration>\n";
  return doc;
}

bool has_error(const std::vector<ConfigError>& errors, const std::string& key_needle) {
  for (const auto& e : errors)
    if (e.key.find(key_needle) != std::string::npos ||
        e.message.find(key_needle) != std::string::npos)
      return true;
  return false;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("orch-test-" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  void write(const std::string& rel, const std::string& content, bool executable = false) {
    const auto target = path / rel;
    std::filesystem::create_directories(target.parent_path());
    std::ofstream out(target, std::ios::binary);
    out << content;
    out.close();
    if (executable)
      std::filesystem::permissions(target, std::filesystem::perms::owner_all);
  }
};

}  // namespace

TEST_CASE("parse_memory grammar") {
  CHECK(parse_memory("4g").value() == 4096);
  CHECK(parse_memory("4G").value() == 4096);
  CHECK(parse_memory("512").value() == 512);
  CHECK(parse_memory("512m").value() == 512);
  CHECK(parse_memory("2048M").value() == 2048);
  CHECK_FALSE(parse_memory("1.5g").ok());
  CHECK_FALSE(parse_memory("").ok());
  CHECK_FALSE(parse_memory("g").ok());
  CHECK_FALSE(parse_memory("4gb").ok());
  CHECK_FALSE(parse_memory("-4g").ok());
  CHECK_FALSE(parse_memory("four").ok());
}

TEST_CASE("parse_config applies the key grammar and defaults") {
  // Independent oracle: the grammar and default table applied by hand.
  //   worker: instances=2, memory=4g -> 4096 MiB, vcores default 1,
  //           gpus default 0, tracked default true
  //   ps:     instances=1, memory=2g -> 2048 MiB, tracked default false
  //   application: command "run.sh", heartbeat 1000, miss 3, attempts 3
  const std::string doc = wrap({
      {"orch.worker.instances", "2"},
      {"orch.worker.memory", "4g"},
      {"orch.ps.instances", "1"},
      {"orch.ps.memory", "2g"},
      {"orch.application.command", "run.sh"},
  });
  auto result = parse_config(doc);
  REQUIRE(result.ok());
  const JobSpec& spec = result.value().get();
  REQUIRE(spec.groups.size() == 2);
  CHECK(spec.groups[0].name == "worker");
  CHECK(spec.groups[0].instances == 2);
  CHECK(spec.groups[0].resources.memory_mb == 4096);
  CHECK(spec.groups[0].resources.vcores == 1);
  CHECK(spec.groups[0].resources.gpus == 0);
  CHECK(spec.groups[0].tracked);
  CHECK(spec.groups[1].name == "ps");
  CHECK(spec.groups[1].instances == 1);
  CHECK(spec.groups[1].resources.memory_mb == 2048);
  CHECK_FALSE(spec.groups[1].tracked);
  CHECK(spec.command == std::vector<std::string>{"run.sh"});
  CHECK(spec.max_attempts == 3);
  CHECK(spec.heartbeat_interval_ms == 1000);
  CHECK(spec.heartbeat_miss_limit == 3);
}

TEST_CASE("typo'd keys are hard errors, not warnings") {
  auto result = parse_config(wrap({
      {"orch.wroker.instances", "2"},
      {"orch.worker.instances", "2"},
      {"orch.worker.memory", "4g"},
      {"orch.application.command", "run.sh"},
  }));
  REQUIRE_FALSE(result.ok());
  CHECK(has_error(result.error(), "orch.wroker.instances"));

  auto attr_typo = parse_config(wrap({
      {"orch.worker.instnaces", "2"},
  }));
  REQUIRE_FALSE(attr_typo.ok());
  CHECK(has_error(attr_typo.error(), "orch.worker.instnaces"));

  auto app_typo = parse_config(wrap({
      {"orch.application.max-attempt", "2"},
  }));
  REQUIRE_FALSE(app_typo.ok());
  CHECK(has_error(app_typo.error(), "orch.application.max-attempt"));
}

TEST_CASE("overrides apply after file properties") {
  const std::string doc = wrap({
      {"orch.worker.instances", "2"},
      {"orch.worker.memory", "4g"},
      {"orch.application.command", "run.sh"},
  });
  auto result = parse_config(doc, {"orch.worker.instances=3"});
  REQUIRE(result.ok());
  CHECK(result.value()->groups[0].instances == 3);

  CHECK_FALSE(parse_config(doc, {"not-an-override"}).ok());
}

TEST_CASE("duplicate properties resolve last-wins") {
  const std::string doc = wrap({
      {"orch.worker.instances", "2"},
      {"orch.worker.instances", "5"},
      {"orch.application.command", "run.sh"},
  });
  auto result = parse_config(doc);
  REQUIRE(result.ok());
  CHECK(result.value()->groups[0].instances == 5);
}

TEST_CASE("scheduler keys pass through opaquely") {
  auto result = parse_config(wrap({
      {"orch.worker.instances", "1"},
      {"orch.scheduler.queue", "ml-prod"},
      {"orch.scheduler.node-label", "high-memory"},
      {"orch.application.command", "run.sh"},
  }));
  REQUIRE(result.ok());
  const auto& sched = result.value()->scheduler_config;
  CHECK(sched.at("queue") == "ml-prod");
  CHECK(sched.at("node-label") == "high-memory");
}

TEST_CASE("application settings and tracked flags parse") {
  auto result = parse_config(wrap({
      {"orch.application.name", "mnist"},
      {"orch.chief.instances", "1"},
      {"orch.chief.tracked", "true"},
      {"orch.ps.instances", "2"},
      {"orch.ps.tracked", "true"},  // override of the ps default
      {"orch.application.max-attempts", "5"},
      {"orch.application.heartbeat-ms", "500"},
      {"orch.application.heartbeat-miss-limit", "4"},
      {"orch.application.command", "python train.py --epochs 3"},
  }));
  REQUIRE(result.ok());
  const JobSpec& spec = result.value().get();
  CHECK(spec.job_name == "mnist");
  CHECK(spec.max_attempts == 5);
  CHECK(spec.heartbeat_interval_ms == 500);
  CHECK(spec.heartbeat_miss_limit == 4);
  CHECK(spec.groups[1].tracked);
  CHECK(spec.command ==
        std::vector<std::string>{"python", "train.py", "--epochs", "3"});
}

TEST_CASE("config errors are specific and never silently defaulted") {
  CHECK(has_error(parse_config(wrap({{"orch.worker.memory", "1.5g"}})).error(),
                  "malformed-memory-string"));
  CHECK(has_error(parse_config(wrap({{"orch.worker.instances", "zero"}})).error(),
                  "orch.worker.instances"));
  CHECK(has_error(parse_config(wrap({{"orch.worker.instances", "0"}})).error(),
                  "orch.worker.instances"));
  CHECK(has_error(parse_config(wrap({{"orch.worker.tracked", "yes"}})).error(),
                  "orch.worker.tracked"));
  CHECK(has_error(parse_config(wrap({{"orch.worker.gpus", "-1"}})).error(), "orch.worker.gpus"));
  // Empty document: no groups at all.
  CHECK_FALSE(parse_config("<configuration></configuration>").ok());
  // Malformed XML.
  CHECK_FALSE(parse_config("<configuration><property>").ok());
  // All groups untracked.
  CHECK(has_error(parse_config(wrap({
                                   {"orch.ps.instances", "1"},
                               }))
                      .error(),
                  "no tracked group"));
}

TEST_CASE("packaging is deterministic and sorted") {
  TempDir dir("pkg");
  dir.write("run.sh", "#!/bin/sh\nexit 0\n", /*executable=*/true);
  dir.write("model/train.py", "print('hi')\n");

  auto a = package(dir.path.string());
  REQUIRE(a.ok());
  auto b = package(dir.path.string());
  REQUIRE(b.ok());
  CHECK(a.value().archive == b.value().archive);

  REQUIRE(a.value().manifest.size() == 2);
  CHECK(a.value().manifest[0].path == "model/train.py");
  CHECK(a.value().manifest[1].path == "run.sh");
  CHECK(a.value().manifest[1].executable);

  // Repackaging after an unrelated touch (same content) stays identical.
  dir.write("model/train.py", "print('hi')\n");
  auto c = package(dir.path.string());
  REQUIRE(c.ok());
  CHECK(c.value().archive == a.value().archive);

  // Content changes change the digest.
  dir.write("model/train.py", "print('bye')\n");
  auto d = package(dir.path.string());
  REQUIRE(d.ok());
  CHECK(d.value().archive != a.value().archive);
  CHECK(d.value().manifest[0].digest != a.value().manifest[0].digest);
}

TEST_CASE("packaging errors") {
  TempDir dir("pkg-empty");
  auto empty = package(dir.path.string());
  REQUIRE_FALSE(empty.ok());
  CHECK(empty.error().find("empty-directory") == 0);

  auto missing = package((dir.path / "nope").string());
  REQUIRE_FALSE(missing.ok());
  CHECK(missing.error().find("unreadable-path") == 0);
}

TEST_CASE("archives extract back to the packaged tree") {
  TempDir dir("pkg-rt");
  dir.write("a.txt", "alpha");
  dir.write("sub/dir/b.bin", std::string("\x00\x01\x02\xff", 4));
  dir.write("run.sh", "#!/bin/sh\n", true);

  auto pkg = package(dir.path.string());
  REQUIRE(pkg.ok());

  TempDir out("pkg-out");
  auto extracted = extract_archive(pkg.value().archive, out.path.string());
  REQUIRE(extracted.ok());

  auto read = [&](const std::string& rel) {
    std::ifstream in(out.path / rel, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  CHECK(read("a.txt") == "alpha");
  CHECK(read("sub/dir/b.bin") == std::string("\x00\x01\x02\xff", 4));
  auto perms = std::filesystem::status(out.path / "run.sh").permissions();
  CHECK((perms & std::filesystem::perms::owner_exec) != std::filesystem::perms::none);

  // Re-packaging the extraction reproduces the archive byte for byte.
  auto again = package(out.path.string());
  REQUIRE(again.ok());
  CHECK(again.value().archive == pkg.value().archive);
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
  // Exercise the two-block padding boundary.
  CHECK(sha256_hex(std::string(56, 'a')).size() == 64);
  CHECK(sha256_hex(std::string(64, 'a')) != sha256_hex(std::string(63, 'a')));
}

TEST_CASE("the sim status stream format is golden") {
  const std::string doc = wrap({
      {"orch.application.name", "golden"},
      {"orch.worker.instances", "2"},
      {"orch.worker.memory", "1g"},
      {"orch.ps.instances", "1"},
      {"orch.ps.memory", "512m"},
      {"orch.application.command", "/bin/true"},
  });
  auto spec = parse_config(doc);
  REQUIRE(spec.ok());

  std::ostringstream out;
  const int code = submit_sim(spec.value(), out);
  CHECK(code == 0);
  CHECK(out.str() ==
        "t=0 job=SUBMITTED attempt=1\n"
        "t=0 job=ALLOCATING attempt=1\n"
        "t=1000 task=worker/0 REQUESTED->ALLOCATED\n"
        "LOG: worker/0 sim://logs/1/worker-0\n"
        "t=1000 task=worker/1 REQUESTED->ALLOCATED\n"
        "LOG: worker/1 sim://logs/1/worker-1\n"
        "t=1000 task=ps/0 REQUESTED->ALLOCATED\n"
        "LOG: ps/0 sim://logs/1/ps-0\n"
        "t=1000 job=AWAITING_REGISTRATION attempt=1\n"
        "t=1000 task=worker/0 ALLOCATED->REGISTERED\n"
        "UI: http://h0:4001\n"
        "t=1000 task=worker/1 ALLOCATED->REGISTERED\n"
        "t=1000 task=ps/0 ALLOCATED->REGISTERED\n"
        "t=1000 job=RUNNING attempt=1\n"
        "t=1500 task=worker/0 REGISTERED->RUNNING\n"
        "t=1500 task=worker/0 RUNNING->SUCCEEDED\n"
        "t=1500 task=worker/1 REGISTERED->RUNNING\n"
        "t=1500 task=worker/1 RUNNING->SUCCEEDED\n"
        "t=1500 job=SUCCEEDED attempt=1\n");
}

TEST_CASE("simulate runs a scenario file and reports through exit codes") {
  const auto dir = std::filesystem::temp_directory_path() / "orch-simulate-test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "scenario.json").string();
  std::ofstream file(path);
  file << R"({
    "cluster": {"hosts": [{"name": "h0", "memory_mb": 16384, "vcores": 16, "gpus": 0}]},
    "job": {"name": "simtest",
            "groups": [{"name": "worker", "instances": 2, "memory_mb": 1024}],
            "max_attempts": 2},
    "actions": [
      {"at": 0, "kind": "child_exit", "task": "worker/0", "code": 0, "after_ms": 400},
      {"at": 0, "kind": "child_exit", "task": "worker/1", "code": 0, "after_ms": 400}
    ]
  })";
  file.close();

  std::ostringstream out;
  CHECK(run_simulate(path, 7, out) == 0);
  // stdout is the NDJSON trace; every line parses and key order is canonical.
  std::istringstream lines(out.str());
  std::string line;
  int records = 0;
  bool succeeded = false;
  while (std::getline(lines, line)) {
    ++records;
    auto obj = nlohmann::json::parse(line, nullptr, false);
    REQUIRE_FALSE(obj.is_discarded());
    REQUIRE(obj.contains("t"));
    REQUIRE(obj.contains("event"));
    if (obj["event"] == "job_state" && obj["detail"]["state"] == "SUCCEEDED") succeeded = true;
  }
  CHECK(records > 10);
  CHECK(succeeded);

  CHECK(run_simulate((dir / "missing.json").string(), 7, out) == kExitClientError);
  std::filesystem::remove_all(dir);
}
