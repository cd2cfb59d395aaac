// Protocol peer with scripted misbehaviour, driven by argv[1]:
//   mock <world.json>     zero-noise simulator backend
//   crash-after <n>       answers n requests, then exits with status 1
//   hang                  handshakes, then never answers
//   garbage               handshakes, then answers with non-JSON
//   exit-immediately      exits before reading anything
//   bad-version           handshakes with protocol version 2

#include <chrono>
#include <iostream>
#include <memory>
#include <string>
#include <thread>

#include "palmscan/gateway.hpp"
#include "palmscan/simulator.hpp"

using namespace palmscan;

namespace {

std::shared_ptr<const sim::SyntheticWorld> load_world(const char* path) {
  return std::make_shared<const sim::SyntheticWorld>(sim::world_from_json(Json::parse(io::read_file(path))));
}

}  // namespace

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  const std::string mode = argc > 1 ? argv[1] : "";
  if (mode == "exit-immediately") return 0;
  if (mode == "mock") {
    if (argc < 3) return 2;
    const sim::MockBackend backend(load_world(argv[2]), sim::NoiseModel::zero());
    sim::serve(backend, std::cin, std::cout);
    return 0;
  }

  long remaining = mode == "crash-after" && argc > 2 ? std::stol(argv[2]) : -1;
  std::string line;
  while (std::getline(std::cin, line)) {
    const Json req = Json::parse(line, nullptr, false);
    const std::string op = req.is_object() ? req.value("op", std::string()) : std::string();
    if (op == "hello") {
      if (mode == "bad-version") {
        std::cout << R"({"op":"hello","version":2,"labels":["palm"]})" << '\n' << std::flush;
      } else {
        std::cout << gateway::hello_reply({"palm"}) << '\n' << std::flush;
      }
      continue;
    }
    const auto id = req.is_object() ? req.value("id", std::size_t{0}) : std::size_t{0};
    if (mode == "hang") {
      std::this_thread::sleep_for(std::chrono::hours(1));
    } else if (mode == "garbage") {
      std::cout << "this is not json" << '\n' << std::flush;
    } else if (mode == "crash-after") {
      if (remaining-- <= 0) return 1;
      std::cout << gateway::detections_reply(id, {}) << '\n' << std::flush;
    } else {
      std::cout << gateway::error_reply(id, "unknown mode " + mode) << '\n' << std::flush;
    }
  }
  return 0;
}
