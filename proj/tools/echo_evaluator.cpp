// Reference child for the exec evaluator: reads the request file, echoes the
// design back and scores it by a hash of its canonical JSON.
#include <fstream>
#include <functional>
#include <iostream>

#include "json.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: falcon_echo_evaluator <request.json>\n";
    return 2;
  }
  std::ifstream in(argv[1]);
  if (!in) {
    std::cerr << "cannot open " << argv[1] << '\n';
    return 2;
  }
  const auto request = nlohmann::json::parse(in, nullptr, false);
  if (request.is_discarded() || !request.contains("design")) {
    std::cerr << "malformed request\n";
    return 2;
  }
  const auto h = std::hash<std::string>{}(request["design"].dump());
  nlohmann::json bits = nlohmann::json::array();
  for (int i = 0; i < 8; ++i) bits.push_back((h >> i) & 1U);
  const nlohmann::json response{{"score", static_cast<double>(h % 1000) / 1000.0},
                                {"instance_correct", bits},
                                {"design", request["design"]},
                                {"budget", request["budget"]}};
  std::cout << response.dump() << '\n';
  return 0;
}
