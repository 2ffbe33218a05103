// Stand-in for the model adapter's serve loop. Answers each request with the
// first candidate's pose. `--exit-after N` quits after N responses,
// `--garble` answers with a line that is not JSON.

#include <cstdlib>
#include <iostream>
#include <string>

#include "xloc/adapter.hpp"
#include "xloc/errors.hpp"

int main(int argc, char** argv) {
  long exit_after = -1;
  bool garble = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--exit-after" && i + 1 < argc) exit_after = std::atol(argv[++i]);
    if (a == "--garble") garble = true;
  }
  long served = 0;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (exit_after >= 0 && served >= exit_after) return 0;
    if (garble) {
      std::cout << "not json" << std::endl;
      ++served;
      continue;
    }
    try {
      const xloc::RpcRequest req = xloc::decode_request(line);
      xloc::RpcResponse resp;
      resp.id = req.id;
      if (req.ctx.candidates.empty()) {
        std::cout << xloc::encode_error_response(req.id, "no candidates") << std::endl;
      } else {
        resp.estimate.pose = req.ctx.candidates.front().pose;
        resp.estimate.confidence = 0.5;
        resp.estimate.valid = true;
        std::cout << xloc::encode_response(resp) << std::endl;
      }
    } catch (const xloc::Error& e) {
      std::cout << xloc::encode_error_response(std::nullopt, e.what()) << std::endl;
    }
    ++served;
  }
  return 0;
}
