// Line-protocol oracle used by the external-oracle tests.
//
//   fake_oracle_server [--logits a,b,c] [--brightness] [--size W H]
//                      [--reverse N] [--error-id ID] [--exit-after N]
//                      [--silent] [--bad-handshake] [--no-newline-handshake]
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wmlock/digest.hpp"
#include "wmlock/png_io.hpp"

using nlohmann::json;

namespace {

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::vector<double> softmax(const std::vector<double>& z) {
  double hi = z[0];
  for (double v : z) hi = std::max(hi, v);
  std::vector<double> e;
  double sum = 0;
  for (double v : z) {
    e.push_back(std::exp(v - hi));
    sum += e.back();
  }
  for (double& v : e) v /= sum;
  return e;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<double> logits{1.0, 2.0, 0.5};
  bool brightness = false;
  int width = 8, height = 8;
  std::size_t reverse = 1;
  long long error_id = -1;
  long long exit_after = -1;
  bool silent = false;
  bool bad_handshake = false;

  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--logits") logits = parse_list(argv[++i]);
    else if (a == "--brightness") brightness = true;
    else if (a == "--size") {
      width = std::atoi(argv[++i]);
      height = std::atoi(argv[++i]);
    } else if (a == "--reverse") reverse = std::strtoull(argv[++i], nullptr, 10);
    else if (a == "--error-id") error_id = std::atoll(argv[++i]);
    else if (a == "--exit-after") exit_after = std::atoll(argv[++i]);
    else if (a == "--silent") silent = true;
    else if (a == "--bad-handshake") bad_handshake = true;
  }
  const int classes = brightness ? 2 : static_cast<int>(logits.size());

  if (bad_handshake) {
    std::cout << "{\"greeting\":1}" << std::endl;
  } else {
    std::cout << json{{"hello",
                       {{"classes", classes},
                        {"input_w", width},
                        {"input_h", height},
                        {"normalized", true}}}}
                     .dump()
              << std::endl;
  }

  std::vector<json> pending;
  long long answered = 0;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (silent) continue;
    json req = json::parse(line);
    json resp{{"id", req.at("id")}};
    try {
      const auto png = wmlock::base64_decode(req.at("png_b64").get<std::string>());
      const wmlock::RgbaImage img = wmlock::decode_png(png);
      if (img.width() != width || img.height() != height) throw std::runtime_error("wrong size");
      if (req.at("id").get<long long>() == error_id) throw std::runtime_error("injected failure");
      if (brightness) {
        double sum = 0;
        for (int y = 0; y < img.height(); ++y)
          for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c) sum += img.at(x, y, c);
        const double m = sum / (255.0 * 3 * img.width() * img.height());
        resp["scores"] = {1.0 - m, m};
      } else {
        resp["scores"] = softmax(logits);
      }
    } catch (const std::exception& e) {
      resp.erase("scores");
      resp["error"] = e.what();
    }
    pending.push_back(resp);
    if (pending.size() >= reverse) {
      for (auto it = pending.rbegin(); it != pending.rend(); ++it) {
        std::cout << it->dump() << "\n";
        ++answered;
        if (exit_after >= 0 && answered >= exit_after) {
          std::cout.flush();
          return 0;
        }
      }
      std::cout.flush();
      pending.clear();
    }
  }
  return 0;
}
