#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "fixtures.hpp"
#include "json.hpp"
#include "wmlock/digest.hpp"
#include "wmlock/errors.hpp"
#include "wmlock/external_oracle.hpp"
#include "wmlock/png_io.hpp"

using namespace wmtest;
using nlohmann::json;

namespace {

const std::string kServer = WMLOCK_FAKE_SERVER;

std::vector<double> softmax(std::vector<double> z) {
  double hi = *std::max_element(z.begin(), z.end()), sum = 0;
  for (double& v : z) sum += (v = std::exp(v - hi));
  for (double& v : z) v /= sum;
  return z;
}

std::unique_ptr<ExternalOracle> spawn(const std::string& args,
                                      std::chrono::milliseconds timeout = std::chrono::seconds(10)) {
  return std::make_unique<ExternalOracle>(spawn_process_channel(kServer + " " + args),
                                          "proc:" + args, timeout);
}

std::vector<RgbaImage> gray_images(int n, int w = 8, int h = 8) {
  std::vector<RgbaImage> out;
  for (int i = 0; i < n; ++i) {
    RgbaImage img(w, h);
    const auto v = static_cast<std::uint8_t>(i * 7 % 256);
    img.fill(v, v, v, 255);
    out.push_back(img);
  }
  return out;
}

// Replays scripted oracle lines and records what the client writes.
class ScriptedChannel final : public LineChannel {
 public:
  explicit ScriptedChannel(std::deque<std::string> script) : script_(std::move(script)) {}
  void write_line(const std::string& line) override { written->push_back(line); }
  std::string read_line(std::chrono::milliseconds) override {
    if (script_.empty()) throw OracleIoError("end of script");
    std::string l = script_.front();
    script_.pop_front();
    return l;
  }
  std::shared_ptr<std::vector<std::string>> written = std::make_shared<std::vector<std::string>>();

 private:
  std::deque<std::string> script_;
};

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

TEST_CASE("process oracle handshake and scores") {
  auto o = spawn("--logits 1,2,0.5");
  CHECK(o->class_count() == 3);
  CHECK(o->normalized());
  REQUIRE(o->input_size());
  CHECK(o->input_size()->width == 8);
  const auto s = o->score(gray_images(1)[0]);
  const auto ref = softmax({1, 2, 0.5});
  for (int k = 0; k < 3; ++k) CHECK(std::abs(s.scores[k] - ref[k]) < 1e-9);
  CHECK(o->query_count() == 1);
}

TEST_CASE("identical requests give identical scores") {
  auto o = spawn("--brightness");
  const auto img = gray_images(4)[3];
  const auto first = o->score(img);
  for (int i = 0; i < 100; ++i) CHECK(o->score(img) == first);
}

TEST_CASE("images are resampled to the declared input size before sending") {
  auto o = spawn("--brightness --size 8 8");
  RgbaImage big(40, 24);
  big.fill(51, 51, 51, 255);
  const auto s = o->score(big);
  CHECK(std::abs(s.scores[1] - 0.2) < 1e-9);
}

TEST_CASE("pipelined requests answered out of order are matched by id") {
  auto o = spawn("--brightness --reverse 100");
  const auto imgs = gray_images(100);
  const auto s = o->score_batch(imgs);
  REQUIRE(s.size() == 100);
  for (int i = 0; i < 100; ++i) CHECK(std::abs(s[i].scores[1] - (i * 7 % 256) / 255.0) < 1e-9);
  CHECK(o->query_count() == 100);
}

TEST_CASE("an error response raises with the request id") {
  auto o = spawn("--brightness --error-id 3");
  const auto imgs = gray_images(5);
  try {
    o->score_batch(imgs);
    FAIL("expected an oracle error");
  } catch (const OracleIoError& e) {
    CHECK(e.request_id() == 3);
    CHECK(std::string(e.what()).find("injected failure") != std::string::npos);
  }
}

TEST_CASE("timeouts and dead servers raise oracle-io errors") {
  auto silent = spawn("--silent", std::chrono::milliseconds(300));
  try {
    silent->score(gray_images(1)[0]);
    FAIL("expected a timeout");
  } catch (const OracleIoError& e) {
    CHECK(e.request_id() == 1);
  }
  auto dying = spawn("--brightness --exit-after 1");
  CHECK_NOTHROW(dying->score(gray_images(1)[0]));
  CHECK_THROWS_AS(dying->score(gray_images(1)[0]), OracleIoError);
}

TEST_CASE("bad handshake is rejected") {
  CHECK_THROWS_AS(spawn("--bad-handshake"), OracleIoError);
  CHECK_THROWS_AS(ExternalOracle(spawn_process_channel("exit 0"), "proc:exit"), OracleIoError);
}

TEST_CASE("proc spec through the factory") {
  auto o = make_oracle("proc:" + kServer + " --brightness");
  CHECK(o->kind() == OracleKind::kExternal);
  RgbaImage img(8, 8);
  img.fill(255, 255, 255, 255);
  CHECK(o->score(img).scores[1] == 1.0);
}

TEST_CASE("golden transcript") {
  std::ifstream in(std::string(WMLOCK_TEST_DATA) + "/oracle_transcript.jsonl");
  REQUIRE(in);
  std::deque<std::string> oracle_lines;
  std::vector<std::string> client_lines;
  std::string line;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    (j["dir"] == "oracle" ? static_cast<void>(oracle_lines.push_back(j["line"]))
                          : client_lines.push_back(j["line"]));
  }
  REQUIRE(client_lines.size() == 3);
  auto channel = std::make_unique<ScriptedChannel>(oracle_lines);
  auto written = channel->written;
  ExternalOracle o(std::move(channel), "golden");
  std::vector<RgbaImage> imgs;
  for (const auto& c : client_lines)
    imgs.push_back(decode_png(base64_decode(json::parse(c)["png_b64"].get<std::string>())));
  const auto scores = o.score_batch(imgs);

  REQUIRE(written->size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto got = json::parse((*written)[i]);
    const auto want = json::parse(client_lines[i]);
    CHECK(got.size() == 2);
    CHECK(got["id"] == want["id"]);
    CHECK(decode_png(base64_decode(got["png_b64"].get<std::string>())) == imgs[i]);
    const auto resp = json::parse(oracle_lines[i + 1]);
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(fmt9(scores[i].scores[k]) == fmt9(resp["scores"][k].get<double>()));
  }
}

TEST_CASE("tcp oracle") {
  const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(srv >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  socklen_t len = sizeof addr;
  ::getsockname(srv, reinterpret_cast<sockaddr*>(&addr), &len);
  REQUIRE(::listen(srv, 1) == 0);
  const int port = ntohs(addr.sin_port);

  std::jthread server([srv] {
    const int fd = ::accept(srv, nullptr, nullptr);
    if (fd < 0) return;
    const auto send_line = [fd](const std::string& s) {
      const std::string l = s + "\n";
      (void)!::write(fd, l.data(), l.size());
    };
    send_line(R"({"hello":{"classes":2,"input_w":4,"input_h":4,"normalized":true}})");
    std::string buf;
    char chunk[4096];
    for (;;) {
      const auto n = ::read(fd, chunk, sizeof chunk);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = buf.find('\n')) != std::string::npos) {
        const auto req = json::parse(buf.substr(0, nl));
        buf.erase(0, nl + 1);
        send_line(json{{"id", req["id"]}, {"scores", {0.25, 0.75}}}.dump());
      }
    }
    ::close(fd);
  });

  {
    auto o = make_oracle("tcp:127.0.0.1:" + std::to_string(port));
    CHECK(o->class_count() == 2);
    const auto s = o->score_batch(gray_images(10));
    REQUIRE(s.size() == 10);
    CHECK(s[9].scores == std::vector<double>{0.25, 0.75});
  }
  ::close(srv);
}

TEST_CASE("tcp connection failure") {
  CHECK_THROWS_AS(make_oracle("tcp:127.0.0.1:1"), OracleIoError);
}
