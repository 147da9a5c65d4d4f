#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "wmlock/oracle.hpp"

namespace wmlock {

// Bidirectional newline-delimited byte stream.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void write_line(const std::string& line) = 0;
  // Throws OracleIoError on EOF or when no full line arrives in `timeout`.
  virtual std::string read_line(std::chrono::milliseconds timeout) = 0;
};

// Spawns `/bin/sh -c command` with its stdin/stdout connected to the channel.
std::unique_ptr<LineChannel> spawn_process_channel(const std::string& command);
std::unique_ptr<LineChannel> connect_tcp_channel(const std::string& host, int port);

// Client for the newline-delimited JSON oracle protocol:
//   oracle -> client (first line): {"hello":{"classes":K,"input_w":W,"input_h":H,"normalized":b}}
//   request:  {"id":<u64>,"png_b64":"..."}
//   response: {"id":<u64>,"scores":[...]}  or  {"id":<u64>,"error":"..."}
// Batches are pipelined and responses matched by id. Calls on one client are
// serialized.
class ExternalOracle final : public ScoreOracle {
 public:
  ExternalOracle(std::unique_ptr<LineChannel> channel, std::string spec,
                 std::chrono::milliseconds timeout = std::chrono::seconds(60));

  OracleKind kind() const noexcept override { return OracleKind::kExternal; }
  int class_count() const noexcept override { return classes_; }
  std::optional<InputSize> input_size() const noexcept override { return input_; }
  bool normalized() const noexcept override { return normalized_; }

 protected:
  ScoreVector score_one(const RgbaImage& image) override;
  std::vector<ScoreVector> score_many(std::span<const RgbaImage> images) override;

 private:
  std::unique_ptr<LineChannel> channel_;
  std::chrono::milliseconds timeout_;
  std::mutex mu_;
  std::uint64_t next_id_ = 1;
  int classes_ = 0;
  std::optional<InputSize> input_;
  bool normalized_ = false;
};

}  // namespace wmlock
