#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guidance.hpp"
#include "transport.hpp"

namespace pxd::wire {

// Guidance wire protocol, version 1. A message is a 4-byte little-endian
// header length, the UTF-8 JSON header, then raw little-endian f32 payload
// whose size follows from the header (request) or the pending request
// (response).
inline constexpr int kVersion = 1;
inline constexpr std::uint32_t kMaxHeaderBytes = 1u << 24;
inline constexpr int kDefaultTimeoutMs = 120'000;

void write_message(Transport& t, const nlohmann::json& header, std::span<const float> payload = {});
// nullopt on clean EOF at a message boundary.
std::optional<nlohmann::json> read_header(Transport& t);
std::vector<float> read_floats(Transport& t, std::size_t count);

std::vector<float> to_f32(const Image& img);
Image from_f32(std::span<const float> data, int height, int width, int channels);

// Client side of the protocol. Performs the hello handshake on construction.
class RemoteBackend : public GuidanceBackend {
 public:
  RemoteBackend(std::unique_ptr<Transport> transport, std::string endpoint);
  GuidanceGrad evaluate(const GuidanceRequest& request) override;
  std::string name() const override { return "remote(" + endpoint_ + ")"; }
  const std::string& server_name() const noexcept { return server_name_; }

 private:
  std::unique_ptr<Transport> transport_;
  std::string endpoint_;
  std::string server_name_;
};

// "host:port"
std::unique_ptr<RemoteBackend> connect_remote(const std::string& endpoint, int timeout_ms = kDefaultTimeoutMs);
std::unique_ptr<RemoteBackend> spawn_remote(const std::string& command, int timeout_ms = kDefaultTimeoutMs);

// Reference server answering grad requests with the delta-oracle residuals
// computed in f32. Targets must match the request size.
class EchoDeltaServer {
 public:
  EchoDeltaServer(NoiseSchedule schedule, Image target_cond, Image target_uncond);
  // Serves one connection until the peer closes it.
  void serve(Transport& t) const;

 private:
  NoiseSchedule schedule_;
  Image cond_, uncond_;
  std::vector<float> cond_f32_, uncond_f32_;
};

}  // namespace pxd::wire
