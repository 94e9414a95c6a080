#include "protocol.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "error.hpp"
#include "log.hpp"

namespace pxd::wire {

using nlohmann::json;

namespace {

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return __builtin_bswap32(v);
}

std::vector<std::byte> float_bytes(std::span<const float> values) {
  std::vector<std::byte> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(values[i]));
    std::memcpy(out.data() + 4 * i, &bits, 4);
  }
  return out;
}

std::size_t slot_channels(const std::string& slot) {
  if (slot == "x" || slot == "eps" || slot == "canny") return 3;
  if (slot == "depth") return 1;
  return 0;
}

void send_error(Transport& t, const std::string& detail) {
  write_message(t, json{{"msg", "error"}, {"detail", detail}});
}

}  // namespace

void write_message(Transport& t, const json& header, std::span<const float> payload) {
  const std::string text = header.dump();
  std::uint32_t len = to_le(static_cast<std::uint32_t>(text.size()));
  std::vector<std::byte> buf(4 + text.size());
  std::memcpy(buf.data(), &len, 4);
  std::memcpy(buf.data() + 4, text.data(), text.size());
  t.write_all(buf);
  if (!payload.empty()) t.write_all(float_bytes(payload));
}

std::optional<json> read_header(Transport& t) {
  std::uint32_t len = 0;
  if (!t.read_exact_or_eof(std::as_writable_bytes(std::span(&len, 1)))) return std::nullopt;
  len = to_le(len);
  if (len == 0 || len > kMaxHeaderBytes)
    fail(Errc::protocol, "malformed frame: header length " + std::to_string(len));
  std::string text(len, '\0');
  t.read_exact(std::as_writable_bytes(std::span(text.data(), text.size())));
  json header = json::parse(text, nullptr, false);
  if (header.is_discarded() || !header.is_object() || !header.contains("msg") || !header["msg"].is_string())
    fail(Errc::protocol, "malformed frame: header is not a JSON object with a \"msg\" string");
  return header;
}

std::vector<float> read_floats(Transport& t, std::size_t count) {
  std::vector<std::byte> raw(count * 4);
  t.read_exact(raw);
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, raw.data() + 4 * i, 4);
    out[i] = std::bit_cast<float>(to_le(bits));
  }
  return out;
}

std::vector<float> to_f32(const Image& img) {
  std::vector<float> out(img.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(img.data[i]);
  return out;
}

Image from_f32(std::span<const float> data, int height, int width, int channels) {
  Image img(height, width, channels);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = data[i];
  return img;
}

RemoteBackend::RemoteBackend(std::unique_ptr<Transport> transport, std::string endpoint)
    : transport_(std::move(transport)), endpoint_(std::move(endpoint)) {
  write_message(*transport_, json{{"msg", "hello"}, {"version", kVersion}});
  auto reply = read_header(*transport_);
  if (!reply) fail(Errc::protocol, "remote closed the connection during handshake");
  const std::string msg = (*reply)["msg"];
  if (msg == "error")
    fail(Errc::protocol, "handshake rejected: " + reply->value("detail", std::string("(no detail)")));
  if (msg != "hello") fail(Errc::protocol, "handshake: expected hello, got '" + msg + "'");
  const int version = reply->value("version", -1);
  if (version != kVersion)
    fail(Errc::protocol, "protocol version mismatch: server speaks " + std::to_string(version) + ", client speaks " +
                             std::to_string(kVersion));
  server_name_ = reply->value("name", std::string("unnamed"));
  log::info("connected to guidance server '" + server_name_ + "' at " + endpoint_);
}

GuidanceGrad RemoteBackend::evaluate(const GuidanceRequest& req) {
  const Image& x = req.x;
  if (x.channels != 3 || !x.same_shape(req.eps)) fail(Errc::backend, "remote request needs matching RGB x and eps");
  const Condition& cond = req.condition;
  json slots = json::array({"x", "eps"});
  std::vector<float> payload = to_f32(x);
  auto append = [&](const Image& img) {
    auto f = to_f32(img);
    payload.insert(payload.end(), f.begin(), f.end());
  };
  append(req.eps);
  if (cond.canny) {
    if (cond.canny->height != x.height || cond.canny->width != x.width)
      fail(Errc::backend, "canny conditioning does not match the request size");
    slots.push_back("canny");
    append(cond.canny->channels == 3 ? *cond.canny : [&] {
      Image c3(x.height, x.width, 3);
      for (int y = 0; y < x.height; ++y)
        for (int xx = 0; xx < x.width; ++xx)
          for (int c = 0; c < 3; ++c) c3.at(y, xx, c) = cond.canny->at(y, xx, 0);
      return c3;
    }());
  }
  if (cond.depth) {
    if (cond.depth->height != x.height || cond.depth->width != x.width || cond.depth->channels != 1)
      fail(Errc::backend, "depth conditioning must be single-channel at the request size");
    slots.push_back("depth");
    append(*cond.depth);
  }
  json header{{"msg", "grad"},
              {"t", req.t},
              {"h", x.height},
              {"w", x.width},
              {"c", 3},
              {"prompt", cond.prompt},
              {"uncond_prompt", cond.uncond_prompt},
              {"canny_scale", cond.canny_scale},
              {"depth_scale", cond.depth_scale},
              {"slots", slots}};
  write_message(*transport_, header, payload);

  auto reply = read_header(*transport_);
  if (!reply) fail(Errc::protocol, "remote closed the connection before answering");
  const std::string msg = (*reply)["msg"];
  if (msg == "error") fail(Errc::backend, "remote error: " + reply->value("detail", std::string("(no detail)")));
  if (msg != "grad") fail(Errc::protocol, "expected a grad response, got '" + msg + "'");
  if (!reply->contains("slots") || (*reply)["slots"] != json::array({"grad_noise", "grad_sem"}))
    fail(Errc::protocol, "grad response must carry slots [\"grad_noise\",\"grad_sem\"]");
  const std::size_t n = x.size();
  auto data = read_floats(*transport_, 2 * n);
  GuidanceGrad g;
  g.t = req.t;
  g.grad_noise = from_f32(std::span(data).first(n), x.height, x.width, 3);
  g.grad_sem = from_f32(std::span(data).subspan(n), x.height, x.width, 3);
  for (double v : g.grad_noise.data)
    if (!std::isfinite(v)) fail(Errc::backend, "remote returned non-finite gradients");
  for (double v : g.grad_sem.data)
    if (!std::isfinite(v)) fail(Errc::backend, "remote returned non-finite gradients");
  return g;
}

std::unique_ptr<RemoteBackend> connect_remote(const std::string& endpoint, int timeout_ms) {
  auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon == 0) fail(Errc::config, "remote endpoint must be host:port, got '" + endpoint + "'");
  int port = 0;
  try {
    port = std::stoi(endpoint.substr(colon + 1));
  } catch (const std::exception&) {
    fail(Errc::config, "remote endpoint has a bad port: '" + endpoint + "'");
  }
  return std::make_unique<RemoteBackend>(connect_tcp(endpoint.substr(0, colon), port, timeout_ms), endpoint);
}

std::unique_ptr<RemoteBackend> spawn_remote(const std::string& command, int timeout_ms) {
  return std::make_unique<RemoteBackend>(spawn_stdio(command, timeout_ms), "stdio:" + command);
}

EchoDeltaServer::EchoDeltaServer(NoiseSchedule schedule, Image target_cond, Image target_uncond)
    : schedule_(std::move(schedule)), cond_(std::move(target_cond)), uncond_(std::move(target_uncond)) {
  if (cond_.channels != 3 || !cond_.same_shape(uncond_))
    fail(Errc::config, "echo server targets must be RGB images of one size");
  cond_f32_ = to_f32(cond_);
  uncond_f32_ = to_f32(uncond_);
}

void EchoDeltaServer::serve(Transport& t) const {
  bool greeted = false;
  for (;;) {
    auto header = read_header(t);
    if (!header) return;
    const std::string msg = (*header)["msg"];
    if (msg == "hello") {
      const int version = header->value("version", -1);
      if (version != kVersion) {
        send_error(t, "protocol version mismatch: client sent " + std::to_string(version) + ", server speaks " +
                          std::to_string(kVersion));
        continue;
      }
      greeted = true;
      write_message(t, json{{"msg", "hello"}, {"version", kVersion}, {"name", "echo-delta"}});
      continue;
    }
    if (msg != "grad") {
      send_error(t, "unknown message '" + msg + "'");
      return;
    }

    int h = 0, w = 0, step = 0;
    std::vector<std::string> slots;
    try {
      h = header->at("h").get<int>();
      w = header->at("w").get<int>();
      step = header->at("t").get<int>();
      slots = header->at("slots").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      send_error(t, std::string("malformed grad header: ") + e.what());
      return;
    }
    if (h <= 0 || w <= 0) {
      send_error(t, "malformed grad header: nonpositive size");
      return;
    }
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<float> x, eps;
    for (const std::string& s : slots) {
      const std::size_t ch = slot_channels(s);
      if (ch == 0) {
        send_error(t, "unknown slot '" + s + "'");
        return;
      }
      auto data = read_floats(t, plane * ch);
      if (s == "x") x = std::move(data);
      if (s == "eps") eps = std::move(data);
    }
    if (!greeted) {
      send_error(t, "grad before hello");
      continue;
    }
    if (x.empty() || eps.empty()) {
      send_error(t, std::string("grad request is missing the \"") + (x.empty() ? "x" : "eps") + "\" slot");
      continue;
    }
    if (h != cond_.height || w != cond_.width) {
      send_error(t, "request is " + std::to_string(h) + "x" + std::to_string(w) + " but the echo target is " +
                        std::to_string(cond_.height) + "x" + std::to_string(cond_.width));
      continue;
    }
    if (step <= 0 || step > schedule_.steps) {
      send_error(t, "timestep " + std::to_string(step) + " out of range");
      continue;
    }
    std::vector<float> out(2 * x.size());
    std::span<float> noise(out.data(), x.size()), sem(out.data() + x.size(), x.size());
    delta_residuals<float>(x, eps, cond_f32_, uncond_f32_, static_cast<float>(schedule_.alpha[step]),
                           static_cast<float>(schedule_.sigma[step]), static_cast<float>(schedule_.weight[step]),
                           noise, sem);
    write_message(t, json{{"msg", "grad"}, {"slots", {"grad_noise", "grad_sem"}}}, out);
  }
}

}  // namespace pxd::wire
