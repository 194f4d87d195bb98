// Copyright 2026 The uid-decode Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * Wire format spoken with an external probability server. One compact JSON
 * object per line, keys in the order shown, '\n' terminated:
 *
 *   {"v":1,"id":0,"op":"hello"}
 *     -> {"v":1,"id":0,"vocab_size":<int>,"model":"<string>"}
 *   {"v":1,"id":<int>,"op":"next","context":[<int>...],"top_k":<int>}
 *     -> {"v":1,"id":<int>,"token_ids":[<int>...],"logprobs":[<float>...],"rest_mass":<float>}
 *   {"v":1,"id":<int>,"op":"encode","text":"..."}
 *     -> {"v":1,"id":<int>,"token_ids":[<int>...]}
 *   any failure -> {"v":1,"id":<int>,"error":"<string>"}
 *
 * logprobs are natural-log probabilities; rest_mass is the probability of
 * every token not listed.
 */

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "uid_decode/common.hpp"

namespace uid_decode::bridge {

inline constexpr int kProtocolVersion = 1;
inline constexpr double kWireNormalizationTolerance = 1e-6;

using Json = nlohmann::ordered_json;

class BridgeError : public SourceError {
 public:
  explicit BridgeError(const std::string& what) : SourceError(what) {}
};
class TimeoutError : public BridgeError {
 public:
  explicit TimeoutError(const std::string& what) : BridgeError("bridge timeout: " + what) {}
};
class MalformedResponse : public BridgeError {
 public:
  explicit MalformedResponse(const std::string& what)
      : BridgeError("malformed bridge message: " + what) {}
};
class VersionMismatch : public BridgeError {
 public:
  explicit VersionMismatch(const std::string& what)
      : BridgeError("protocol version mismatch: " + what) {}
};
class TransportError : public BridgeError {
 public:
  explicit TransportError(const std::string& what) : BridgeError("bridge transport: " + what) {}
};
/// The server answered with an {"error": ...} object.
class ServerError : public BridgeError {
 public:
  explicit ServerError(const std::string& what) : BridgeError("bridge server error: " + what) {}
};

struct BridgeRequest {
  std::int64_t id = 1;
  std::vector<TokenId> context;
  std::int64_t top_k = 1;

  friend bool operator==(const BridgeRequest&, const BridgeRequest&) = default;
};

struct BridgeResponse {
  std::int64_t id = 0;
  std::vector<TokenId> token_ids;
  std::vector<double> logprobs;
  double rest_mass = 0.0;

  friend bool operator==(const BridgeResponse&, const BridgeResponse&) = default;
};

struct ServerInfo {
  int version = kProtocolVersion;
  std::size_t vocab_size = 0;
  std::string model;
};

namespace detail {

inline Json parse_object(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw MalformedResponse(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw MalformedResponse("expected a JSON object");
  return j;
}

inline void check_version(const Json& j) {
  const auto it = j.find("v");
  if (it == j.end() || !it->is_number_integer()) throw MalformedResponse("missing version field 'v'");
  const auto v = it->get<std::int64_t>();
  if (v != kProtocolVersion) {
    throw VersionMismatch("peer speaks v" + std::to_string(v) + ", this client speaks v" +
                          std::to_string(kProtocolVersion));
  }
}

inline std::int64_t get_int(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer()) {
    throw MalformedResponse(std::string("missing integer field '") + key + "'");
  }
  return it->get<std::int64_t>();
}

inline std::vector<TokenId> get_ids(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_array()) {
    throw MalformedResponse(std::string("missing array field '") + key + "'");
  }
  std::vector<TokenId> out;
  out.reserve(it->size());
  for (const auto& e : *it) {
    if (!e.is_number_integer() || e.get<std::int64_t>() < 0 ||
        e.get<std::int64_t>() > static_cast<std::int64_t>(UINT32_MAX)) {
      throw MalformedResponse(std::string("non token-id entry in '") + key + "'");
    }
    out.push_back(static_cast<TokenId>(e.get<std::int64_t>()));
  }
  return out;
}

/// Raises ServerError when the peer sent an error object.
inline void check_error(const Json& j) {
  const auto it = j.find("error");
  if (it != j.end()) {
    throw ServerError(it->is_string() ? it->get<std::string>() : it->dump());
  }
}

}  // namespace detail

inline std::string serialize_hello() {
  Json j;
  j["v"] = kProtocolVersion;
  j["id"] = 0;
  j["op"] = "hello";
  return j.dump();
}

inline std::string serialize(const BridgeRequest& r) {
  Json j;
  j["v"] = kProtocolVersion;
  j["id"] = r.id;
  j["op"] = "next";
  j["context"] = r.context;
  j["top_k"] = r.top_k;
  return j.dump();
}

inline std::string serialize_encode(std::int64_t id, std::string_view text) {
  Json j;
  j["v"] = kProtocolVersion;
  j["id"] = id;
  j["op"] = "encode";
  j["text"] = std::string(text);
  return j.dump();
}

inline std::string serialize(const BridgeResponse& r) {
  Json j;
  j["v"] = kProtocolVersion;
  j["id"] = r.id;
  j["token_ids"] = r.token_ids;
  j["logprobs"] = r.logprobs;
  j["rest_mass"] = r.rest_mass;
  return j.dump();
}

inline std::string serialize(const ServerInfo& info) {
  Json j;
  j["v"] = info.version;
  j["id"] = 0;
  j["vocab_size"] = info.vocab_size;
  j["model"] = info.model;
  return j.dump();
}

inline std::string serialize_error(std::int64_t id, std::string_view message) {
  Json j;
  j["v"] = kProtocolVersion;
  j["id"] = id;
  j["error"] = std::string(message);
  return j.dump();
}

inline BridgeRequest parse_request(std::string_view line) {
  const Json j = detail::parse_object(line);
  detail::check_version(j);
  const auto op = j.find("op");
  if (op == j.end() || *op != "next") throw MalformedResponse("expected op \"next\"");
  BridgeRequest r;
  r.id = detail::get_int(j, "id");
  r.context = detail::get_ids(j, "context");
  r.top_k = detail::get_int(j, "top_k");
  if (r.top_k < 1) throw MalformedResponse("top_k must be >= 1");
  return r;
}

/**
 * Parses a "next" response and checks its shape: aligned arrays, finite
 * non-positive logprobs in non-increasing order, rest_mass in [0, 1], and
 * sum(exp(logprobs)) + rest_mass = 1 within kWireNormalizationTolerance.
 */
inline BridgeResponse parse_response(std::string_view line) {
  const Json j = detail::parse_object(line);
  detail::check_version(j);
  detail::check_error(j);
  BridgeResponse r;
  r.id = detail::get_int(j, "id");
  r.token_ids = detail::get_ids(j, "token_ids");
  const auto lp = j.find("logprobs");
  if (lp == j.end() || !lp->is_array()) throw MalformedResponse("missing array field 'logprobs'");
  for (const auto& e : *lp) {
    if (!e.is_number()) throw MalformedResponse("non-numeric logprob");
    r.logprobs.push_back(e.get<double>());
  }
  const auto rm = j.find("rest_mass");
  if (rm == j.end() || !rm->is_number()) throw MalformedResponse("missing number field 'rest_mass'");
  r.rest_mass = rm->get<double>();

  if (r.token_ids.size() != r.logprobs.size()) {
    throw MalformedResponse("token_ids and logprobs differ in length");
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < r.logprobs.size(); ++i) {
    const double l = r.logprobs[i];
    if (!std::isfinite(l) || l > kWireNormalizationTolerance) {
      throw MalformedResponse("logprob " + std::to_string(l) + " is not a log-probability");
    }
    if (i > 0 && l > r.logprobs[i - 1]) throw MalformedResponse("logprobs not in descending order");
    mass += std::exp(l);
  }
  if (!std::isfinite(r.rest_mass) || r.rest_mass < -kWireNormalizationTolerance ||
      r.rest_mass > 1.0 + kWireNormalizationTolerance) {
    throw MalformedResponse("rest_mass outside [0, 1]");
  }
  if (std::abs(mass + r.rest_mass - 1.0) > kWireNormalizationTolerance) {
    throw MalformedResponse("probabilities sum to " + std::to_string(mass + r.rest_mass) +
                            " (returned " + std::to_string(mass) + " + rest " +
                            std::to_string(r.rest_mass) + ")");
  }
  return r;
}

inline ServerInfo parse_hello_response(std::string_view line) {
  const Json j = detail::parse_object(line);
  detail::check_version(j);
  detail::check_error(j);
  if (detail::get_int(j, "id") != 0) throw MalformedResponse("hello response must carry id 0");
  ServerInfo info;
  const auto vs = detail::get_int(j, "vocab_size");
  if (vs < 1) throw MalformedResponse("vocab_size must be positive");
  info.vocab_size = static_cast<std::size_t>(vs);
  const auto m = j.find("model");
  if (m == j.end() || !m->is_string()) throw MalformedResponse("missing string field 'model'");
  info.model = m->get<std::string>();
  return info;
}

struct EncodeResponse {
  std::int64_t id = 0;
  std::vector<TokenId> token_ids;
};

inline EncodeResponse parse_encode_response(std::string_view line) {
  const Json j = detail::parse_object(line);
  detail::check_version(j);
  detail::check_error(j);
  return {detail::get_int(j, "id"), detail::get_ids(j, "token_ids")};
}

}  // namespace uid_decode::bridge
