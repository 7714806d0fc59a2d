#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <string>

#include "chunk_plan.hpp"
#include "text_format.hpp"

namespace loopsched {

// Homogeneous, fully connected platform: every host pair has its own link.
struct PlatformSpec {
  count_t host_count{1};
  double host_speed{1.0};       // FLOP/s
  double link_bandwidth{1.0};   // bit/s
  double link_latency{0.0};     // s

  void validate() const {
    if (host_count < 1) throw ParseError("hosts must be at least 1");
    if (!(host_speed > 0.0) || !std::isfinite(host_speed))
      throw ParseError("speed must be positive");
    if (!(link_bandwidth > 0.0) || !std::isfinite(link_bandwidth))
      throw ParseError("bandwidth must be positive");
    if (!(link_latency >= 0.0) || !std::isfinite(link_latency))
      throw ParseError("latency must be non-negative");
  }

  bool operator==(const PlatformSpec&) const = default;
};

// RP3 reproduction constants: 1.562 MFLOP/s, 50 Mbit/s, 2 us.
inline PlatformSpec rp3_platform(count_t hosts = 64) {
  return {hosts, 1.562e6, 50e6, 2e-6};
}

// KNL 7210 constants: 41,600 MFLOP/s per core, 100 Gbit/s, 100 ns.
inline PlatformSpec knl_platform(count_t hosts = 64) {
  return {hosts, 41600e6, 100e9, 100e-9};
}

// Keys: hosts, speed_mflops, bw_mbps | bw_gbps, latency_us | latency_ns.
inline PlatformSpec parse_platform(std::istream& in) {
  const auto kv = KeyValueFile::parse(in);
  static const std::set<std::string> known{"hosts", "speed_mflops", "bw_mbps",
                                           "bw_gbps", "latency_us", "latency_ns"};
  for (const auto& [key, entry] : kv.entries()) {
    if (!known.count(key)) throw ParseError("unknown platform key '" + key + "'", entry.line);
  }
  auto one_of = [&](const char* a, const char* b, const char* quantity) -> std::string {
    const bool ha = kv.has(a), hb = kv.has(b);
    if (ha && hb) {
      throw ParseError(std::string("both ") + a + " and " + b + " given for " + quantity,
                       kv.get(b).line);
    }
    if (!ha && !hb) throw ParseError(std::string("missing required key '") + a + "' (or " + b + ")");
    return ha ? a : b;
  };

  PlatformSpec spec;
  const auto& hosts = kv.get("hosts");
  spec.host_count = parse_count(hosts.value, "hosts", hosts.line);
  if (spec.host_count == 0) throw ParseError("hosts must be at least 1", hosts.line);

  const double mflops = kv.number("speed_mflops");
  if (!(mflops > 0.0)) throw ParseError("speed_mflops must be positive", kv.get("speed_mflops").line);
  spec.host_speed = mflops * 1e6;

  const auto bw_key = one_of("bw_mbps", "bw_gbps", "bandwidth");
  const double bw = kv.number(bw_key);
  if (!(bw > 0.0)) throw ParseError(bw_key + " must be positive", kv.get(bw_key).line);
  spec.link_bandwidth = bw * (bw_key == "bw_mbps" ? 1e6 : 1e9);

  const auto lat_key = one_of("latency_us", "latency_ns", "latency");
  const double lat = kv.number(lat_key);
  if (!(lat >= 0.0)) throw ParseError(lat_key + " must be non-negative", kv.get(lat_key).line);
  spec.link_latency = lat * (lat_key == "latency_us" ? 1e-6 : 1e-9);

  spec.validate();
  return spec;
}

inline PlatformSpec load_platform(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open platform file '" + path + "'");
  return parse_platform(in);
}

}  // namespace loopsched
