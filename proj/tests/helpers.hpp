#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ndnet/core.hpp"

namespace ndnet::test {

/// Trace from send times and delays; a negative delay marks a drop.
inline Trace make_trace(const std::vector<double>& send, const std::vector<double>& delay, bool finalize = true,
                        std::uint32_t size = kDefaultMtu) {
  Trace t;
  for (std::size_t i = 0; i < send.size(); ++i) {
    PacketRecord p;
    p.send_time = send[i];
    p.size = size;
    p.delay = delay[i] < 0 ? Delay::drop() : Delay::of(delay[i]);
    t.packets.push_back(p);
  }
  if (finalize) finalize_trace(t);
  return t;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ndnet-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace ndnet::test
