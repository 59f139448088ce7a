#include "ndnet/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace ndnet {

using nlohmann::json;

namespace {

json range_json(const Range& r) { return json::array({r.min, r.max}); }
Range range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

json checkpoint_to_json(const Checkpoint& c) {
  json params = json::array();
  for (const auto& p : c.store.params()) {
    std::vector<double> data(p.value.data(), p.value.data() + p.value.size());
    params.push_back({{"name", p.name},
                      {"rows", p.value.rows()},
                      {"cols", p.value.cols()},
                      {"group", to_string(p.group)},
                      {"weight_decay", p.weight_decay},
                      {"data", data}});
  }
  json sources = json::array();
  for (const auto& s : c.sources) sources.push_back({s.y_min, s.y_max, s.p95_throughput});
  return {{"version", kCheckpointVersion},
          {"kind", c.kind},
          {"config", c.config},
          {"ranges",
           {{"y_min", range_json(c.ranges.y_min)},
            {"y_max", range_json(c.ranges.y_max)},
            {"p95_throughput", range_json(c.ranges.p95_throughput)}}},
          {"sources", sources},
          {"bins", {{"n_bins", c.disc.n_bins()}, {"lo", c.disc.lo()}, {"hi", c.disc.hi()}}},
          {"params", params}};
}

Checkpoint checkpoint_from_json(const json& j) {
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("checkpoint version mismatch");
  }
  Checkpoint c;
  c.kind = j.at("kind").get<std::string>();
  c.config = j.at("config");
  const json& r = j.at("ranges");
  c.ranges.y_min = range_from(r.at("y_min"));
  c.ranges.y_max = range_from(r.at("y_max"));
  c.ranges.p95_throughput = range_from(r.at("p95_throughput"));
  for (const json& s : j.at("sources")) {
    c.sources.push_back({s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()});
  }
  const json& b = j.at("bins");
  c.disc = Discretizer(b.at("n_bins").get<int>(), b.at("lo").get<double>(), b.at("hi").get<double>());
  for (const json& p : j.at("params")) {
    const auto rows = p.at("rows").get<Eigen::Index>();
    const auto cols = p.at("cols").get<Eigen::Index>();
    const auto data = p.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw std::runtime_error("parameter '" + p.at("name").get<std::string>() + "' has wrong size");
    }
    Mat m = Eigen::Map<const Mat>(data.data(), rows, cols);
    c.store.add(p.at("name").get<std::string>(), std::move(m),
                param_group_from_string(p.at("group").get<std::string>()),
                p.at("weight_decay").get<double>());
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << checkpoint_to_json(ckpt).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  try {
    return checkpoint_from_json(json::parse(in));
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace ndnet
