#include "ndnet/trace_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace ndnet {

using nlohmann::json;

std::string to_string(SplitTag tag) { return tag == SplitTag::Train ? "train" : "test"; }

SplitTag split_from_string(const std::string& s) {
  if (s == "train") return SplitTag::Train;
  if (s == "test") return SplitTag::Test;
  throw std::invalid_argument("unknown split tag '" + s + "'");
}

GlobalRanges compute_ranges(const std::vector<Trace>& traces) {
  GlobalRanges r;
  bool first = true;
  auto extend = [&first](Range& range, double v) {
    if (first) {
      range = {v, v};
    } else {
      range.min = std::min(range.min, v);
      range.max = std::max(range.max, v);
    }
  };
  for (const auto& t : traces) {
    extend(r.y_min, t.static_features.y_min);
    extend(r.y_max, t.static_features.y_max);
    extend(r.p95_throughput, t.static_features.p95_throughput);
    first = false;
  }
  return r;
}

Dataset make_dataset(std::vector<Trace> traces, SplitTag split) {
  Dataset d;
  d.ranges = compute_ranges(traces);
  d.traces = std::move(traces);
  d.split = split;
  return d;
}

namespace {

json trace_to_json(const Trace& t) {
  json header = {
      {"y_min", t.static_features.y_min},
      {"y_max", t.static_features.y_max},
      {"p95_throughput", t.static_features.p95_throughput},
      {"protocol", t.protocol_tag},
      {"config", t.config_tag},
      {"seed", t.seed},
  };
  json packets = json::array();
  for (const auto& p : t.packets) {
    json row = json::array();
    row.push_back(p.send_time);
    row.push_back(p.size);
    row.push_back(p.spacing);
    if (p.delay.delivered()) {
      row.push_back(p.delay.seconds());
    } else {
      row.push_back(nullptr);
    }
    if (p.recv_rank) {
      row.push_back(*p.recv_rank);
    } else {
      row.push_back(nullptr);
    }
    packets.push_back(std::move(row));
  }
  return json{{"version", kTraceFormatVersion}, {"header", std::move(header)}, {"packets", std::move(packets)}};
}

Trace trace_from_json(const json& j) {
  if (!j.is_object()) throw std::runtime_error("expected a JSON object");
  const int version = j.at("version").get<int>();
  if (version != kTraceFormatVersion) {
    throw std::runtime_error("format version mismatch: got " + std::to_string(version) +
                             ", expected " + std::to_string(kTraceFormatVersion));
  }
  Trace t;
  const json& h = j.at("header");
  t.static_features.y_min = h.at("y_min").get<double>();
  t.static_features.y_max = h.at("y_max").get<double>();
  t.static_features.p95_throughput = h.at("p95_throughput").get<double>();
  t.protocol_tag = h.at("protocol").get<std::string>();
  t.config_tag = h.at("config").get<std::string>();
  t.seed = h.at("seed").get<std::uint64_t>();
  const json& packets = j.at("packets");
  t.packets.reserve(packets.size());
  for (const json& row : packets) {
    if (!row.is_array() || row.size() != 5) throw std::runtime_error("packet row must have 5 fields");
    PacketRecord p;
    p.send_time = row[0].get<double>();
    p.size = row[1].get<std::uint32_t>();
    p.spacing = row[2].get<double>();
    p.delay = row[3].is_null() ? Delay::drop() : Delay::of(row[3].get<double>());
    if (!row[4].is_null()) p.recv_rank = row[4].get<std::uint32_t>();
    t.packets.push_back(p);
  }
  return t;
}

json range_json(const Range& r) { return json::array({r.min, r.max}); }
Range range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

std::filesystem::path ranges_sidecar_path(const std::filesystem::path& dataset_path) {
  return dataset_path.parent_path() / "ranges.json";
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (const auto& t : dataset.traces) out << trace_to_json(t).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }
  const json sidecar = {
      {"version", kTraceFormatVersion},
      {"split", to_string(dataset.split)},
      {"n_traces", dataset.traces.size()},
      {"ranges",
       {{"y_min", range_json(dataset.ranges.y_min)},
        {"y_max", range_json(dataset.ranges.y_max)},
        {"p95_throughput", range_json(dataset.ranges.p95_throughput)}}},
  };
  std::ofstream side(ranges_sidecar_path(path), std::ios::binary | std::ios::trunc);
  if (!side) throw std::runtime_error("cannot write ranges sidecar next to " + path.string());
  side << sidecar.dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Trace> traces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      traces.push_back(trace_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  Dataset d = make_dataset(std::move(traces), SplitTag::Train);
  const auto side_path = ranges_sidecar_path(path);
  if (std::filesystem::exists(side_path)) {
    std::ifstream side(side_path);
    json s;
    try {
      s = json::parse(side);
      if (s.at("version").get<int>() != kTraceFormatVersion) {
        throw std::runtime_error("format version mismatch");
      }
      d.split = split_from_string(s.at("split").get<std::string>());
      const json& r = s.at("ranges");
      d.ranges.y_min = range_from(r.at("y_min"));
      d.ranges.y_max = range_from(r.at("y_max"));
      d.ranges.p95_throughput = range_from(r.at("p95_throughput"));
    } catch (const std::exception& e) {
      throw std::runtime_error(side_path.string() + ": " + e.what());
    }
  }
  return d;
}

std::array<double, 3> normalize_static(const StaticFeatures& x, const GlobalRanges& ranges) {
  auto norm = [](double v, const Range& r) {
    if (!(r.max > r.min)) return 0.5;
    return std::clamp((v - r.min) / (r.max - r.min), 0.0, 1.0);
  };
  return {norm(x.y_min, ranges.y_min), norm(x.y_max, ranges.y_max),
          norm(x.p95_throughput, ranges.p95_throughput)};
}

Discretizer::Discretizer(int n_bins, double lo, double hi) : n_bins_(n_bins), lo_(lo), hi_(hi) {
  if (n_bins < 2) throw std::invalid_argument("Discretizer needs at least 2 bins");
  if (!(lo < hi)) throw std::invalid_argument("Discretizer needs lo < hi");
}

int Discretizer::discretize(double value) const {
  const double v = std::clamp(value, lo_, hi_);
  const int bin = static_cast<int>(std::floor((v - lo_) / (hi_ - lo_) * n_bins_));
  return std::clamp(bin, 0, n_bins_ - 1);
}

double Discretizer::bin_center(int bin) const { return lo_ + (bin + 0.5) * width(); }

double Discretizer::bin_to_value(int bin, Rng& rng) const {
  const double w = width();
  const double lo = lo_ + bin * w;
  const double v = lo + uniform(rng, 0.0, 1.0) * w;
  return std::min(v, std::nextafter(lo + w, lo));
}

}  // namespace ndnet
