#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "trajkit/errors.hpp"
#include "trajkit/trajectory.hpp"

// Newline-delimited JSON interchange format, one trajectory per line:
//   {"id": str, "points": [[lng, lat, t], ...], "meta": {...}}
// Coordinates are written with exactly 6 decimal places; timestamps as
// integers when integral. Round-trips are the identity for datasets whose
// coordinates are 6-decimal quantized, which every producer in this library
// guarantees (geo::round6). Dataset provenance is not part of the line
// schema; callers carry it separately (the CLI uses a sidecar file).

namespace trajkit {

namespace detail {

inline std::string json_escape(const std::string& s) { return nlohmann::json(s).dump(); }

inline void append_coord(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  out += buf;
}

inline void append_time(std::string& out, double t) {
  if (std::isfinite(t) && std::floor(t) == t && std::abs(t) < 9.0e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(t));
    out += buf;
  } else {
    out += nlohmann::json(t).dump();
  }
}

}  // namespace detail

inline void write_jsonl_line(const Trajectory& traj, std::ostream& sink) {
  std::string line;
  line.reserve(64 + traj.points.size() * 40);
  line += "{\"id\":";
  line += detail::json_escape(traj.id);
  line += ",\"points\":[";
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    if (i) line += ',';
    line += '[';
    detail::append_coord(line, traj.points[i].pos.lng);
    line += ',';
    detail::append_coord(line, traj.points[i].pos.lat);
    line += ',';
    detail::append_time(line, traj.points[i].t);
    line += ']';
  }
  line += "],\"meta\":{";
  bool first = true;
  for (const auto& [k, v] : traj.meta) {
    if (!first) line += ',';
    first = false;
    line += detail::json_escape(k);
    line += ':';
    line += detail::json_escape(v);
  }
  line += "}}\n";
  sink << line;
}

inline void write_jsonl(const TrajectoryDataset& ds, std::ostream& sink) {
  validate_dataset(ds);
  for (const Trajectory& traj : ds.trajectories) write_jsonl_line(traj, sink);
}

// Parses one line into a Trajectory; line_number is used for error reports.
inline Trajectory parse_jsonl_line(const std::string& line, std::size_t line_number) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaViolation(std::string("invalid JSON: ") + e.what(), line_number);
  }
  if (!j.is_object()) throw SchemaViolation("line is not a JSON object", line_number);
  if (!j.contains("id") || !j["id"].is_string())
    throw SchemaViolation("missing or non-string \"id\"", line_number);
  if (!j.contains("points") || !j["points"].is_array())
    throw SchemaViolation("missing or non-array \"points\"", line_number);

  Trajectory traj;
  traj.id = j["id"].get<std::string>();
  traj.points.reserve(j["points"].size());
  for (const auto& p : j["points"]) {
    if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() ||
        !p[2].is_number())
      throw SchemaViolation("point is not a [lng, lat, t] number triple", line_number);
    traj.points.push_back({{p[0].get<double>(), p[1].get<double>()}, p[2].get<double>()});
  }
  if (!j.contains("meta") || !j["meta"].is_object())
    throw SchemaViolation("missing or non-object \"meta\"", line_number);
  for (const auto& [k, v] : j["meta"].items()) {
    if (!v.is_string()) throw SchemaViolation("meta value is not a string", line_number);
    traj.meta[k] = v.get<std::string>();
  }
  try {
    validate_trajectory(traj);
  } catch (const Error& e) {
    throw SchemaViolation(e.what(), line_number);
  }
  return traj;
}

inline TrajectoryDataset read_jsonl(std::istream& source, std::string provenance = "") {
  TrajectoryDataset ds;
  ds.provenance = std::move(provenance);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(source, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ds.trajectories.push_back(parse_jsonl_line(line, line_number));
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace trajkit
