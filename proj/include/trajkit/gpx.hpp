#pragma once

#include <cctype>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "trajkit/errors.hpp"
#include "trajkit/geo.hpp"
#include "trajkit/trajectory.hpp"

// GPX 1.1 ingestion. Each <trkseg> becomes its own Trajectory (segment
// boundaries denote signal gaps). Trackpoints need lat, lon and an ISO-8601
// <time>; anything missing, out of range, or non-monotonic is dropped rather
// than repaired. <rte> and <wpt> elements are out of scope.

namespace trajkit {

struct GpxStats {
  std::size_t points_seen = 0;
  std::size_t dropped_invalid = 0;       // bad/missing coordinates or time
  std::size_t dropped_duplicate = 0;     // identical (pos, t) as predecessor
  std::size_t dropped_nonmonotonic = 0;  // t <= previous t
  std::size_t segments_dropped = 0;      // fewer than 2 usable points

  std::size_t dropped_total() const {
    return dropped_invalid + dropped_duplicate + dropped_nonmonotonic;
  }
};

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian date (Howard Hinnant's
// days_from_civil); exact integer arithmetic, no timezone database.
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

// Parses ISO-8601 combined date-time ("2023-05-01T10:00:00Z", optional
// fractional seconds, optional +hh:mm offset) to seconds since the epoch.
inline std::optional<double> parse_iso8601(const std::string& s) {
  const char* p = s.c_str();
  auto digits = [&p](int count, long long& out) {
    out = 0;
    for (int i = 0; i < count; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(*p))) return false;
      out = out * 10 + (*p++ - '0');
    }
    return true;
  };
  auto expect = [&p](char c) { return *p == c ? (++p, true) : false; };

  long long year, mon, day, hour, min, sec;
  if (!digits(4, year) || !expect('-') || !digits(2, mon) || !expect('-') || !digits(2, day))
    return std::nullopt;
  if (*p != 'T' && *p != 't' && *p != ' ') return std::nullopt;
  ++p;
  if (!digits(2, hour) || !expect(':') || !digits(2, min) || !expect(':') || !digits(2, sec))
    return std::nullopt;
  if (mon < 1 || mon > 12 || day < 1 || day > 31 || hour > 23 || min > 59 || sec > 60)
    return std::nullopt;

  double frac = 0.0;
  if (*p == '.') {
    ++p;
    double scale = 0.1;
    if (!std::isdigit(static_cast<unsigned char>(*p))) return std::nullopt;
    while (std::isdigit(static_cast<unsigned char>(*p))) {
      frac += (*p++ - '0') * scale;
      scale *= 0.1;
    }
  }

  long long offset_s = 0;
  if (*p == 'Z' || *p == 'z') {
    ++p;
  } else if (*p == '+' || *p == '-') {
    const int sign = (*p == '+') ? 1 : -1;
    ++p;
    long long oh, om = 0;
    if (!digits(2, oh)) return std::nullopt;
    if (*p == ':') ++p;
    if (std::isdigit(static_cast<unsigned char>(*p)) && !digits(2, om)) return std::nullopt;
    offset_s = sign * (oh * 3600 + om * 60);
  }  // bare local time: treated as UTC
  if (*p != '\0') return std::nullopt;

  const std::int64_t days = days_from_civil(year, static_cast<unsigned>(mon),
                                            static_cast<unsigned>(day));
  const double epoch = static_cast<double>(days) * 86400.0 +
                       static_cast<double>(hour * 3600 + min * 60 + sec - offset_s);
  return epoch + frac;
}

inline std::optional<double> parse_double(const boost::property_tree::ptree& node,
                                          const std::string& key) {
  auto raw = node.get_optional<std::string>(key);
  if (!raw) return std::nullopt;
  try {
    std::size_t consumed = 0;
    const double v = std::stod(*raw, &consumed);
    while (consumed < raw->size() &&
           std::isspace(static_cast<unsigned char>((*raw)[consumed])))
      ++consumed;
    if (consumed != raw->size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

inline std::vector<Trajectory> parse_gpx(std::istream& bytes, GpxStats* stats = nullptr) {
  namespace pt = boost::property_tree;
  pt::ptree doc;
  try {
    pt::read_xml(bytes, doc);
  } catch (const pt::xml_parser_error& e) {
    throw MalformedXml(std::string("GPX parse failed: ") + e.what());
  }

  GpxStats local;
  GpxStats& st = stats ? *stats : local;
  std::vector<Trajectory> out;

  const auto gpx = doc.get_child_optional("gpx");
  if (gpx) {
    const std::string creator = gpx->get<std::string>("<xmlattr>.creator", "");
    std::size_t trk_ordinal = 0;
    for (const auto& [trk_key, trk] : *gpx) {
      if (trk_key != "trk") continue;
      ++trk_ordinal;
      const std::string name = trk.get<std::string>("name", "");
      std::size_t seg_ordinal = 0;
      for (const auto& [seg_key, seg] : trk) {
        if (seg_key != "trkseg") continue;
        ++seg_ordinal;
        Trajectory traj;
        traj.id = "t" + std::to_string(trk_ordinal) + "s" + std::to_string(seg_ordinal);
        if (!creator.empty()) traj.meta["creator"] = creator;
        if (!name.empty()) traj.meta["name"] = name;

        for (const auto& [pt_key, trkpt] : seg) {
          if (pt_key != "trkpt") continue;
          ++st.points_seen;
          const auto lat = detail::parse_double(trkpt, "<xmlattr>.lat");
          const auto lon = detail::parse_double(trkpt, "<xmlattr>.lon");
          const auto time_raw = trkpt.get_optional<std::string>("time");
          const auto t = time_raw ? detail::parse_iso8601(*time_raw) : std::nullopt;
          if (!lat || !lon || !t || !coords_valid({*lon, *lat})) {
            ++st.dropped_invalid;
            continue;
          }
          const TrajPoint p{geo::round6(GeoPoint{*lon, *lat}), *t};
          if (!traj.points.empty()) {
            const TrajPoint& prev = traj.points.back();
            if (p.pos == prev.pos && p.t == prev.t) {
              ++st.dropped_duplicate;
              continue;
            }
            if (p.t <= prev.t) {
              ++st.dropped_nonmonotonic;
              continue;
            }
          }
          traj.points.push_back(p);
        }
        if (traj.points.size() < 2) {
          ++st.segments_dropped;
          continue;
        }
        out.push_back(std::move(traj));
      }
    }
  }

  if (out.empty()) throw NoUsablePoints("GPX yielded no trajectory with 2 or more usable points");
  return out;
}

inline std::vector<Trajectory> parse_gpx(const std::string& bytes, GpxStats* stats = nullptr) {
  std::istringstream in(bytes);
  return parse_gpx(in, stats);
}

}  // namespace trajkit
