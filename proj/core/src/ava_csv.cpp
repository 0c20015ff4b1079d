#include "strel/ava_csv.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "strel/error.hpp"

namespace strel {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_num(const std::string& tok, std::size_t line_no, const char* what) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') {
    throw ParseError(msg("ava csv line ", line_no, ": bad ", what, " '", tok, "'"));
  }
  return v;
}

int parse_int(const std::string& tok, std::size_t line_no, const char* what) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0') {
    throw ParseError(msg("ava csv line ", line_no, ": bad ", what, " '", tok, "'"));
  }
  return static_cast<int>(v);
}

}  // namespace

std::vector<AvaRow> parse_ava_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError(msg("parse_ava_csv: cannot open '", path, "'"));
  std::vector<AvaRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_csv_line(line);
    if (fields.size() != 8) {
      throw ParseError(msg("ava csv line ", line_no, ": expected 8 fields, got ", fields.size()));
    }
    AvaRow row;
    row.video_id = fields[0];
    row.timestamp = parse_int(fields[1], line_no, "timestamp");
    row.box.x1 = parse_num(fields[2], line_no, "x1");
    row.box.y1 = parse_num(fields[3], line_no, "y1");
    row.box.x2 = parse_num(fields[4], line_no, "x2");
    row.box.y2 = parse_num(fields[5], line_no, "y2");
    row.action_id = parse_int(fields[6], line_no, "action_id");
    row.last = parse_num(fields[7], line_no, "person_id/score");
    for (double v : {row.box.x1, row.box.y1, row.box.x2, row.box.y2}) {
      if (v < 0.0 || v > 1.0) {
        throw ValueError(msg("ava csv line ", line_no, ": coordinate ", v, " outside [0,1]"));
      }
    }
    if (!(row.box.x1 < row.box.x2) || !(row.box.y1 < row.box.y2)) {
      throw ValueError(msg("ava csv line ", line_no, ": degenerate box (x1<x2, y1<y2 required)"));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void emit_results_csv(const std::vector<DetectionResult>& results, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError(msg("emit_results_csv: cannot open '", path, "' for writing"));
  char buf[256];
  for (const DetectionResult& r : results) {
    for (const auto& [action, score] : r.scores) {
      if (score < 0.0 || score > 1.0) {
        throw ValueError(msg("emit_results_csv: score ", score, " outside [0,1]"));
      }
      std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.6f,%d,%.6f", r.video_id.c_str(),
                    r.timestamp, r.box.x1, r.box.y1, r.box.x2, r.box.y2, action, score);
      os << buf << '\n';
    }
  }
  if (!os) throw IoError(msg("emit_results_csv: write failed for '", path, "'"));
}

std::vector<DetectionResult> results_from_rows(const std::vector<AvaRow>& rows) {
  // Key on the formatted box so values that round-trip through the 6-decimal
  // CSV group identically.
  std::map<std::string, DetectionResult> grouped;
  std::vector<std::string> order;
  for (const AvaRow& row : rows) {
    char key[192];
    std::snprintf(key, sizeof(key), "%s,%d,%.6f,%.6f,%.6f,%.6f", row.video_id.c_str(),
                  row.timestamp, row.box.x1, row.box.y1, row.box.x2, row.box.y2);
    auto it = grouped.find(key);
    if (it == grouped.end()) {
      DetectionResult r;
      r.video_id = row.video_id;
      r.timestamp = row.timestamp;
      r.box = row.box;
      it = grouped.emplace(key, std::move(r)).first;
      order.push_back(key);
    }
    it->second.scores.emplace_back(row.action_id, row.last);
  }
  std::vector<DetectionResult> out;
  out.reserve(order.size());
  for (const std::string& key : order) {
    DetectionResult& r = grouped[key];
    std::sort(r.scores.begin(), r.scores.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace strel
