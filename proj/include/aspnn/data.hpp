#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aspnn/common.hpp"

namespace aspnn {

// GENERIC state z = (x, y, vx, vy); the object of time stepping.
struct CellState {
  double x = 0, y = 0, vx = 0, vy = 0;

  Vec4 to_vec() const { return Vec4(x, y, vx, vy); }
  static CellState from_vec(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }
};

// One observation of one cell in one frame; the ingestion unit.
struct TrajectoryRecord {
  int frame = 0;
  int cell_id = 0;
  double x = 0, y = 0;
  double area = 0;
  double eccentricity = 0;
  double brightness = 0;
  int mitosis = -1;  // -1 = unlabeled
};

namespace detail {

inline double parse_double(const std::string& s, const std::string& ctx) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail_data("cannot parse number '" + s + "' (" + ctx + ")");
  return v;
}

inline int parse_int(const std::string& s, const std::string& ctx) {
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail_data("cannot parse integer '" + s + "' (" + ctx + ")");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

// Records grouped both by cell and by frame; velocities derived as position
// differences between consecutive frames (zero at the first frame of a cell).
class Dataset {
 public:
  double width = 0;
  double height = 0;

  static Dataset from_records(std::vector<TrajectoryRecord> recs, double w,
                              double h,
                              std::vector<std::string>* warnings = nullptr) {
    Dataset ds;
    ds.width = w;
    ds.height = h;
    std::stable_sort(recs.begin(), recs.end(),
                     [](const TrajectoryRecord& a, const TrajectoryRecord& b) {
                       if (a.cell_id != b.cell_id) return a.cell_id < b.cell_id;
                       return a.frame < b.frame;
                     });
    for (std::size_t i = 1; i < recs.size(); ++i) {
      if (recs[i].cell_id == recs[i - 1].cell_id &&
          recs[i].frame == recs[i - 1].frame)
        fail_data("duplicate record for (frame=" +
                  std::to_string(recs[i].frame) +
                  ", cell_id=" + std::to_string(recs[i].cell_id) + ")");
    }
    // Truncate each trajectory at its first frame gap.
    std::vector<TrajectoryRecord> kept;
    kept.reserve(recs.size());
    for (std::size_t i = 0; i < recs.size();) {
      std::size_t j = i + 1;
      while (j < recs.size() && recs[j].cell_id == recs[i].cell_id &&
             recs[j].frame == recs[j - 1].frame + 1)
        ++j;
      for (std::size_t k = i; k < j; ++k) kept.push_back(recs[k]);
      std::size_t end = j;
      while (end < recs.size() && recs[end].cell_id == recs[i].cell_id) ++end;
      if (end != j && warnings)
        warnings->push_back("cell " + std::to_string(recs[i].cell_id) +
                            ": frame gap after frame " +
                            std::to_string(recs[j - 1].frame) + ", dropped " +
                            std::to_string(end - j) + " records");
      i = end;
    }
    ds.records_ = std::move(kept);
    ds.reindex();
    if (ds.width > 0 && ds.height > 0) {
      for (const auto& r : ds.records_)
        if (r.x < 0 || r.x > ds.width || r.y < 0 || r.y > ds.height)
          fail_data("record (frame=" + std::to_string(r.frame) +
                    ", cell_id=" + std::to_string(r.cell_id) +
                    ") outside image bounds");
    }
    return ds;
  }

  const std::vector<TrajectoryRecord>& records() const { return records_; }

  std::vector<int> cells() const {
    std::vector<int> out;
    out.reserve(by_cell_.size());
    for (const auto& [id, _] : by_cell_) out.push_back(id);
    return out;
  }

  int n_frames(int cell) const {
    return static_cast<int>(cell_rows(cell).size());
  }

  // k-th observation of a cell (ascending frame order).
  const TrajectoryRecord& record(int cell, int k) const {
    return records_[cell_rows(cell).at(static_cast<std::size_t>(k))];
  }

  // Derived velocity of the k-th observation; zero for k == 0.
  Vec2 velocity(int cell, int k) const {
    return velocities_[cell_rows(cell).at(static_cast<std::size_t>(k))];
  }

  const std::vector<std::size_t>& rows_in_frame(int frame) const {
    static const std::vector<std::size_t> empty;
    auto it = by_frame_.find(frame);
    return it == by_frame_.end() ? empty : it->second;
  }

  const TrajectoryRecord& at(std::size_t row) const { return records_[row]; }
  Vec2 velocity_at(std::size_t row) const { return velocities_[row]; }

  std::optional<std::size_t> find(int frame, int cell) const {
    auto it = by_key_.find({frame, cell});
    if (it == by_key_.end()) return std::nullopt;
    return it->second;
  }

  bool has_cell(int cell) const { return by_cell_.count(cell) > 0; }

  // Position index of a cell's observation within its trajectory.
  int frame_offset(int cell, int frame) const {
    const auto& rows = cell_rows(cell);
    const int first = records_[rows.front()].frame;
    const int off = frame - first;
    if (off < 0 || off >= static_cast<int>(rows.size()))
      fail_data("cell " + std::to_string(cell) + " has no frame " +
                std::to_string(frame));
    return off;
  }

  CellState state(int cell, int k) const {
    const auto& r = record(cell, k);
    const Vec2 v = velocity(cell, k);
    return {r.x, r.y, v[0], v[1]};
  }

 private:
  const std::vector<std::size_t>& cell_rows(int cell) const {
    auto it = by_cell_.find(cell);
    if (it == by_cell_.end())
      fail_data("unknown cell id " + std::to_string(cell));
    return it->second;
  }

  void reindex() {
    by_cell_.clear();
    by_frame_.clear();
    by_key_.clear();
    velocities_.assign(records_.size(), Vec2::Zero());
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      by_cell_[r.cell_id].push_back(i);
      by_frame_[r.frame].push_back(i);
      by_key_[{r.frame, r.cell_id}] = i;
    }
    for (auto& [cell, rows] : by_cell_) {
      for (std::size_t k = 1; k < rows.size(); ++k) {
        const auto& cur = records_[rows[k]];
        const auto& prev = records_[rows[k - 1]];
        velocities_[rows[k]] = Vec2(cur.x - prev.x, cur.y - prev.y);
      }
    }
  }

  std::vector<TrajectoryRecord> records_;
  std::vector<Vec2> velocities_;
  std::map<int, std::vector<std::size_t>> by_cell_;
  std::map<int, std::vector<std::size_t>> by_frame_;
  std::map<std::pair<int, int>, std::size_t> by_key_;
};

// --- trajectory files --------------------------------------------------------
// CSV schema: frame,cell_id,x,y,area,eccentricity,brightness[,mitosis]
// An optional leading comment line `# width=<w> height=<h>` carries the image
// bounds. The JSON-lines mirror uses identical field names, with one metadata
// object {"width":...,"height":...} as the first line.

enum class TrajectoryFormat { Csv, Jsonl };

inline TrajectoryFormat format_from_path(const std::string& path) {
  if (path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl")
    return TrajectoryFormat::Jsonl;
  return TrajectoryFormat::Csv;
}

struct LoadResult {
  Dataset dataset;
  std::vector<std::string> warnings;
};

inline void write_trajectories(const std::vector<TrajectoryRecord>& recs,
                               double width, double height,
                               const std::string& path,
                               TrajectoryFormat format = TrajectoryFormat::Csv) {
  std::ofstream out(path);
  if (!out) fail_data("cannot open '" + path + "' for writing");
  const bool labeled =
      std::any_of(recs.begin(), recs.end(),
                  [](const TrajectoryRecord& r) { return r.mitosis >= 0; });
  if (format == TrajectoryFormat::Csv) {
    out << "# width=" << fmt_double(width) << " height=" << fmt_double(height)
        << "\n";
    out << "frame,cell_id,x,y,area,eccentricity,brightness"
        << (labeled ? ",mitosis" : "") << "\n";
    for (const auto& r : recs) {
      out << r.frame << ',' << r.cell_id << ',' << fmt_double(r.x) << ','
          << fmt_double(r.y) << ',' << fmt_double(r.area) << ','
          << fmt_double(r.eccentricity) << ',' << fmt_double(r.brightness);
      if (labeled) out << ',' << (r.mitosis >= 0 ? r.mitosis : 0);
      out << '\n';
    }
  } else {
    nlohmann::json meta{{"width", width}, {"height", height}};
    out << meta.dump() << "\n";
    for (const auto& r : recs) {
      nlohmann::json j{{"frame", r.frame},   {"cell_id", r.cell_id},
                       {"x", r.x},           {"y", r.y},
                       {"area", r.area},     {"eccentricity", r.eccentricity},
                       {"brightness", r.brightness}};
      if (labeled) j["mitosis"] = r.mitosis >= 0 ? r.mitosis : 0;
      out << j.dump() << "\n";
    }
  }
  if (!out) fail_data("write failed for '" + path + "'");
}

inline LoadResult load_trajectories(const std::string& path,
                                    TrajectoryFormat format) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open '" + path + "'");
  std::vector<TrajectoryRecord> recs;
  double width = 0, height = 0;
  std::string line;
  std::size_t lineno = 0;

  if (format == TrajectoryFormat::Csv) {
    bool header_seen = false;
    bool has_mitosis = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (line[0] == '#') {
        std::istringstream meta(line.substr(1));
        std::string tok;
        while (meta >> tok) {
          auto eq = tok.find('=');
          if (eq == std::string::npos) continue;
          const std::string key = tok.substr(0, eq);
          const std::string val = tok.substr(eq + 1);
          if (key == "width") width = detail::parse_double(val, "metadata");
          if (key == "height") height = detail::parse_double(val, "metadata");
        }
        continue;
      }
      auto fields = detail::split_csv_line(line);
      if (!header_seen) {
        if (fields.size() < 7 || fields[0] != "frame" ||
            fields[1] != "cell_id" || fields[2] != "x" || fields[3] != "y" ||
            fields[4] != "area" || fields[5] != "eccentricity" ||
            fields[6] != "brightness")
          fail_data("'" + path + "': unexpected header '" + line + "'");
        if (fields.size() == 8 && fields[7] == "mitosis")
          has_mitosis = true;
        else if (fields.size() != 7)
          fail_data("'" + path + "': unexpected header '" + line + "'");
        header_seen = true;
        continue;
      }
      const std::string ctx = path + ":" + std::to_string(lineno);
      if (fields.size() != (has_mitosis ? 8u : 7u))
        fail_data(ctx + ": expected " + std::to_string(has_mitosis ? 8 : 7) +
                  " fields, got " + std::to_string(fields.size()));
      TrajectoryRecord r;
      r.frame = detail::parse_int(fields[0], ctx);
      r.cell_id = detail::parse_int(fields[1], ctx);
      r.x = detail::parse_double(fields[2], ctx);
      r.y = detail::parse_double(fields[3], ctx);
      r.area = detail::parse_double(fields[4], ctx);
      r.eccentricity = detail::parse_double(fields[5], ctx);
      r.brightness = detail::parse_double(fields[6], ctx);
      if (has_mitosis && !fields[7].empty())
        r.mitosis = detail::parse_int(fields[7], ctx);
      recs.push_back(r);
    }
    if (!header_seen) fail_data("'" + path + "': missing header");
  } else {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        fail_data(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (!j.contains("frame")) {
        if (j.contains("width")) width = j["width"].get<double>();
        if (j.contains("height")) height = j["height"].get<double>();
        continue;
      }
      TrajectoryRecord r;
      try {
        r.frame = j.at("frame").get<int>();
        r.cell_id = j.at("cell_id").get<int>();
        r.x = j.at("x").get<double>();
        r.y = j.at("y").get<double>();
        r.area = j.at("area").get<double>();
        r.eccentricity = j.at("eccentricity").get<double>();
        r.brightness = j.at("brightness").get<double>();
        if (j.contains("mitosis")) r.mitosis = j["mitosis"].get<int>();
      } catch (const nlohmann::json::exception& e) {
        fail_data(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
      recs.push_back(r);
    }
  }

  LoadResult res;
  if (width <= 0 || height <= 0) {
    // No metadata: fall back to the observed extent.
    for (const auto& r : recs) {
      width = std::max(width, r.x);
      height = std::max(height, r.y);
    }
    res.warnings.push_back(
        "'" + path + "': no width/height metadata, using observed extent");
  }
  res.dataset = Dataset::from_records(std::move(recs), width, height,
                                      &res.warnings);
  return res;
}

inline LoadResult load_trajectories(const std::string& path) {
  return load_trajectories(path, format_from_path(path));
}

// Correct-trajectory filter: cells observed for more than `min_frames` frames
// qualify, truncated to their first `min_frames` frames; everything else stays
// available as environmental context. min_frames <= 0 keeps all cells whole.
struct FilteredCells {
  std::vector<std::pair<int, int>> correct;  // (cell id, frames used)
};

inline FilteredCells filter_correct_trajectories(const Dataset& ds,
                                                 int min_frames = 105) {
  FilteredCells out;
  for (int cell : ds.cells()) {
    const int f = ds.n_frames(cell);
    if (min_frames <= 0)
      out.correct.emplace_back(cell, f);
    else if (f > min_frames)
      out.correct.emplace_back(cell, min_frames);
  }
  return out;
}

}  // namespace aspnn
