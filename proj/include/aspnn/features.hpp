#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "aspnn/common.hpp"
#include "aspnn/data.hpp"

namespace aspnn {

// Fixed 23-component layout of the environmental feature vector.
namespace feat {
inline constexpr int kX = 0;
inline constexpr int kY = 1;
inline constexpr int kGradX = 2;
inline constexpr int kGradY = 3;
inline constexpr int kGrid0 = 4;  // 8 squares, row-major over (dy, dx)
inline constexpr int kNeighbors = 12;
inline constexpr int kSectorTL = 13;
inline constexpr int kSectorTR = 14;
inline constexpr int kSectorBL = 15;
inline constexpr int kSectorBR = 16;
inline constexpr int kNbrVelX = 17;
inline constexpr int kNbrVelY = 18;
inline constexpr int kBrightness = 19;
inline constexpr int kArea = 20;
inline constexpr int kAreaVar = 21;
inline constexpr int kEccentricity = 22;
inline constexpr int kCount = 23;

// Mitosis sample layout: features, own velocity, recursive variations.
inline constexpr int kMitVelX = 23;
inline constexpr int kMitVelY = 24;
inline constexpr int kMitAreaVar = 25;    // window 2
inline constexpr int kMitBrightVar = 26;  // window 3
inline constexpr int kMitosisCount = 27;
}  // namespace feat

// out[n] = sum of the last `window` frame-to-frame differences,
// i.e. series[n] - series[n - window], shortened near the start.
inline std::vector<double> recursive_variation(const std::vector<double>& series,
                                               int window) {
  if (window < 1) fail_config("recursive_variation: window must be >= 1");
  std::vector<double> out(series.size(), 0.0);
  for (std::size_t n = 0; n < series.size(); ++n) {
    const std::size_t back = std::min<std::size_t>(n, window);
    out[n] = series[n] - series[n - back];
  }
  return out;
}

// Min-max scaling onto [-1, 1]; constant components map to 0 and invert to
// their single observed value.
struct NormStats {
  Vector min;
  Vector max;

  static NormStats fit(const Matrix& rows) {
    if (rows.rows() == 0) fail_data("NormStats: empty sample");
    NormStats s;
    s.min = rows.colwise().minCoeff();
    s.max = rows.colwise().maxCoeff();
    return s;
  }

  Eigen::Index size() const { return min.size(); }

  // y = x*scale + offset
  Vector norm_scale() const {
    Vector s(min.size());
    for (Eigen::Index i = 0; i < min.size(); ++i) {
      const double span = max[i] - min[i];
      s[i] = span > 0 ? 2.0 / span : 0.0;
    }
    return s;
  }
  Vector norm_offset() const {
    Vector o(min.size());
    for (Eigen::Index i = 0; i < min.size(); ++i) {
      const double span = max[i] - min[i];
      o[i] = span > 0 ? -(max[i] + min[i]) / span : 0.0;
    }
    return o;
  }
  Vector denorm_scale() const {
    Vector s(min.size());
    for (Eigen::Index i = 0; i < min.size(); ++i) s[i] = (max[i] - min[i]) / 2.0;
    return s;
  }
  Vector denorm_offset() const {
    Vector o(min.size());
    for (Eigen::Index i = 0; i < min.size(); ++i) {
      const double span = max[i] - min[i];
      o[i] = span > 0 ? (max[i] + min[i]) / 2.0 : min[i];
    }
    return o;
  }

  Vector normalize(const Vector& x) const {
    check(x.size());
    return x.cwiseProduct(norm_scale()) + norm_offset();
  }
  Vector denormalize(const Vector& y) const {
    check(y.size());
    return y.cwiseProduct(denorm_scale()) + denorm_offset();
  }
  Matrix normalize_rows(const Matrix& rows) const {
    check(rows.cols());
    Matrix out = rows.array().rowwise() * norm_scale().transpose().array();
    out.rowwise() += norm_offset().transpose();
    return out;
  }
  Matrix denormalize_rows(const Matrix& rows) const {
    check(rows.cols());
    Matrix out = rows.array().rowwise() * denorm_scale().transpose().array();
    out.rowwise() += denorm_offset().transpose();
    return out;
  }

  NormStats slice(Eigen::Index begin, Eigen::Index count) const {
    return {min.segment(begin, count), max.segment(begin, count)};
  }

 private:
  void check(Eigen::Index n) const {
    if (n != min.size())
      fail_data("normalization: expected " + std::to_string(min.size()) +
                " components, got " + std::to_string(n));
  }
};

// Computes the per-frame environmental features of a cell from the full set
// of observed records (context cells included).
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const Dataset& ds, double grid_px = 20.0,
                            double neighbor_radius = 75.0)
      : ds_(&ds), grid_px_(grid_px), nbr_radius_(neighbor_radius) {
    for (int cell : ds.cells()) {
      const int f = ds.n_frames(cell);
      std::vector<double> area(f), bright(f);
      for (int k = 0; k < f; ++k) {
        area[k] = ds.record(cell, k).area;
        bright[k] = ds.record(cell, k).brightness;
      }
      area_var1_[cell] = recursive_variation(area, 1);
      area_var2_[cell] = recursive_variation(area, 2);
      bright_var3_[cell] = recursive_variation(bright, 3);
    }
  }

  Vector features(int frame, int cell) const {
    auto self_row = ds_->find(frame, cell);
    if (!self_row)
      fail_data("no record for (frame=" + std::to_string(frame) +
                ", cell_id=" + std::to_string(cell) + ")");
    const TrajectoryRecord& self = ds_->at(*self_row);

    Vector f = Vector::Zero(feat::kCount);
    f[feat::kX] = self.x;
    f[feat::kY] = self.y;

    // 20 px grid tiles; the 8 squares are the ring around the tile holding
    // the cell center, indexed row-major over (dy, dx).
    const long tx = static_cast<long>(std::floor(self.x / grid_px_));
    const long ty = static_cast<long>(std::floor(self.y / grid_px_));
    static constexpr int offs[8][2] = {{-1, -1}, {0, -1}, {1, -1}, {-1, 0},
                                       {1, 0},   {-1, 1}, {0, 1},  {1, 1}};

    int neighbors = 0;
    Vec2 nbr_vel = Vec2::Zero();
    for (std::size_t row : ds_->rows_in_frame(frame)) {
      const TrajectoryRecord& other = ds_->at(row);
      const bool is_self = other.cell_id == cell;
      // Sector counts cover every visible cell, this one included.
      const bool left = other.x < ds_->width / 2.0;
      const bool top = other.y < ds_->height / 2.0;
      if (top)
        f[left ? feat::kSectorTL : feat::kSectorTR] += 1.0;
      else
        f[left ? feat::kSectorBL : feat::kSectorBR] += 1.0;
      if (is_self) continue;

      const long ox = static_cast<long>(std::floor(other.x / grid_px_));
      const long oy = static_cast<long>(std::floor(other.y / grid_px_));
      for (int k = 0; k < 8; ++k)
        if (ox == tx + offs[k][0] && oy == ty + offs[k][1])
          f[feat::kGrid0 + k] += other.area;

      const double dist = std::hypot(other.x - self.x, other.y - self.y);
      if (dist <= nbr_radius_) {
        ++neighbors;
        nbr_vel += ds_->velocity_at(row);
      }
    }
    const double square_area = grid_px_ * grid_px_;
    Vec2 grad = Vec2::Zero();
    for (int k = 0; k < 8; ++k) {
      f[feat::kGrid0 + k] /= square_area;
      Vec2 u(offs[k][0], offs[k][1]);
      grad += f[feat::kGrid0 + k] * u.normalized();
    }
    f[feat::kGradX] = grad[0];
    f[feat::kGradY] = grad[1];
    f[feat::kNeighbors] = neighbors;
    if (neighbors > 0) {
      f[feat::kNbrVelX] = nbr_vel[0] / neighbors;
      f[feat::kNbrVelY] = nbr_vel[1] / neighbors;
    }
    f[feat::kBrightness] = self.brightness;
    f[feat::kArea] = self.area;
    f[feat::kAreaVar] = area_var1_.at(cell)[ds_->frame_offset(cell, frame)];
    f[feat::kEccentricity] = self.eccentricity;
    return f;
  }

  // 27-component classifier input: features, own velocity, recursive area
  // variation (window 2) and brightness variation (window 3).
  Vector mitosis_features(int frame, int cell) const {
    Vector f(feat::kMitosisCount);
    f.head(feat::kCount) = features(frame, cell);
    const int k = ds_->frame_offset(cell, frame);
    const Vec2 v = ds_->velocity(cell, k);
    f[feat::kMitVelX] = v[0];
    f[feat::kMitVelY] = v[1];
    f[feat::kMitAreaVar] = area_var2_.at(cell)[k];
    f[feat::kMitBrightVar] = bright_var3_.at(cell)[k];
    return f;
  }

  const Dataset& dataset() const { return *ds_; }

 private:
  const Dataset* ds_;
  double grid_px_;
  double nbr_radius_;
  std::map<int, std::vector<double>> area_var1_, area_var2_, bright_var3_;
};

// Per-cell matrices in physical units: states as rows (x, y, vx, vy) and the
// matching feature rows, first `n_frames` observations.
struct CellMatrices {
  int cell = 0;
  Matrix states;    // n x 4
  Matrix features;  // n x 23
};

inline CellMatrices build_cell_matrices(const Dataset& ds,
                                        const FeatureExtractor& fx, int cell,
                                        int n_frames) {
  const int f = std::min(n_frames, ds.n_frames(cell));
  CellMatrices m;
  m.cell = cell;
  m.states.resize(f, 4);
  m.features.resize(f, feat::kCount);
  for (int k = 0; k < f; ++k) {
    const auto& r = ds.record(cell, k);
    const Vec2 v = ds.velocity(cell, k);
    m.states.row(k) << r.x, r.y, v[0], v[1];
    m.features.row(k) = fx.features(r.frame, cell).transpose();
  }
  return m;
}

inline const char* feature_matrix_header() {
  return "frame,cell_id,x,y,grad_x,grad_y,grid0,grid1,grid2,grid3,grid4,grid5,"
         "grid6,grid7,neighbors,sector_tl,sector_tr,sector_bl,sector_br,"
         "nbr_vx,nbr_vy,brightness,area,area_var,eccentricity,vx,vy";
}

// ML-ready export: each row pairs the frame-n feature vector with the next
// frame's velocity target; the last frame of every cell is dropped.
inline void write_feature_matrix_csv(const Dataset& ds,
                                     const FeatureExtractor& fx,
                                     const std::string& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot open '" + path + "' for writing");
  out << feature_matrix_header() << "\n";
  for (int cell : ds.cells()) {
    const int f = ds.n_frames(cell);
    for (int k = 0; k + 1 < f; ++k) {
      const auto& r = ds.record(cell, k);
      const Vector feats = fx.features(r.frame, cell);
      const Vec2 target = ds.velocity(cell, k + 1);
      out << r.frame << ',' << cell;
      for (Eigen::Index i = 0; i < feats.size(); ++i)
        out << ',' << fmt_double(feats[i]);
      out << ',' << fmt_double(target[0]) << ',' << fmt_double(target[1])
          << '\n';
    }
  }
  if (!out) fail_data("write failed for '" + path + "'");
}

}  // namespace aspnn
