#include "smfvo/tracking.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>
#include <opencv2/video/tracking.hpp>

namespace smfvo {

namespace {

cv::Point2f to_cv(const Vec2& p) {
  return {static_cast<float>(p.x()), static_cast<float>(p.y())};
}

Vec2 from_cv(const cv::Point2f& p) { return {p.x, p.y}; }

cv::TermCriteria lk_criteria(const TrackingParams& params) {
  return {cv::TermCriteria::COUNT | cv::TermCriteria::EPS, params.max_iters, params.epsilon};
}

bool inside(const cv::Mat& img, const Vec2& px, double margin) {
  return px.allFinite() && px.x() >= margin && px.y() >= margin &&
         px.x() <= img.cols - 1 - margin && px.y() <= img.rows - 1 - margin;
}

}  // namespace

void TrackingParams::validate() const {
  if (cell_size < 4) throw Error(ErrorCode::InvalidArgument, "tracking.cell_size must be >= 4");
  if (window < 5 || window % 2 == 0)
    throw Error(ErrorCode::InvalidArgument, "tracking.window must be odd and >= 5");
  if (pyramid_levels < 1) throw Error(ErrorCode::InvalidArgument, "tracking.pyramid_levels must be >= 1");
  if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, "tracking.max_iters must be >= 1");
  if (target_count < 0) throw Error(ErrorCode::InvalidArgument, "tracking.target_count must be >= 0");
  if (!(replenish_ratio > 0.0 && replenish_ratio <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "tracking.replenish_ratio must be in (0, 1]");
}

const char* to_string(TrackStatus status) noexcept {
  switch (status) {
    case TrackStatus::Tracked: return "Tracked";
    case TrackStatus::Lost: return "Lost";
    case TrackStatus::OutOfBounds: return "OutOfBounds";
    case TrackStatus::FbFailed: return "FbFailed";
  }
  return "Unknown";
}

ImagePyramid::ImagePyramid(const cv::Mat& gray, const TrackingParams& params) {
  if (gray.empty() || gray.type() != CV_8UC1)
    throw Error(ErrorCode::InvalidArgument, "pyramid input must be a non-empty 8-bit grayscale image");
  cv::buildOpticalFlowPyramid(gray, levels_, cv::Size(params.window, params.window),
                              params.pyramid_levels - 1, true);
}

std::vector<Vec2> detect_features(const cv::Mat& gray, std::span<const Vec2> existing,
                                  const TrackingParams& params) {
  std::vector<Vec2> out;
  const int budget = params.target_count - static_cast<int>(existing.size());
  if (budget <= 0 || gray.empty()) return out;

  const int cell = params.cell_size;
  const int nx = (gray.cols + cell - 1) / cell;
  const int ny = (gray.rows + cell - 1) / cell;
  std::vector<char> occupied(static_cast<std::size_t>(nx * ny), 0);
  for (const Vec2& p : existing) {
    const int cx = static_cast<int>(p.x()) / cell, cy = static_cast<int>(p.y()) / cell;
    if (cx >= 0 && cy >= 0 && cx < nx && cy < ny) occupied[static_cast<std::size_t>(cy * nx + cx)] = 1;
  }
  if (std::all_of(occupied.begin(), occupied.end(), [](char c) { return c != 0; })) return out;

  struct Candidate {
    float score;
    int x, y;
  };
  std::vector<Candidate> candidates;
  const int margin = params.half_window() + 1;
  const auto empty_cells = std::count(occupied.begin(), occupied.end(), 0);

  // Mostly empty grids score the whole image once; sparse gaps score padded
  // per-cell ROIs so the 3x3 non-max suppression still sees across borders.
  const bool whole_image = 2 * empty_cells > nx * ny;
  const int pad = params.score_block / 2 + 3;
  cv::Mat score, dilated;
  if (whole_image) {
    cv::cornerMinEigenVal(gray, score, params.score_block, 3);
    cv::dilate(score, dilated, cv::Mat());
  }
  for (int gy = 0; gy < ny; ++gy) {
    for (int gx = 0; gx < nx; ++gx) {
      if (occupied[static_cast<std::size_t>(gy * nx + gx)]) continue;
      const int x0 = std::max(gx * cell, margin), x1 = std::min((gx + 1) * cell, gray.cols - margin);
      const int y0 = std::max(gy * cell, margin), y1 = std::min((gy + 1) * cell, gray.rows - margin);
      if (x0 >= x1 || y0 >= y1) continue;
      cv::Rect roi(0, 0, gray.cols, gray.rows);
      if (!whole_image) {
        roi = cv::Rect(cv::Point(std::max(x0 - pad, 0), std::max(y0 - pad, 0)),
                       cv::Point(std::min(x1 + pad, gray.cols), std::min(y1 + pad, gray.rows)));
        cv::cornerMinEigenVal(gray(roi), score, params.score_block, 3);
        cv::dilate(score, dilated, cv::Mat());
      }
      Candidate best{0.0f, -1, -1};
      for (int y = y0; y < y1; ++y) {
        const float* sc = score.ptr<float>(y - roi.y);
        const float* d = dilated.ptr<float>(y - roi.y);
        for (int x = x0; x < x1; ++x) {
          const float v = sc[x - roi.x];
          if (v > best.score && v >= d[x - roi.x]) best = {v, x, y};
        }
      }
      if (best.x >= 0 && best.score >= params.min_score) candidates.push_back(best);
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  const double min_existing = static_cast<double>(cell);
  const double min_new = 0.5 * static_cast<double>(cell);
  for (const Candidate& c : candidates) {
    if (static_cast<int>(out.size()) >= budget) break;
    const Vec2 p(c.x, c.y);
    const auto too_close = [&](std::span<const Vec2> pts, double dist) {
      return std::any_of(pts.begin(), pts.end(),
                         [&](const Vec2& q) { return (q - p).squaredNorm() < dist * dist; });
    };
    if (too_close(existing, min_existing) || too_close(out, min_new)) continue;
    out.push_back(p);
  }
  return out;
}

std::vector<FeatureTrack> track_klt(const ImagePyramid& prev, const ImagePyramid& cur,
                                    std::span<const Feature> features, const TrackingParams& params) {
  std::vector<FeatureTrack> tracks(features.size());
  if (features.empty()) return tracks;
  if (prev.width() != cur.width() || prev.height() != cur.height())
    throw Error(ErrorCode::ImageSizeMismatch, "pyramids differ in geometry");

  std::vector<cv::Point2f> p0(features.size()), p1, p0_back;
  for (std::size_t i = 0; i < features.size(); ++i) p0[i] = to_cv(features[i].px);

  const cv::Size win(params.window, params.window);
  const int max_level = std::min(prev.level_count(), cur.level_count()) - 1;
  std::vector<unsigned char> st_fwd, st_bwd;
  std::vector<float> err;
  cv::calcOpticalFlowPyrLK(prev.levels(), cur.levels(), p0, p1, st_fwd, err, win, max_level,
                           lk_criteria(params));
  p0_back = p1;
  cv::calcOpticalFlowPyrLK(cur.levels(), prev.levels(), p1, p0_back, st_bwd, err, win, max_level,
                           lk_criteria(params));

  const double margin = params.half_window();
  for (std::size_t i = 0; i < features.size(); ++i) {
    FeatureTrack& t = tracks[i];
    t.id = features[i].id;
    t.px_prev = features[i].px;
    t.px_cur = from_cv(p1[i]);
    t.age = features[i].age;
    if (!inside(cur.image(), t.px_cur, margin)) {
      t.status = st_fwd[i] || t.px_cur.allFinite() ? TrackStatus::OutOfBounds : TrackStatus::Lost;
    } else if (!st_fwd[i]) {
      t.status = TrackStatus::Lost;
    } else if (!st_bwd[i] || (from_cv(p0_back[i]) - t.px_prev).norm() > params.fb_threshold) {
      t.status = TrackStatus::FbFailed;
    } else {
      t.status = TrackStatus::Tracked;
      t.age += 1;
    }
  }
  return tracks;
}

std::optional<Vec3> triangulate_midpoint(const StereoRig& rig, const Vec3& ray_left,
                                         const Vec3& ray_right) {
  const Vec3 dl = ray_left.normalized();
  const Vec3 dr = (rig.R_rl.transpose() * ray_right).normalized();
  const Vec3 cr = rig.right_center_in_left();
  // Minimize |lambda dl - (cr + mu dr)|^2.
  const double b = dl.dot(dr);
  const double sin2 = 1.0 - b * b;
  if (sin2 < 1e-10) return std::nullopt;  // parallel rays: zero disparity
  const double e = dl.dot(cr), g = dr.dot(cr);
  const double lambda = (e - b * g) / sin2;
  const double mu = (b * e - g) / sin2;
  if (!(lambda > 0.0) || !(mu > 0.0)) return std::nullopt;
  return 0.5 * (lambda * dl + cr + mu * dr);
}

std::optional<Vec3> triangulate_stereo(const StereoRig& rig, const Vec2& px_left,
                                       const Vec2& px_right, const TrackingParams& params) {
  const auto rl = try_unproject(rig.left, px_left);
  const auto rr = try_unproject(rig.right, px_right);
  if (!rl || !rr) return std::nullopt;
  const auto P = triangulate_midpoint(rig, *rl, *rr);
  if (!P || P->norm() > params.max_depth) return std::nullopt;
  const auto back_l = try_project(rig.left, *P);
  const auto back_r = try_project(rig.right, rig.R_rl * *P + rig.t_rl);
  if (!back_l || !back_r) return std::nullopt;
  if ((*back_l - px_left).norm() > params.stereo_max_reprojection ||
      (*back_r - px_right).norm() > params.stereo_max_reprojection)
    return std::nullopt;
  return P;
}

std::vector<StereoMatch> stereo_depth(const StereoRig& rig, const ImagePyramid& left,
                                      const ImagePyramid& right, std::span<const Vec2> px_left,
                                      const TrackingParams& params) {
  std::vector<StereoMatch> out(px_left.size());
  std::vector<std::size_t> idx;
  std::vector<cv::Point2f> pl, pr, pl_back;
  idx.reserve(px_left.size());
  for (std::size_t i = 0; i < px_left.size(); ++i) {
    const auto ray = try_unproject(rig.left, px_left[i]);
    if (!ray) continue;
    // Infinite-depth prediction: the zero-disparity point for rectified rigs.
    const auto guess = try_project(rig.right, rig.R_rl * *ray);
    if (!guess || !inside(right.image(), *guess, 0.0)) continue;
    idx.push_back(i);
    pl.push_back(to_cv(px_left[i]));
    pr.push_back(to_cv(*guess));
  }
  if (idx.empty()) return out;

  const cv::Size win(params.window, params.window);
  const int max_level = std::min(left.level_count(), right.level_count()) - 1;
  std::vector<unsigned char> st_fwd, st_bwd;
  std::vector<float> err;
  std::vector<cv::Point2f> guess = pr;
  cv::calcOpticalFlowPyrLK(left.levels(), right.levels(), pl, pr, st_fwd, err, win, max_level,
                           lk_criteria(params), cv::OPTFLOW_USE_INITIAL_FLOW);
  pl_back.resize(pl.size());
  for (std::size_t k = 0; k < pl.size(); ++k) pl_back[k] = pr[k] - (guess[k] - pl[k]);
  cv::calcOpticalFlowPyrLK(right.levels(), left.levels(), pr, pl_back, st_bwd, err, win, max_level,
                           lk_criteria(params), cv::OPTFLOW_USE_INITIAL_FLOW);

  const double margin = params.half_window();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (!st_fwd[k] || !st_bwd[k]) continue;
    const Vec2 px_r = from_cv(pr[k]);
    if (!inside(right.image(), px_r, margin)) continue;
    if ((from_cv(pl_back[k]) - from_cv(pl[k])).norm() > params.fb_threshold) continue;
    const auto P = triangulate_stereo(rig, px_left[idx[k]], px_r, params);
    if (!P) continue;
    StereoMatch& m = out[idx[k]];
    m.valid = true;
    m.px_right = px_r;
    m.P = *P;
    m.d = P->norm();
  }
  return out;
}

}  // namespace smfvo
