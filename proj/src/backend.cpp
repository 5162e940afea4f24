#include "smfvo/backend.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <unordered_map>

namespace smfvo {

namespace {

using Mat36 = Eigen::Matrix<double, 3, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

// d(ray - q/|q|)/dq
Mat3 error_wrt_q(const Vec3& q) {
  const double norm = q.norm();
  const Vec3 n = q / norm;
  return -(Mat3::Identity() - n * n.transpose()) / norm;
}

template <int N>
Eigen::Matrix<double, N, N> damped(const Eigen::Matrix<double, N, N>& H, double lambda) {
  Eigen::Matrix<double, N, N> out = H;
  for (int i = 0; i < N; ++i) out(i, i) += lambda * std::max(H(i, i), 1e-9);
  return out;
}

constexpr double kOutlierFactor = 5.0;

}  // namespace

void KeyframePolicy::validate() const {
  if (tau_n <= 0 || max_elapsed <= 0 || !(rot_thresh > 0.0) || !(trans_thresh > 0.0))
    throw Error(ErrorCode::InvalidArgument, "keyframe thresholds must be positive");
}

bool should_create_keyframe(int inlier_count, int frames_elapsed, const Pose& rel_pose,
                            const KeyframePolicy& policy) {
  return inlier_count < policy.tau_n || frames_elapsed > policy.max_elapsed ||
         rotation_angle(rel_pose.R) > policy.rot_thresh || rel_pose.t.norm() > policy.trans_thresh;
}

CauchyValue cauchy_loss(double s, double c) {
  const double c2 = c * c;
  const double x = s / c2;
  return {c2 * std::log1p(x), 1.0 / (1.0 + x)};
}

void OptimizerParams::validate() const {
  if (!(cauchy_c > 0.0)) throw Error(ErrorCode::InvalidArgument, "opt.cauchy_c must be positive");
  if (max_iters < 0) throw Error(ErrorCode::InvalidArgument, "opt.max_iters must be >= 0");
  if (!(damping_scale > 1.0)) throw Error(ErrorCode::InvalidArgument, "opt.damping_scale must be > 1");
}

KeyframeProblem::KeyframeProblem(const Keyframe& active, std::span<const Keyframe> fixed,
                                 std::span<const Landmark> landmarks)
    : pose_(active.pose), landmarks_(landmarks.begin(), landmarks.end()) {
  fixed_poses_.reserve(fixed.size());
  for (const Keyframe& kf : fixed) {
    fixed_poses_.push_back(kf.pose);
    extrinsics_.push_back({kf.R_rl, kf.t_rl});
  }
  extrinsics_.push_back({active.R_rl, active.t_rl});

  points_.reserve(landmarks.size());
  const auto add = [&](const Keyframe& kf, int camera, int point, std::uint64_t id) {
    bool seen = false;
    if (auto it = kf.observations.find(id); it != kf.observations.end()) {
      residuals_.push_back({point, camera, false, it->second.normalized()});
      seen = true;
    }
    if (auto it = kf.right_observations.find(id); it != kf.right_observations.end()) {
      residuals_.push_back({point, camera, true, it->second.normalized()});
      seen = true;
    }
    return seen;
  };
  for (std::size_t l = 0; l < landmarks.size(); ++l) {
    points_.push_back(landmarks[l].P);
    const int point = static_cast<int>(l);
    bool observed = add(active, -1, point, landmarks[l].id);
    for (std::size_t k = 0; k < fixed.size(); ++k)
      observed = add(fixed[k], static_cast<int>(k), point, landmarks[l].id) || observed;
    if (!observed)
      throw Error(ErrorCode::InvalidArgument, "landmark " + std::to_string(landmarks[l].id) +
                                                  " is not observed by any keyframe");
  }
}

const Pose& KeyframeProblem::pose_of(const Residual& res, const Pose& active) const {
  return res.camera < 0 ? active : fixed_poses_[static_cast<std::size_t>(res.camera)];
}

Vec3 KeyframeProblem::camera_point(const Residual& res, const Vec3& q_left) const {
  if (!res.right) return q_left;
  const Extrinsic& x = res.camera < 0 ? extrinsics_.back() : extrinsics_[static_cast<std::size_t>(res.camera)];
  return x.R * q_left + x.t;
}

Mat3 KeyframeProblem::extrinsic_rotation(const Residual& res) const {
  if (!res.right) return Mat3::Identity();
  return res.camera < 0 ? extrinsics_.back().R : extrinsics_[static_cast<std::size_t>(res.camera)].R;
}

Vec3 KeyframeProblem::error(const Residual& res, const Pose& active, const Vec3& P) const {
  return res.ray - camera_point(res, pose_of(res, active).inverse_transform(P)).normalized();
}

double KeyframeProblem::cost(double c) const {
  double total = 0.0;
  for (const Residual& r : residuals_)
    total += cauchy_loss(error(r, pose_, points_[static_cast<std::size_t>(r.point)]).squaredNorm(), c).value;
  return total;
}

double KeyframeProblem::cost_at(const Eigen::VectorXd& delta, double c) const {
  Pose T = pose_;
  T.R = T.R * so3_exp(delta.segment<3>(0));
  T.t += delta.segment<3>(3);
  double total = 0.0;
  for (const Residual& r : residuals_) {
    const std::size_t l = static_cast<std::size_t>(r.point);
    const Vec3 P = points_[l] + delta.segment<3>(6 + 3 * static_cast<Eigen::Index>(l));
    total += cauchy_loss(error(r, T, P).squaredNorm(), c).value;
  }
  return total;
}

Eigen::VectorXd KeyframeProblem::gradient(double c) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(parameter_count());
  for (const Residual& r : residuals_) {
    const std::size_t l = static_cast<std::size_t>(r.point);
    const Pose& T = pose_of(r, pose_);
    const Vec3 q = T.inverse_transform(points_[l]);
    const Vec3 qc = camera_point(r, q);
    const Vec3 e = r.ray - qc.normalized();
    const double w = cauchy_loss(e.squaredNorm(), c).weight;
    const Mat3 de_dq = error_wrt_q(qc) * extrinsic_rotation(r);
    const Vec3 ge = 2.0 * w * e;  // d rho / d e
    g.segment<3>(6 + 3 * static_cast<Eigen::Index>(l)) += (de_dq * T.R.transpose()).transpose() * ge;
    if (r.camera < 0) {
      g.segment<3>(0) += (de_dq * skew(q)).transpose() * ge;
      g.segment<3>(3) += (-de_dq * T.R.transpose()).transpose() * ge;
    }
  }
  return g;
}

double KeyframeProblem::residual_rms() const {
  if (residuals_.empty()) return 0.0;
  double sq = 0.0;
  for (const Residual& r : residuals_)
    sq += error(r, pose_, points_[static_cast<std::size_t>(r.point)]).squaredNorm();
  return std::sqrt(sq / static_cast<double>(residuals_.size()));
}

void KeyframeProblem::apply(const Eigen::VectorXd& delta) {
  pose_.R = pose_.R * so3_exp(delta.segment<3>(0));
  pose_.t += delta.segment<3>(3);
  for (std::size_t l = 0; l < points_.size(); ++l)
    points_[l] += delta.segment<3>(6 + 3 * static_cast<Eigen::Index>(l));
}

OptimizationResult KeyframeProblem::solve(const OptimizerParams& params) {
  params.validate();
  const double c = params.cauchy_c;
  const std::size_t L = points_.size();

  OptimizationResult result;
  double current = cost(c);
  result.cost_trace.push_back(current);
  double lambda = params.damping_init;

  Mat6 Hpp;
  Vec6 gp;
  std::vector<Mat63> Hpl(L);
  std::vector<Mat3> Hll(L);
  std::vector<Vec3> gl(L);
  bool stale = true;

  for (int it = 0; it < params.max_iters; ++it) {
    if (stale) {
      Hpp.setZero();
      gp.setZero();
      for (std::size_t l = 0; l < L; ++l) {
        Hpl[l].setZero();
        Hll[l].setZero();
        gl[l].setZero();
      }
      for (const Residual& r : residuals_) {
        const std::size_t l = static_cast<std::size_t>(r.point);
        const Pose& T = pose_of(r, pose_);
        const Vec3 q = T.inverse_transform(points_[l]);
        const Vec3 qc = camera_point(r, q);
        const Vec3 e = r.ray - qc.normalized();
        const double w = cauchy_loss(e.squaredNorm(), c).weight;
        const Mat3 de_dq = error_wrt_q(qc) * extrinsic_rotation(r);
        const Mat3 JP = de_dq * T.R.transpose();
        Hll[l].noalias() += w * JP.transpose() * JP;
        gl[l].noalias() += w * JP.transpose() * e;
        if (r.camera < 0) {
          Mat36 Jx;
          Jx << de_dq * skew(q), -JP;
          Hpp.noalias() += w * Jx.transpose() * Jx;
          gp.noalias() += w * Jx.transpose() * e;
          Hpl[l].noalias() += w * Jx.transpose() * JP;
        }
      }
      stale = false;
    }

    // Schur complement onto the pose block.
    Mat6 S = damped<6>(Hpp, lambda);
    Vec6 rhs = -gp;
    std::vector<Mat3> Hll_inv(L);
    for (std::size_t l = 0; l < L; ++l) {
      Hll_inv[l] = damped<3>(Hll[l], lambda).inverse();
      const Mat63 HplHinv = Hpl[l] * Hll_inv[l];
      S.noalias() -= HplHinv * Hpl[l].transpose();
      rhs.noalias() += HplHinv * gl[l];
    }
    Eigen::VectorXd delta(parameter_count());
    const Vec6 dp = S.ldlt().solve(rhs);
    delta.segment<6>(0) = dp;
    for (std::size_t l = 0; l < L; ++l)
      delta.segment<3>(6 + 3 * static_cast<Eigen::Index>(l)) =
          Hll_inv[l] * (-gl[l] - Hpl[l].transpose() * dp);

    ++result.iterations;
    if (!delta.allFinite()) {
      lambda *= params.damping_scale;
      continue;
    }
    if (delta.norm() < params.step_tolerance) break;

    const double candidate = cost_at(delta, c);
    if (candidate < current) {
      apply(delta);
      current = candidate;
      result.cost_trace.push_back(current);
      ++result.accepted_steps;
      lambda = std::max(lambda / params.damping_scale, 1e-12);
      stale = true;
    } else {
      lambda *= params.damping_scale;
    }
  }

  result.pose = pose_;
  result.landmarks = landmarks_;
  std::vector<double> worst(L, 0.0);
  for (const Residual& r : residuals_) {
    const std::size_t l = static_cast<std::size_t>(r.point);
    worst[l] = std::max(worst[l], error(r, pose_, points_[l]).norm());
  }
  for (std::size_t l = 0; l < L; ++l) {
    result.landmarks[l].P = points_[l];
    result.landmarks[l].inlier = worst[l] < kOutlierFactor * c;
  }
  return result;
}

OptimizationResult optimize_keyframe(const Keyframe& active, std::span<const Keyframe> fixed,
                                     std::span<const Landmark> landmarks,
                                     const OptimizerParams& params) {
  int observed = 0;
  for (const Landmark& lm : landmarks)
    if (active.observations.count(lm.id)) ++observed;
  if (observed < params.min_observations)
    throw Error(ErrorCode::InsufficientObservations,
                "active keyframe observes " + std::to_string(observed) + " landmarks");
  KeyframeProblem problem(active, fixed, landmarks);
  return problem.solve(params);
}

}  // namespace smfvo
