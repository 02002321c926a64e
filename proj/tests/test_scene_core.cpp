#include "uags/scene_core.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

using namespace uags;

namespace {

Vec4 random_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec4 q(n(rng), n(rng), n(rng), n(rng));
  return q / q.norm();
}

Camera simple_camera(const Mat4& pose = Mat4::Identity()) {
  Camera c;
  c.intrinsics = {100, 100, 50, 50};
  c.world_to_camera = pose;
  c.width = 100;
  c.height = 100;
  return c;
}

Mat4 random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Mat4 w = Mat4::Identity();
  const Vec4 q = random_quaternion(rng);
  w.topLeftCorner<3, 3>() = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
  w.topRightCorner<3, 1>() = Vec3(u(rng), u(rng), u(rng));
  return w;
}

}  // namespace

TEST(BuildCovariance, IdentityRotationGivesSquaredScales) {
  const Mat3 cov = build_covariance(Vec4(1, 0, 0, 0), Vec3(std::log(2.0), std::log(3.0), std::log(4.0)));
  EXPECT_LT((cov - Vec3(4, 9, 16).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildCovariance, QuarterTurnAboutZSwapsAxes) {
  const double h = std::sqrt(0.5);
  const Mat3 cov = build_covariance(Vec4(h, 0, 0, h), Vec3(std::log(2.0), 0, 0));
  EXPECT_LT((cov - Vec3(1, 4, 1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildCovariance, MatchesExplicitProductsAndStaysPsd) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-2, 1);
  for (int i = 0; i < 500; ++i) {
    const Vec4 q = random_quaternion(rng);
    const Vec3 s(u(rng), u(rng), u(rng));
    const Mat3 r = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
    Mat3 sm = Mat3::Zero();
    for (int a = 0; a < 3; ++a) sm(a, a) = std::exp(s[a]);
    const Mat3 ref = r * sm * sm.transpose() * r.transpose();
    const Mat3 cov = build_covariance(q, s);
    EXPECT_LT((cov - ref).cwiseAbs().maxCoeff(), 1e-12);
    const double floor = (2.0 * s).array().exp().minCoeff();
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    EXPECT_GE(eig.eigenvalues().minCoeff(), floor - 1e-9);
  }
}

TEST(BuildCovariance, RejectsNonFinite) {
  EXPECT_THROW(build_covariance(Vec4(NAN, 0, 0, 0), Vec3::Zero()), InvalidParameter);
  EXPECT_THROW(build_covariance(Vec4(1, 0, 0, 0), Vec3(INFINITY, 0, 0)), InvalidParameter);
}

TEST(ProjectGaussian, OnAxisAndOffsetPoints) {
  const Camera cam = simple_camera();
  const auto a = project_gaussian(Vec3(0, 0, 1), Mat3::Identity() * 1e-4, cam);
  ASSERT_TRUE(a);
  EXPECT_NEAR(a->footprint.mean.x(), 50, 1e-12);
  EXPECT_NEAR(a->footprint.mean.y(), 50, 1e-12);
  EXPECT_NEAR(a->depth, 1, 1e-12);
  const auto b = project_gaussian(Vec3(0.1, 0, 1), Mat3::Identity() * 1e-4, cam);
  ASSERT_TRUE(b);
  EXPECT_NEAR(b->footprint.mean.x(), 60, 1e-12);
  EXPECT_NEAR(b->footprint.mean.y(), 50, 1e-12);
}

TEST(ProjectGaussian, CullsBehindNearPlane) {
  const Camera cam = simple_camera();
  EXPECT_FALSE(project_gaussian(Vec3(0, 0, 0.005), Mat3::Identity(), cam));
  EXPECT_FALSE(project_gaussian(Vec3(0, 0, -1), Mat3::Identity(), cam));
}

TEST(ProjectGaussian, CovarianceMatchesFiniteDifferenceJacobian) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 100; ++i) {
    const Camera cam = simple_camera(random_pose(rng));
    const Vec3 mu = cam.rotation().transpose() * (Vec3(u(rng), u(rng), 2.0 + u(rng)) - cam.translation());
    const Mat3 cov = build_covariance(random_quaternion(rng), Vec3(u(rng), u(rng), u(rng)) * 2);
    auto proj = [&](const Vec3& x) {
      const Vec3 p = cam.to_camera(x);
      return Vec2(100 * p.x() / p.z() + 50, 100 * p.y() / p.z() + 50);
    };
    Eigen::Matrix<double, 2, 3> jw;  // d pixel / d world
    const double h = 1e-6;
    for (int a = 0; a < 3; ++a) {
      Vec3 e = Vec3::Zero();
      e[a] = h;
      jw.col(a) = (proj(mu + e) - proj(mu - e)) / (2 * h);
    }
    Mat2 ref = jw * cov * jw.transpose();
    ref(0, 0) += 0.3;
    ref(1, 1) += 0.3;
    const auto got = project_gaussian(mu, cov, cam);
    ASSERT_TRUE(got);
    EXPECT_LT((got->footprint.cov - ref).norm() / ref.norm(), 1e-3);
  }
}

TEST(ProjectGaussian, EquivariantUnderWorldRotation) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 100; ++i) {
    const Camera cam = simple_camera(random_pose(rng));
    const Vec3 mu = cam.rotation().transpose() * (Vec3(u(rng), u(rng), 2.0) - cam.translation());
    const Vec4 qv = random_quaternion(rng);
    const Mat3 cov = build_covariance(qv, Vec3(u(rng), u(rng), u(rng)));
    const Mat3 q = quaternion_to_rotation(random_quaternion(rng));
    Camera moved = cam;
    Mat4 qinv = Mat4::Identity();
    qinv.topLeftCorner<3, 3>() = q.transpose();
    moved.world_to_camera = cam.world_to_camera * qinv;
    const auto a = project_gaussian(mu, cov, cam);
    const auto b = project_gaussian(q * mu, q * cov * q.transpose(), moved);
    ASSERT_TRUE(a && b);
    EXPECT_LT((a->footprint.mean - b->footprint.mean).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((a->footprint.cov - b->footprint.cov).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(a->depth, b->depth, 1e-9);
  }
}

TEST(EvalSh, OffsetAndClamp) {
  std::array<double, 12> f{};
  const Vec3 d = Vec3(0.3, -0.2, 0.9).normalized();
  EXPECT_LT((eval_sh(f, 0, d) - Vec3::Constant(0.5)).norm(), 1e-15);
  for (int c = 0; c < 3; ++c) f[c] = -0.5 / kShC0;
  EXPECT_LT(eval_sh(f, 0, d).norm(), 1e-12);
  for (int c = 0; c < 3; ++c) f[c] = -2.0;
  EXPECT_EQ(eval_sh(f, 0, d), Vec3::Zero());
}

TEST(EvalSh, OppositeDirectionsDifferByTwiceTheFirstBand) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int i = 0; i < 100; ++i) {
    std::array<double, 12> f{};
    for (int c = 0; c < 3; ++c) f[c] = 2.0;  // keep well away from the clamp
    for (int k = 3; k < 12; ++k) f[k] = u(rng);
    const Vec3 d = Vec3(u(rng), u(rng), u(rng) + 0.5).normalized();
    // Explicit Y_1m: (-C1 y, C1 z, -C1 x).
    Vec3 band1;
    for (int c = 0; c < 3; ++c) {
      band1[c] = -kShC1 * d.y() * f[3 + c] + kShC1 * d.z() * f[6 + c] - kShC1 * d.x() * f[9 + c];
    }
    const Vec3 diff = eval_sh(f, 1, d) - eval_sh(f, 1, -d);
    EXPECT_LT((diff - 2.0 * band1).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(EvalSh, DegreeZeroIsViewIndependent) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  const std::array<double, 3> f{0.3, -0.2, 0.7};
  const Vec3 ref = eval_sh(f, 0, Vec3(0, 0, 1));
  for (int i = 0; i < 1000; ++i) {
    const Vec3 d = Vec3(n(rng), n(rng), n(rng)).normalized();
    EXPECT_EQ(eval_sh(f, 0, d), ref);
  }
}

TEST(GaussianModel, RejectsDegreeTwo) {
  EXPECT_THROW(GaussianModel(2), InvalidParameter);
  std::array<double, 27> f{};
  EXPECT_THROW(eval_sh(f, 2, Vec3(0, 0, 1)), InvalidParameter);
}

TEST(GaussianModel, RoundTripsPrimitivesAndGathers) {
  GaussianModel m(1);
  for (int k = 0; k < 5; ++k) {
    GaussianPrimitive p;
    p.position = Vec3(k, 2 * k, 3 * k);
    p.opacity_logit = 0.1 * k;
    p.sh[7] = k;
    m.push_back(p);
  }
  EXPECT_EQ(m.size(), 5u);
  EXPECT_EQ(m.primitive(3).sh[7], 3.0);
  const std::vector<int> src{4, 1, 1};
  const GaussianModel g = m.gather(src);
  ASSERT_EQ(g.size(), 3u);
  EXPECT_EQ(g.primitive(0).position, Vec3(4, 8, 12));
  EXPECT_EQ(g.primitive(2).opacity_logit, 0.1);
  EXPECT_THROW(m.append(GaussianModel(0)), ContractError);
}

TEST(GaussianModel, NormalizeRotations) {
  GaussianModel m(0);
  GaussianPrimitive p;
  p.rotation = Vec4(2, 0, 0, 2);
  m.push_back(p);
  m.normalize_rotations();
  EXPECT_NEAR(m.primitive(0).rotation.norm(), 1.0, 1e-15);
}

TEST(Camera, ValidatesPose) {
  Camera c = simple_camera();
  EXPECT_NO_THROW(c.validate());
  c.world_to_camera(0, 0) = 2.0;
  EXPECT_THROW(c.validate(), InvalidParameter);
  c = simple_camera();
  c.intrinsics.fx = 0;
  EXPECT_THROW(c.validate(), InvalidParameter);
  c = simple_camera();
  c.world_to_camera(0, 0) = -1;  // reflection
  c.world_to_camera(1, 1) = -1;
  c.world_to_camera(2, 2) = -1;
  EXPECT_THROW(c.validate(), InvalidParameter);
}
