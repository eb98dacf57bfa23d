#include "geowarp/geometry.hpp"

#include "geometry_checks.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace geowarp;
using namespace geowarp::testing;

TEST_CASE("pose_to_transform basics") {
  const RigidTransform id = pose_to_transform(Pose{});
  Eigen::Matrix3d basis;
  basis << 1, 0, 0, 0, 0, 1, 0, -1, 0;
  CHECK((id.rotation - basis).cwiseAbs().maxCoeff() == 0.0);
  CHECK(id.translation.isZero());

  const RigidTransform shifted = pose_to_transform(pose_at(1, 2, 3));
  CHECK(shifted.translation == Eigen::Vector3d(1, 2, 3));
  CHECK(shifted.rotation == basis);

  // Hand-computed Rz(pi/2) * B: camera forward ends up on world -x.
  Eigen::Matrix3d expected;
  expected << 0, 0, -1, 1, 0, 0, 0, -1, 0;
  const RigidTransform turned = pose_to_transform(pose_at(0, 0, 0, std::numbers::pi / 2));
  CHECK((turned.rotation - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((turned.rotation * Eigen::Vector3d::UnitZ() - Eigen::Vector3d(-1, 0, 0)).norm() < 1e-15);

  CHECK_THROWS_AS(pose_to_transform(pose_at(NAN, 0, 0)), std::invalid_argument);
  CHECK_THROWS_AS(pose_to_transform(pose_at(0, 0, 0, INFINITY)), std::invalid_argument);
}

TEST_CASE("ego_motion examples") {
  const Pose p = pose_at(3, -2, 1.5, 0.3, 0.05, -0.02);
  const EgoMotion same = ego_motion(p, p);
  CHECK(same.is_zero());
  CHECK(std::abs(same.t_x) + std::abs(same.t_y) + std::abs(same.t_z) < 1e-12);

  // 1 m along the forward axis (world +y at zero yaw).
  const EgoMotion fwd = ego_motion(pose_at(0, 0, 0), pose_at(0, 1, 0));
  CHECK(fwd.t_x == doctest::Approx(0.0));
  CHECK(fwd.t_y == doctest::Approx(0.0));
  CHECK(fwd.t_z == doctest::Approx(-1.0));
  CHECK(std::abs(fwd.r_x) + std::abs(fwd.r_y) + std::abs(fwd.r_z) < 1e-15);

  const double theta = 0.2;
  const EgoMotion turn = ego_motion(pose_at(0, 0, 0), pose_at(0, 0, 0, theta));
  CHECK(turn.r_y == doctest::Approx(theta).epsilon(1e-12));
  CHECK(std::abs(turn.r_x) < 1e-12);
  CHECK(std::abs(turn.r_z) < 1e-12);
  CHECK(Eigen::Vector3d(turn.t_x, turn.t_y, turn.t_z).norm() < 1e-12);
  const Eigen::Matrix4d oracle =
      world_from_camera(pose_at(0, 0, 0, theta)).inverse() * world_from_camera(pose_at(0, 0, 0));
  CHECK(max_abs(turn.to_transform().matrix() - oracle) < 1e-12);
}

TEST_CASE("ego_motion agrees with the matrix oracle on random pose pairs") {
  const OracleAgreement r = ego_motion_oracle(1000, 11);
  CHECK(r.pose_error < 1e-12);
  CHECK(r.motion_error <= 1e-9);
}

TEST_CASE("EgoMotion and RigidTransform round trip") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> t(-5, 5), r(-1.5, 1.5);
  for (int i = 0; i < 500; ++i) {
    const EgoMotion m{t(rng), t(rng), t(rng), r(rng), r(rng), r(rng)};
    const EgoMotion back = EgoMotion::from_transform(m.to_transform());
    CHECK(std::abs(back.t_x - m.t_x) < 1e-9);
    CHECK(std::abs(back.t_z - m.t_z) < 1e-9);
    CHECK(std::abs(back.r_x - m.r_x) < 1e-9);
    CHECK(std::abs(back.r_y - m.r_y) < 1e-9);
    CHECK(std::abs(back.r_z - m.r_z) < 1e-9);
    const RigidTransform loop = m.to_transform() * m.inverse().to_transform();
    CHECK(max_abs(loop.matrix() - Eigen::Matrix4d::Identity()) < 1e-9);
  }
  const EgoMotion gimbal{0, 0, 0, std::numbers::pi / 2, 0.1, 0};
  CHECK_THROWS_AS(EgoMotion::from_transform(gimbal.to_transform()), std::domain_error);
}

TEST_CASE("rotations stay orthonormal under composition") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> r(-0.5, 0.5), t(-2, 2);
  RigidTransform acc;
  for (int i = 0; i < 100; ++i) {
    acc = acc * EgoMotion{t(rng), t(rng), t(rng), r(rng), r(rng), r(rng)}.to_transform();
    CHECK(orthonormality_error(acc.rotation) <= 1e-9);
  }
  CHECK(acc.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("unproject and project examples") {
  const CameraIntrinsics k{100.0, 80.0, 4.0, 3.0, 9, 7};
  DepthMap d(9, 7);
  d.at(4, 3) = 7.0;
  d.mask[3 * 9 + 4] = 1;
  d.at(4 + 0, 3) = 7.0;
  PointCloud c = unproject(d, k);
  REQUIRE(c.size() == 1);
  CHECK(c[0].position == Eigen::Vector3d(0, 0, 7.0));

  const CameraIntrinsics wide{2.0, 2.0, 1.0, 1.0, 4, 3};
  DepthMap e(4, 3);
  e.at(3, 1) = 5.0;  // u = cx + fx
  e.mask[1 * 4 + 3] = 1;
  c = unproject(e, wide);
  REQUIRE(c.size() == 1);
  CHECK((c[0].position - Eigen::Vector3d(5.0, 0, 5.0)).norm() < 1e-15);

  PointCloud pts(2);
  pts[0].position = {0, 0, 3};
  pts[1].position = {1, 1, 0};
  ProjectionStats stats;
  const auto proj = project(pts, k, kDefaultZMin, &stats);
  REQUIRE(proj.size() == 1);
  CHECK(proj[0].u == 4.0);
  CHECK(proj[0].v == 3.0);
  CHECK(proj[0].depth == 3.0);
  CHECK(stats.culled_near == 1);

  PointCloud far(1);
  far[0].position = {100, 0, 1};
  ProjectionStats s2;
  CHECK(project(far, k, kDefaultZMin, &s2).empty());
  CHECK(s2.culled_outside == 1);

  CHECK_THROWS_AS(unproject(DepthMap(3, 3), k), std::invalid_argument);
}

TEST_CASE("project after unproject restores pixels and depths") {
  const RoundTrip r = projection_round_trip(100, 21);
  CHECK(r.counts_match);
  CHECK(r.exact_pixels);
  CHECK(r.depth_error <= 1e-9);
}

TEST_CASE("apply_transform") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-3, 3);
  PointCloud c(50);
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i].position = {u(rng), u(rng), u(rng)};
    c[i].rgb[0] = static_cast<std::uint8_t>(i);
    c[i].source_index = static_cast<std::int32_t>(i * 3);
  }
  const PointCloud same = apply_transform(c, RigidTransform::identity());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(same[i].position == c[i].position);
    CHECK(same[i].source_index == c[i].source_index);
    CHECK(same[i].rgb[0] == c[i].rgb[0]);
  }
  RigidTransform shift;
  shift.translation = {1, -2, 0.5};
  const PointCloud moved = apply_transform(c, shift);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK((moved[i].position - c[i].position - shift.translation).norm() < 1e-15);

  const RigidTransform t1 = EgoMotion{0.3, -1, 2, 0.1, -0.4, 0.2}.to_transform();
  const RigidTransform t2 = EgoMotion{-2, 0.5, 1, -0.3, 0.2, 0.6}.to_transform();
  const PointCloud seq = apply_transform(apply_transform(c, t1), t2);
  const PointCloud comp = apply_transform(c, t2 * t1);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK((seq[i].position - comp[i].position).norm() < 1e-9);
  CHECK(max_abs((t2 * t1).matrix() - t2.matrix() * t1.matrix()) < 1e-12);
}

TEST_CASE("intrinsics validation") {
  CHECK_NOTHROW(default_intrinsics().validate());
  CHECK_THROWS_AS((CameraIntrinsics{0, 1, 0, 0, 4, 4}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((CameraIntrinsics{1, 1, 4, 0, 4, 4}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((CameraIntrinsics{1, 1, -0.5, 0, 4, 4}.validate()), std::invalid_argument);
  const CameraIntrinsics half = default_intrinsics().resized(144, 44);
  CHECK(half.fx == doctest::Approx(80.0));
  CHECK(half.width == 144);
}
