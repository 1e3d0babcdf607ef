#include <catch2/catch_amalgamated.hpp>

#include "mls/core.hpp"

using namespace mls;

TEST_CASE("quat_rotate identity and axis cases") {
  const Vec3 v{1.0, 2.0, 3.0};
  const Vec3 r = quat_rotate(Quat::identity(), v);
  CHECK(r.x == Catch::Approx(1.0));
  CHECK(r.y == Catch::Approx(2.0));
  CHECK(r.z == Catch::Approx(3.0));

  // 90 degrees about z maps x onto y
  const Quat q = Quat::from_axis_angle({0, 0, 1}, 3.14159265358979323846 / 2);
  const Vec3 e = quat_rotate(q, {1, 0, 0});
  CHECK(e.x == Catch::Approx(0.0).margin(1e-12));
  CHECK(e.y == Catch::Approx(1.0).margin(1e-12));
  CHECK(e.z == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("quat_rotate preserves norm and inverts cleanly") {
  Rng rng(123);
  for (int i = 0; i < 1000; ++i) {
    const Quat q = Quat::from_axis_angle(
        {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
        rng.uniform(-6.28, 6.28));
    const Vec3 v{rng.uniform(-10, 10), rng.uniform(-10, 10),
                 rng.uniform(-10, 10)};
    const Vec3 r = quat_rotate(q, v);
    REQUIRE(r.norm() == Catch::Approx(v.norm()).margin(1e-9));
    const Vec3 back = quat_rotate(q.conjugate(), r);
    REQUIRE((back - v).norm() < 1e-9);
  }
}

TEST_CASE("quaternion composition matches sequential rotation") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Quat a = Quat::from_axis_angle(
        {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
        rng.uniform(-3, 3));
    const Quat b = Quat::from_axis_angle(
        {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
        rng.uniform(-3, 3));
    const Vec3 v{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const Vec3 lhs = quat_rotate(a * b, v);
    const Vec3 rhs = quat_rotate(a, quat_rotate(b, v));
    REQUIRE((lhs - rhs).norm() < 1e-9);
  }
}

TEST_CASE("project pinhole cases") {
  CameraIntrinsics intr{100, 100, 50, 50, 100, 100};
  REQUIRE(intr.valid());

  auto c = project(intr, {0, 0, 2});
  REQUIRE(c.has_value());
  CHECK(c->u == Catch::Approx(50.0));
  CHECK(c->v == Catch::Approx(50.0));

  auto off = project(intr, {1, 0, 2});
  REQUIRE(off.has_value());
  CHECK(off->u == Catch::Approx(100.0));  // 100 * 0.5 + 50
  CHECK(off->v == Catch::Approx(50.0));

  CHECK_FALSE(project(intr, {0, 0, -1}).has_value());
  CHECK_FALSE(project(intr, {0, 0, 0}).has_value());
}

TEST_CASE("project round-trips through unproject at depth") {
  CameraIntrinsics intr{320, 315, 160.5, 119.5, 320, 240};
  Rng rng(42);
  for (int i = 0; i < 500; ++i) {
    const double u = rng.uniform(0, 320);
    const double v = rng.uniform(0, 240);
    const double depth = rng.uniform(0.5, 50.0);
    const Vec3 dir = unproject_dir(intr, u, v);
    const Vec3 p = dir * (depth / dir.z);
    const auto back = project(intr, p);
    REQUIRE(back.has_value());
    REQUIRE(back->u == Catch::Approx(u).margin(1e-6));
    REQUIRE(back->v == Catch::Approx(v).margin(1e-6));
  }
}

TEST_CASE("rng determinism") {
  Rng a(0), b(0);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("rng forks are independent streams") {
  Rng parent(99);
  Rng a = parent.fork("a");
  Rng b = parent.fork("b");
  int differing = 0;
  for (int i = 0; i < 100; ++i)
    if (a.next_u64() != b.next_u64()) ++differing;
  CHECK(differing > 90);

  // forking again under the same label yields yet another stream
  Rng parent2(99);
  Rng a1 = parent2.fork("a");
  Rng a2 = parent2.fork("a");
  CHECK(a1.next_u64() != a2.next_u64());

  // but the whole construction is reproducible
  Rng parent3(99);
  Rng a3 = parent3.fork("a");
  Rng check = Rng(99).fork("a");
  REQUIRE(a3.next_u64() == check.next_u64());
}

TEST_CASE("rng uniform statistics") {
  Rng rng(2024);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_unit();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  const double mean = sum / n;
  CHECK(mean > 0.49);
  CHECK(mean < 0.51);
}

TEST_CASE("rng gaussian statistics") {
  Rng rng(5);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sum_sq += g * g;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(sum_sq / n == Catch::Approx(1.0).margin(0.03));
}
