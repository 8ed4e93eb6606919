#include <doctest.h>

#include <cmath>
#include <random>

#include "moce/fusion.hpp"
#include "test_util.hpp"

using namespace moce;
using namespace moce::lorentz;
using namespace moce::fusion;
using moce::testing::gaussian_vec;
using moce::testing::max_abs_diff;
using moce::testing::random_point;
using moce::testing::unit;

namespace {

using CurvD = Curvature<double>;

layers::LorentzLinearParams<double> near_identity(std::mt19937_64& rng, Eigen::Index n, double noise) {
  layers::LorentzLinearParams<double> p;
  p.W = Mat<double>::Zero(n, n + 1);
  p.W.rightCols(n) = Mat<double>::Identity(n, n);
  if (noise > 0) {
    for (Eigen::Index i = 0; i < p.W.size(); ++i) p.W.data()[i] += gaussian_vec(rng, 1, noise)[0];
  }
  p.b = Vec<double>::Zero(n);
  return p;
}

FusionParams<double> make_params(std::mt19937_64& rng, Eigen::Index n, int layers, int heads, double noise) {
  FusionParams<double> fp;
  fp.lambda_raw = std::log(std::expm1(0.3));
  for (int l = 0; l < layers; ++l) {
    FusionLayerParams<double> lp;
    for (int h = 0; h < heads; ++h) {
      lp.heads.push_back({near_identity(rng, n, noise), near_identity(rng, n, noise), near_identity(rng, n, noise)});
    }
    lp.ln_scale = Vec<double>::Ones(n);
    lp.ln_shift = Vec<double>::Zero(n);
    fp.layers.push_back(lp);
  }
  fp.output = near_identity(rng, n, noise);
  return fp;
}

const frechet::FrechetConfig kCfg{200, 1e-12, 1.0};

}  // namespace

TEST_CASE("fusion_curvature") {
  CHECK(fusion_curvature<double>({CurvD(-2.0)}).value() == -2.0);
  CHECK(fusion_curvature<double>({CurvD(-1.0), CurvD(-3.0)}).value() == -2.0);
  CHECK(fusion_curvature<double>({CurvD(-2.34), CurvD(-2.29), CurvD(-1.91)}).value() ==
        doctest::Approx(-2.18).epsilon(1e-14));
  CHECK_THROWS_AS(fusion_curvature<double>({}), DimensionError);
}

TEST_CASE("project_between_manifolds") {
  std::mt19937_64 rng(1);
  const CurvD km(-1.5), kf(-3.0);
  const auto p = random_point(rng, 4, -1.5);
  CHECK(max_abs_diff(project_between_manifolds(p, km).coords(), p.coords()) < 1e-10);
  CHECK(max_abs_diff(project_between_manifolds(origin<double>(4, km), kf).coords(),
                     origin<double>(4, kf).coords()) < 1e-15);
  const Vec<double> dir = gaussian_vec(rng, 4).normalized();
  const auto a = exp_map_origin<double>(Vec<double>(0.4 * dir), km);
  const auto b = exp_map_origin<double>(Vec<double>(1.3 * dir), km);
  const double scale = std::sqrt(km.value() / kf.value());
  CHECK(geodesic_distance(project_between_manifolds(a, kf), project_between_manifolds(b, kf)) ==
        doctest::Approx(scale * geodesic_distance(a, b)).epsilon(1e-8));
  CHECK(constraint_residual(project_between_manifolds(p, kf)) < 1e-12);

  SUBCASE("origin-distance ordering is preserved") {
    std::vector<LorentzPoint<double>> pts;
    for (int i = 0; i < 30; ++i) pts.push_back(random_point(rng, 3, -0.7, 2.0));
    const auto o_m = origin<double>(3, CurvD(-0.7));
    const auto o_f = origin<double>(3, CurvD(-5.0));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = 0; j < pts.size(); ++j) {
        const bool before = geodesic_distance(o_m, pts[i]) < geodesic_distance(o_m, pts[j]);
        const bool after = geodesic_distance(o_f, project_between_manifolds(pts[i], CurvD(-5.0))) <
                           geodesic_distance(o_f, project_between_manifolds(pts[j], CurvD(-5.0)));
        CHECK(before == after);
      }
    }
  }
}

TEST_CASE("curvature_temperature") {
  CHECK(curvature_temperature(CurvD(-1.0), 1.0) == 1.0);
  CHECK(curvature_temperature(CurvD(-4.0), 1.0) == 0.5);
  CHECK(curvature_temperature(CurvD(-2.34), 0.7) == doctest::Approx(0.45760431532242940782).epsilon(1e-14));
  CHECK_THROWS_AS(curvature_temperature(CurvD(-1.0), 0.0), ParameterError);
}

TEST_CASE("attention_weights: exact cases") {
  const CurvD k(-1.0);
  const auto o = origin<double>(2, k);
  SUBCASE("single key") {
    const auto w = attention_weights<double>(0, o, {o, exp_map_origin<double>(unit(2, 0), k)}, {k, k}, 1.0, 0.3,
                                             1e-6, true);
    REQUIRE(w.size() == 1);
    CHECK(w[0] == 1.0);
  }
  SUBCASE("two keys at equal distance with equal curvature") {
    const auto a = exp_map_origin<double>(unit(2, 0), k);
    const auto b = exp_map_origin<double>(Vec<double>(-unit(2, 0)), k);
    const auto w = attention_weights<double>(0, o, {o, a, b}, {k, k, k}, 1.0, 0.3, 1e-6, true);
    CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("softmax of (0, -1)") {
    const auto far = exp_map_origin<double>(unit(2, 1), k);  // squared distance 1
    const auto w = attention_weights<double>(0, o, {o, o, far}, {k, k, k}, 1.0, 0.0, 1e-6, true);
    CHECK(w[0] == doctest::Approx(0.73105857863000487925).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(0.26894142136999512075).epsilon(1e-14));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(attention_weights<double>(0, o, {o}, {k}, 1.0, 0.3, 1e-6, true), DimensionError);
    CHECK_THROWS_AS(attention_weights<double>(0, o, {o, o}, {k}, 1.0, 0.3, 1e-6, true), DimensionError);
  }
}

TEST_CASE("attention_weights: laws") {
  std::mt19937_64 rng(2);
  SUBCASE("sum to one") {
    for (int t = 0; t < 100; ++t) {
      const CurvD kf(-1.7);
      std::vector<LorentzPoint<double>> keys;
      std::vector<CurvD> ks;
      for (int j = 0; j < 5; ++j) {
        keys.push_back(random_point(rng, 3, -1.7, 1.5));
        ks.emplace_back(-0.2 - 5.0 * std::abs(gaussian_vec(rng, 1)[0]));
      }
      const auto w = attention_weights<double>(2, keys[2], keys, ks, 0.8, 0.5, 1e-6, t % 2 == 0);
      double s = 0.0;
      for (double x : w) {
        CHECK(x >= 0.0);
        s += x;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  SUBCASE("temperature sharpening grows with |K| of the query modality") {
    const CurvD kf(-1.0);
    const auto o = origin<double>(2, kf);
    const auto near = exp_map_origin<double>(Vec<double>(0.5 * unit(2, 0)), kf);
    const auto far = exp_map_origin<double>(Vec<double>(1.0 * unit(2, 1)), kf);
    double prev_gap = -1.0;
    for (double kq : {-0.5, -1.0, -2.0, -4.0}) {
      const auto w = attention_weights<double>(0, o, {o, near, far}, {CurvD(kq), kf, kf}, 1.0, 0.0, 1e-6, true);
      const double gap = w[0] - w[1];
      CHECK(gap > prev_gap);
      prev_gap = gap;
    }
  }
  SUBCASE("prior favors higher |K_j| at equal distance") {
    const CurvD kf(-1.0);
    const auto o = origin<double>(2, kf);
    const auto a = exp_map_origin<double>(unit(2, 0), kf);
    const auto b = exp_map_origin<double>(Vec<double>(-unit(2, 0)), kf);
    double prev = 0.0;
    for (double kj : {-0.5, -1.0, -2.0, -4.0}) {
      const auto w = attention_weights<double>(0, o, {o, a, b}, {kf, CurvD(kj), CurvD(-1.0)}, 1.0, 0.3, 1e-6, true);
      CHECK(w[0] > prev);
      prev = w[0];
    }
    // Without the prior the curvature of the key does not matter.
    const auto w0 = attention_weights<double>(0, o, {o, a, b}, {kf, CurvD(-4.0), CurvD(-1.0)}, 1.0, 0.3, 1e-6, false);
    CHECK(w0[0] == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("cross_attention_layer") {
  std::mt19937_64 rng(3);
  const CurvD kf(-2.0);
  SUBCASE("two identical modalities with identity projections") {
    auto fp = make_params(rng, 3, 1, 2, 0.0);
    const auto p = random_point(rng, 3, -2.0);
    const auto out = cross_attention_layer<double>({p, p}, {kf, kf}, fp, 0, kCfg);
    CHECK(max_abs_diff(out[0].coords(), out[1].coords()) == 0.0);
    CHECK(max_abs_diff(out[0].coords(), layers::hyperbolic_layer_norm<double>(p, Vec<double>::Ones(3),
                                                                             Vec<double>::Zero(3))
                                            .coords()) < 1e-10);
  }
  SUBCASE("permuting modalities permutes outputs") {
    auto fp = make_params(rng, 4, 1, 3, 0.2);
    std::vector<LorentzPoint<double>> reps;
    std::vector<CurvD> ks{CurvD(-1.0), CurvD(-3.0), CurvD(-2.0)};
    for (int i = 0; i < 3; ++i) reps.push_back(random_point(rng, 4, -2.0));
    const auto out = cross_attention_layer<double>(reps, ks, fp, 0, kCfg);
    const std::vector<int> perm{2, 0, 1};
    std::vector<LorentzPoint<double>> preps;
    std::vector<CurvD> pks;
    for (int i : perm) {
      preps.push_back(reps[i]);
      pks.push_back(ks[i]);
    }
    const auto pout = cross_attention_layer<double>(preps, pks, fp, 0, kCfg);
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(max_abs_diff(pout[i].coords(), out[perm[i]].coords()) < 1e-9);
    for (const auto& p : out) CHECK(constraint_residual(p) < 1e-9);
  }
}

TEST_CASE("fuse") {
  std::mt19937_64 rng(4);
  SUBCASE("identical reps with no layers give linear(rep)") {
    auto fp = make_params(rng, 3, 0, 1, 0.3);
    const auto p = random_point(rng, 3, -1.5);
    const auto out = fuse<double>({p, p, p}, fp, kCfg);
    CHECK(max_abs_diff(out.coords(), layers::lorentz_linear(p, fp.output).coords()) < 1e-12);
  }
  SUBCASE("symmetric reps pool to the origin") {
    auto fp = make_params(rng, 3, 0, 1, 0.0);
    const CurvD k(-1.0);
    const Vec<double> v = 0.7 * unit(3, 2);
    const auto out = fuse<double>({exp_map_origin<double>(v, k), exp_map_origin<double>(Vec<double>(-v), k)}, fp, kCfg);
    CHECK(max_abs_diff(out.coords(), origin<double>(3, k).coords()) < 1e-10);
  }
  SUBCASE("full run is reproducible and on the fusion manifold") {
    auto fp = make_params(rng, 4, 2, 2, 0.2);
    std::vector<LorentzPoint<double>> reps{random_point(rng, 4, -1.0), random_point(rng, 4, -3.0),
                                           random_point(rng, 4, -2.0)};
    const auto a = fuse<double>(reps, fp, kCfg);
    const auto b = fuse<double>(reps, fp, kCfg);
    CHECK(max_abs_diff(a.coords(), b.coords()) == 0.0);
    CHECK(a.curvature().value() == doctest::Approx(-2.0));
    CHECK(constraint_residual(a) < 1e-9);
  }
}
