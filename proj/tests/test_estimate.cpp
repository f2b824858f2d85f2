#include <catch2/catch_amalgamated.hpp>

#include <oparch/estimate.hpp>
#include <oparch/simulate.hpp>

using namespace oparch;
using Catch::Approx;

namespace {

ccc_params low_dim(int r = 40, double a = 0.7) {
  eigen_basis basis = eigendecompose(ou_kernel(r), 2);
  mat alpha(1, 2);
  alpha.setConstant(a);
  return make_params("ou", r, 2, 1, alpha, basis.lambda.head(2));
}

mat sample_curves(const ccc_params& params, int n, std::uint64_t seed) {
  return simulate_spectral(params, n, 100, seed).curves;
}

}  // namespace

TEST_CASE("scores project onto the eigenbasis", "[estimate]") {
  eigen_basis basis = eigendecompose(bm_kernel(50), 5);
  const int n = 20;
  vec coeff = vec::LinSpaced(n, -2.0, 3.0);
  mat curves = coeff * basis.function(0).transpose();
  score_panel panel = compute_scores(curves, basis, 3);
  REQUIRE(panel.N() == n);
  CHECK((panel.scores.col(0) - coeff).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(panel.scores.col(1).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((panel.squared - panel.scores.cwiseAbs2()).cwiseAbs().maxCoeff() == 0.0);

  mat wrong(2, 49);
  CHECK_THROWS_AS(compute_scores(wrong, basis, 2), domain_error);
  CHECK_THROWS_AS(compute_scores(curves, basis, 6), domain_error);
}

TEST_CASE("score expansion satisfies Parseval on the basis span", "[estimate]") {
  eigen_basis basis = eigendecompose(bm_kernel(60), 8);
  auto rng = make_rng(4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  vec weights(8);
  for (int j = 0; j < 8; ++j) weights(j) = gauss(rng);
  vec curve = basis.functions * weights;
  score_panel panel = compute_scores(curve.transpose(), basis, 8);
  double energy = inner_product(curve, curve);
  CHECK(panel.squared.row(0).sum() == Approx(energy).margin(1e-10));

  // Bessel: truncation can only lose energy.
  score_panel truncated = compute_scores(curve.transpose(), basis, 3);
  CHECK(truncated.squared.row(0).sum() <= energy + 1e-12);
}

TEST_CASE("dimension selection by explained energy", "[estimate]") {
  eigen_basis basis = eigendecompose(bm_kernel(50), 6);
  vec coeff = vec::LinSpaced(30, 1.0, 2.0);
  mat pure = coeff * basis.function(0).transpose();
  CHECK(select_K_tve(pure, basis, 0.9) == 1);
  CHECK(select_K_tve(pure, basis, 0.999999) == 1);

  // Equal mass on the first three frequencies needs all three at tve = 0.9.
  mat three = coeff * (basis.function(0) + basis.function(1) + basis.function(2))
                          .transpose();
  CHECK(select_K_tve(three, basis, 0.9) == 3);
  CHECK(select_K_tve(three, basis, 0.5) == 2);

  mat orthogonal = coeff * basis.function(5).transpose();
  eigen_basis short_basis = eigendecompose(bm_kernel(50), 2);
  CHECK_THROWS_AS(select_K_tve(orthogonal, short_basis, 0.9), domain_error);
  CHECK_THROWS_AS(select_K_tve(pure, basis, 1.5), domain_error);
}

TEST_CASE("moment matrices of the squared-score stack", "[estimate]") {
  ccc_params params = low_dim();
  mat curves = sample_curves(params, 500, 21);
  score_panel panel = compute_scores(curves, params.basis, 2);
  yw_matrices yw = build_yw_matrices(panel, 1, 1e-4);

  CHECK(yw.p == 1);
  CHECK(yw.K == 2);
  CHECK((yw.lambda - params.basis.lambda.head(2)).cwiseAbs().maxCoeff() == 0.0);

  // p=1 stacks every row once: m_p is the plain column mean (times N/N).
  vec col_mean = panel.squared.colwise().mean().transpose();
  CHECK((yw.m_p - col_mean).cwiseAbs().maxCoeff() < 1e-12);

  // c_d is symmetric positive semidefinite.
  CHECK((yw.c_d - yw.c_d.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<mat> eig(yw.c_d);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-10);

  CHECK_THROWS_AS(build_yw_matrices(panel, 1, 0.0), domain_error);
}

TEST_CASE("iid squared scores decorrelate across lags", "[estimate]") {
  ccc_params iid = low_dim(40, 0.0);
  mat curves = sample_curves(iid, 4000, 31);
  score_panel panel = compute_scores(curves, iid.basis, 1);
  yw_matrices yw = build_yw_matrices(panel, 2, 1e-6);
  // With p=2 and K=1, c_d(0,1) is the lag-1 autocovariance of s; the
  // normalized version should sit inside the white-noise band.
  double corr = yw.c_d(0, 1) / yw.c_d(0, 0);
  CHECK(std::abs(corr) <= 3.5 / std::sqrt(4000.0));
}

TEST_CASE("degenerate panels are rejected", "[estimate]") {
  eigen_basis basis = eigendecompose(bm_kernel(30), 2);
  mat curves = vec::Ones(50) * basis.function(0).transpose();
  score_panel panel = compute_scores(curves, basis, 2);
  CHECK_THROWS_AS(build_yw_matrices(panel, 1, 1e-6), domain_error);
  try {
    build_yw_matrices(panel, 1, 1e-6);
  } catch (const domain_error& e) {
    CHECK(e.code() == errc::degenerate_sample);
  }
}

TEST_CASE("exact recovery from synthetic moment matrices", "[estimate]") {
  // Plant a block-diagonal coefficient operator and solve the unregularized
  // system: the diagonals must come back to machine precision.
  const int p = 2, K = 3;
  auto rng = make_rng(99);
  std::normal_distribution<double> gauss(0.0, 1.0);
  mat root(p * K, p * K);
  for (int i = 0; i < p * K; ++i)
    for (int j = 0; j < p * K; ++j) root(i, j) = gauss(rng);
  yw_matrices yw;
  yw.p = p;
  yw.K = K;
  yw.theta = 1e-8;
  yw.lambda = vec::LinSpaced(K, 0.9, 0.3);
  yw.c_d = root * root.transpose() + mat::Identity(p * K, p * K);

  mat m_true = mat::Zero(K, p * K);
  mat alpha_true(p, K);
  alpha_true << 0.7, 0.4, 0.2, 0.3, 0.2, 0.1;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < K; ++j) m_true(j, i * K + j) = alpha_true(i, j);
  yw.d_d = m_true * yw.c_d;
  yw.d_d_mp = yw.d_d;
  yw.m_p = vec::Ones(p * K);
  yw.m1_prime = vec::Ones(K);

  fit_result fit = fit_alpha_finite(yw);
  CHECK((fit.alpha_hat - alpha_true).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((fit.m_hat - m_true).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_FALSE(fit.alpha_clamped.any());

  // Moore-Penrose with the full spectral budget solves the same system.
  fit_result mp = fit_alpha_mp(yw, p * K);
  CHECK((mp.alpha_hat - alpha_true).cwiseAbs().maxCoeff() < 1e-8);

  // Tikhonov at vanishing theta with the full projector agrees too.
  fit_result tik = fit_alpha_tikhonov(yw, 1e-12, p * K);
  CHECK((tik.alpha_hat - alpha_true).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("rank-deficient moments are refused when over-asked", "[estimate]") {
  yw_matrices yw;
  yw.p = 1;
  yw.K = 2;
  yw.theta = 1e-6;
  yw.lambda = vec::Ones(2);
  vec v(2);
  v << 1.0, 2.0;
  yw.c_d = v * v.transpose();  // rank one
  yw.d_d = mat::Ones(2, 2);
  yw.d_d_mp = yw.d_d;
  CHECK_THROWS_AS(fit_alpha_mp(yw, 2), domain_error);
  try {
    fit_alpha_mp(yw, 2);
  } catch (const domain_error& e) {
    CHECK(e.code() == errc::rank_deficient);
  }
  CHECK_THROWS_AS(fit_alpha_finite(yw), domain_error);
  try {
    fit_alpha_finite(yw);
  } catch (const domain_error& e) {
    CHECK(e.code() == errc::singular_cd);
  }
  // The truncated inverse is content with the well-determined directions.
  fit_result ok = fit_alpha_mp(yw, 1);
  CHECK(ok.alpha_hat.allFinite());
}

TEST_CASE("truncation can only increase the normal-equation residual",
          "[estimate]") {
  ccc_params params = low_dim();
  mat curves = sample_curves(params, 400, 77);
  score_panel panel = compute_scores(curves, params.basis, 2);
  yw_matrices yw = build_yw_matrices(panel, 1, 1e-8);
  fit_result full = fit_alpha_mp(yw, 2);
  fit_result cut = fit_alpha_mp(yw, 1);
  double res_full = (full.m_hat * yw.c_d - yw.d_d_mp).norm();
  double res_cut = (cut.m_hat * yw.c_d - yw.d_d_mp).norm();
  CHECK(res_cut >= res_full - 1e-12);
}

TEST_CASE("finite fit satisfies the normal equations exactly", "[estimate]") {
  ccc_params params = low_dim();
  mat curves = sample_curves(params, 600, 13);
  score_panel panel = compute_scores(curves, params.basis, 2);
  yw_matrices yw = build_yw_matrices(panel, 1, 1e-8);
  fit_result fit = fit_alpha_finite(yw);
  CHECK((fit.m_hat * yw.c_d - yw.d_d).norm() <= 1e-8 * yw.d_d.norm());
}

TEST_CASE("regularized fits converge to the finite fit", "[estimate]") {
  ccc_params params = low_dim();
  mat curves = sample_curves(params, 500, 55);
  score_panel panel = compute_scores(curves, params.basis, 2);
  yw_matrices yw = build_yw_matrices(panel, 1, 1e-10);
  fit_result fin = fit_alpha_finite(yw);
  fit_result tik = fit_alpha_tikhonov(yw, 1e-10, 2);
  CHECK((tik.alpha_hat - fin.alpha_hat).cwiseAbs().maxCoeff() < 1e-6);
  fit_result mp = fit_alpha_mp(yw, 2);
  CHECK((mp.alpha_hat - fin.alpha_hat).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("intercept identity on population inputs", "[estimate]") {
  ccc_params params = low_dim(40, 0.7);
  vec mu = mean_sigma(params);
  vec lambda = params.basis.lambda.head(2);

  fit_result fit;
  fit.p = 1;
  fit.K = 2;
  fit.alpha_hat = params.alpha;
  mat c_x = (mu.cwiseProduct(lambda)).asDiagonal();
  vec m_p = mu.cwiseProduct(lambda);
  detail::fit_delta_core(fit, c_x, m_p, lambda, 0.0);
  CHECK((fit.delta_hat - params.delta).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_FALSE(fit.delta_clamped.any());
}

TEST_CASE("intercept estimate is consistent without feedback", "[estimate]") {
  eigen_basis basis = eigendecompose(ou_kernel(40), 3);
  mat alpha = mat::Zero(1, 3);
  vec delta(3);
  delta << 0.5, 0.3, 0.2;
  ccc_params params = make_params("ou", 40, 3, 1, alpha, delta);
  mat curves = sample_curves(params, 5000, 61);
  fit_result fit =
      fit_ccc(curves, basis, 1, 3, fit_method::finite, 1e-8);
  for (int j = 0; j < 3; ++j)
    CHECK(std::abs(fit.delta_hat(j) - delta(j)) <= 0.1 * delta(j));
}

TEST_CASE("full pipeline recovers the coefficients roughly", "[estimate]") {
  // This design has heavy-tailed squared scores, so single replicates swing
  // wildly; the median over replicates is the stable object.
  ccc_params params = low_dim(40, 0.7);
  std::vector<double> e_alpha, e_delta;
  for (int rep = 0; rep < 15; ++rep) {
    mat curves = sample_curves(params, 2000, 800 + rep);
    fit_result fit =
        fit_ccc(curves, params.basis, 1, 2, fit_method::finite, 1e-8);
    auto [ea, ed] = relative_errors(params, {fit});
    e_alpha.push_back(ea);
    e_delta.push_back(ed);
    CHECK(fit.delta_fc().minCoeff() > 0.0);
  }
  std::sort(e_alpha.begin(), e_alpha.end());
  std::sort(e_delta.begin(), e_delta.end());
  CHECK(e_alpha[7] < 0.5);
  CHECK(e_delta[7] < 0.6);
}

TEST_CASE("relative errors against the truth", "[estimate]") {
  ccc_params params = low_dim(30, 0.7);
  fit_result fit;
  fit.p = 1;
  fit.K = 2;
  fit.alpha_hat = params.alpha;
  fit.delta_hat = params.delta;
  CHECK(relative_error_alpha(params, fit) == Approx(0.0).margin(1e-15));
  CHECK(relative_error_delta(params, fit) == Approx(0.0).margin(1e-15));

  fit.alpha_hat = 2.0 * params.alpha;
  CHECK(relative_error_alpha(params, fit) == Approx(1.0).margin(1e-12));

  // A shorter fit counts missing frequencies as zero estimates.
  fit_result narrow;
  narrow.p = 1;
  narrow.K = 1;
  narrow.alpha_hat = params.alpha.leftCols(1);
  narrow.delta_hat = params.delta.head(1);
  CHECK(relative_error_alpha(params, narrow) ==
        Approx(1.0 / std::sqrt(2.0)).margin(1e-12));

  ccc_params zero = params;
  zero.alpha.setZero();
  CHECK_THROWS_AS(relative_error_alpha(zero, fit), domain_error);
  try {
    relative_error_alpha(zero, fit);
  } catch (const domain_error& e) {
    CHECK(e.code() == errc::zero_norm);
  }
}

TEST_CASE("coefficient fit is scale equivariant", "[estimate]") {
  ccc_params params = low_dim();
  mat curves = sample_curves(params, 400, 17);
  fit_result base =
      fit_ccc(curves, params.basis, 1, 2, fit_method::finite, 1e-12);
  fit_result scaled =
      fit_ccc(3.0 * curves, params.basis, 1, 2, fit_method::finite, 1e-12);
  CHECK((base.alpha_hat - scaled.alpha_hat).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((9.0 * base.delta_hat - scaled.delta_hat).cwiseAbs().maxCoeff() <
        1e-6 * base.delta_hat.cwiseAbs().maxCoeff());
}

TEST_CASE("negative raw estimates are reported and clamped downstream",
          "[estimate]") {
  fit_result fit;
  fit.p = 1;
  fit.K = 2;
  fit.alpha_hat.resize(1, 2);
  fit.alpha_hat << -0.2, 0.5;
  fit.alpha_clamped = fit.alpha_hat.array() < 0.0;
  fit.delta_hat.resize(2);
  fit.delta_hat << 1.0, -3.0;
  fit.delta_clamped = fit.delta_hat.array() < fit_result::delta_floor;
  CHECK(fit.alpha_clamped(0, 0));
  CHECK_FALSE(fit.alpha_clamped(0, 1));
  CHECK(fit.alpha_fc()(0, 0) == 0.0);
  CHECK(fit.alpha_fc()(0, 1) == 0.5);
  CHECK(fit.delta_fc()(1) == fit_result::delta_floor);
  CHECK(fit.alpha_hat(0, 0) == -0.2);  // raw value survives for error metrics
}

TEST_CASE("check loss pins the quantile level", "[estimate]") {
  CHECK(check_loss(1.0, 0.05) == Approx(0.05));
  CHECK(check_loss(-1.0, 0.05) == Approx(0.95));
  CHECK(check_loss(0.0, 0.05) == 0.0);
}

TEST_CASE("default regularization grid spans six decades", "[estimate]") {
  auto grid = default_theta_grid(12.0, 4);
  REQUIRE(grid.size() == 12);
  CHECK(grid.front() == Approx(1e-6 * 3.0).epsilon(1e-12));
  CHECK(grid.back() == Approx(1e-1 * 3.0).epsilon(1e-12));
  for (std::size_t g = 0; g + 1 < grid.size(); ++g) CHECK(grid[g] < grid[g + 1]);
}

TEST_CASE("cross-validation picks the loss minimizer", "[estimate]") {
  ccc_params params = low_dim(30, 0.6);
  mat curves = sample_curves(params, 120, 5);
  mat kernel = ou_kernel(30);

  std::vector<double> grid = {1e-6, 1e-3, 1e-1};
  theta_cv_result cv =
      cross_validate_theta(curves, params.basis, kernel, 1, 0.05, grid);
  REQUIRE(cv.cv_err.size() == grid.size());
  double best = *std::min_element(cv.cv_err.begin(), cv.cv_err.end());
  std::size_t chosen = 0;
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (grid[g] == cv.theta) chosen = g;
  CHECK(cv.cv_err[chosen] == Approx(best).margin(1e-15));
  // Ties resolve toward the stronger regularizer.
  for (std::size_t g = chosen + 1; g < grid.size(); ++g)
    CHECK(cv.cv_err[g] > best - 1e-15);

  theta_cv_result single =
      cross_validate_theta(curves, params.basis, kernel, 1, 0.05, {2e-4});
  CHECK(single.theta == 2e-4);

  mat tiny = curves.topRows(20);
  CHECK_THROWS_AS(
      cross_validate_theta(tiny, params.basis, kernel, 1, 0.05, grid),
      domain_error);
}
