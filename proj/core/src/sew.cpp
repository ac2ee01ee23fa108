#include "ctsfm/sew.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <fftw3.h>

#include "ctsfm/errors.hpp"
#include "ctsfm/splines.hpp"

namespace ctsfm {

namespace {

using CacheKey = std::tuple<double, double, int>;

std::mutex& cache_mutex() {
  static std::mutex m;
  return m;
}

std::map<CacheKey, std::vector<double>>& cache() {
  static std::map<CacheKey, std::vector<double>> c;
  return c;
}

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

/// Grid whose first and last control points still touch a sample.
KnotGrid fit_grid(double a, double b, double dt) {
  KnotGrid g;
  g.dt = dt;
  g.t0 = a - dt;
  g.count = static_cast<int>(std::floor((b - g.t0) / dt)) + 3;
  return g;
}

std::vector<double> compute_response(double dt, double rate, int N) {
  const double span = (N - 1) / rate;
  const KnotGrid grid = fit_grid(0.0, span, dt);
  const int M = grid.count;

  // Four non-zero basis values per sample.
  std::vector<int> seg(N);
  std::vector<std::array<double, 4>> w(N);
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::SparseMatrix<double> BtB(M, M);
  {
    std::vector<double> band(static_cast<std::size_t>(M) * 4, 0.0);  // BtB(j, j + d), d = 0..3
    for (int i = 0; i < N; ++i) {
      const double t = std::min(i / rate, std::nextafter(grid.t_max(), 0.0));
      const auto [s, u] = locate_segment(grid, t);
      seg[i] = s;
      const double pw[4] = {1.0, u, u * u, u * u * u};
      for (int j = 0; j < 4; ++j) {
        double v = 0.0;
        for (int k = 0; k < 4; ++k) v += kBasisMatrix6[j][k] * pw[k];
        w[i][j] = v / 6.0;
      }
      for (int a = 0; a < 4; ++a) {
        for (int b = a; b < 4; ++b) band[(s + a) * 4 + (b - a)] += w[i][a] * w[i][b];
      }
    }
    double trace = 0.0;
    for (int j = 0; j < M; ++j) trace += band[j * 4];
    for (int j = 0; j < M; ++j) {
      trip.emplace_back(j, j, band[j * 4] + 1e-14 * trace / M);
      for (int d = 1; d < 4 && j + d < M; ++d) {
        trip.emplace_back(j, j + d, band[j * 4 + d]);
        trip.emplace_back(j + d, j, band[j * 4 + d]);
      }
    }
    BtB.setFromTriplets(trip.begin(), trip.end());
  }
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::NaturalOrdering<int>> llt(BtB);
  if (llt.info() != Eigen::Success) {
    throw Error(Errc::kDegenerate, "spline normal equations are singular");
  }
  const auto L = llt.matrixL();

  // Twiddle tables: cos/sin(2 pi m / N).
  std::vector<double> ct(N);
  std::vector<double> st(N);
  for (int m = 0; m < N; ++m) {
    ct[m] = std::cos(2.0 * std::numbers::pi * m / N);
    st[m] = std::sin(2.0 * std::numbers::pi * m / N);
  }

  std::vector<double> H(N, 0.0);
  Eigen::VectorXd bc(M);
  Eigen::VectorXd bs(M);
  for (int k = 0; k <= N / 2; ++k) {
    bc.setZero();
    bs.setZero();
    long idx = 0;
    for (int i = 0; i < N; ++i) {
      const double c = ct[idx];
      const double s = st[idx];
      for (int j = 0; j < 4; ++j) {
        bc[seg[i] + j] += w[i][j] * c;
        bs[seg[i] + j] += w[i][j] * s;
      }
      idx += k;
      if (idx >= N) idx -= N;
    }
    L.solveInPlace(bc);
    L.solveInPlace(bs);
    H[k] = std::clamp((bc.squaredNorm() + bs.squaredNorm()) / N, 0.0, 1.0);
    if (k > 0) H[N - k] = H[k];
  }
  return H;
}

}  // namespace

std::vector<double> frequency_response(double dt, double sample_rate, int N) {
  if (!(sample_rate > 0.0) || N < 64) {
    throw Error(Errc::kInvalidArgument, "frequency response needs N >= 64 samples at a positive rate");
  }
  if (!(dt >= 2.0 / sample_rate * (1.0 - 1e-9))) {
    throw Error(Errc::kInvalidArgument, "knot spacing must be at least two sample periods");
  }
  const double span = (N - 1) / sample_rate;
  if (span / dt < 1.0) {
    throw Error(Errc::kDegenerate, "degenerate knot grid: fewer than 4 knots across the window");
  }
  const CacheKey key{dt, sample_rate, N};
  {
    std::lock_guard<std::mutex> lock(cache_mutex());
    const auto it = cache().find(key);
    if (it != cache().end()) return it->second;
  }
  auto H = compute_response(dt, sample_rate, N);
  std::lock_guard<std::mutex> lock(cache_mutex());
  return cache().emplace(key, std::move(H)).first->second;
}

std::size_t frequency_response_cache_size() {
  std::lock_guard<std::mutex> lock(cache_mutex());
  return cache().size();
}

void clear_frequency_response_cache() {
  std::lock_guard<std::mutex> lock(cache_mutex());
  cache().clear();
}

std::vector<double> power_spectrum(const Eigen::MatrixXd& signal) {
  const int N = static_cast<int>(signal.rows());
  std::vector<double> P(N, 0.0);
  if (N == 0) return P;
  std::vector<double> in(N);
  std::vector<std::complex<double>> out(N / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    plan = fftw_plan_dft_r2c_1d(N, in.data(), reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  }
  for (Eigen::Index c = 0; c < signal.cols(); ++c) {
    for (int i = 0; i < N; ++i) in[i] = signal(i, c);
    fftw_execute(plan);
    for (int k = 0; k <= N / 2; ++k) {
      const double e = std::norm(out[k]) / N;
      P[k] += e;
      if (k > 0 && N - k != k) P[N - k] += e;
    }
  }
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan);
  }
  return P;
}

namespace {

/// Cubic splines reproduce straight lines, so removing the line through the
/// end samples leaves the fit residual unchanged while closing the jump the
/// DFT sees at the wrap-around.
Eigen::MatrixXd remove_end_line(const Eigen::MatrixXd& signal) {
  const Eigen::Index N = signal.rows();
  Eigen::MatrixXd out = signal;
  for (Eigen::Index c = 0; c < signal.cols(); ++c) {
    const double a = signal(0, c);
    const double b = signal(N - 1, c);
    for (Eigen::Index i = 0; i < N; ++i) out(i, c) -= a + (b - a) * static_cast<double>(i) / static_cast<double>(N - 1);
  }
  return out;
}

void check_signal(const Eigen::MatrixXd& signal) {
  if (signal.rows() < 64) throw Error(Errc::kInvalidArgument, "signal needs at least 64 samples");
  if (!signal.allFinite()) throw Error(Errc::kInvalidArgument, "signal must be finite");
}

ResidualPrediction predict_from_spectrum(const std::vector<double>& P, const std::vector<double>& H, double sigma_n,
                                         int axes) {
  const int N = static_cast<int>(P.size());
  double e = 0.0;
  double f = 0.0;
  for (int k = 0; k < N; ++k) {
    e += (1.0 - H[k]) * (1.0 - H[k]) * P[k];
    f += H[k] * H[k];
  }
  ResidualPrediction out;
  // Energies are summed over axes; report per-axis variances.
  out.sigma_e = std::sqrt(e / N / axes);
  out.sigma_f = std::sqrt(sigma_n * sigma_n * f / N);
  out.sigma_r = std::sqrt(out.sigma_e * out.sigma_e + out.sigma_f * out.sigma_f);
  return out;
}

double total_energy(const std::vector<double>& P) {
  double sum = 0.0;
  for (double p : P) sum += p;
  return sum;
}

double quality_from_spectrum(const std::vector<double>& P, const std::vector<double>& H) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < P.size(); ++k) {
    num += H[k] * H[k] * P[k];
    den += P[k];
  }
  if (!(den > 0.0)) throw Error(Errc::kDegenerate, "degenerate signal: zero energy");
  return num / den;
}

}  // namespace

ResidualPrediction predict_residual_std(const Eigen::MatrixXd& signal, double sample_rate, double dt,
                                        double sigma_n) {
  check_signal(signal);
  const auto P = power_spectrum(remove_end_line(signal));
  const auto H = frequency_response(dt, sample_rate, static_cast<int>(signal.rows()));
  return predict_from_spectrum(P, H, sigma_n, static_cast<int>(signal.cols()));
}

double quality(const Eigen::MatrixXd& signal, double sample_rate, double dt) {
  check_signal(signal);
  const auto P = power_spectrum(signal);
  return quality_from_spectrum(P, frequency_response(dt, sample_rate, static_cast<int>(signal.rows())));
}

std::vector<double> knot_spacing_candidates(int N, double sample_rate, int count) {
  const double lo = 2.0 / sample_rate;
  const double hi = N / sample_rate / 8.0;
  if (!(hi > lo) || count < 2) {
    return {lo};
  }
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) {
    out[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

KnotSelection select_knot_spacing(const Eigen::MatrixXd& signal, double sample_rate, double q_hat, int candidates) {
  if (!(q_hat > 0.0 && q_hat < 1.0)) throw Error(Errc::kInvalidArgument, "quality target must lie in (0, 1)");
  check_signal(signal);
  const int N = static_cast<int>(signal.rows());
  const auto P = power_spectrum(signal);
  const auto cands = knot_spacing_candidates(N, sample_rate, candidates);
  // Nothing to lose: a zero signal is kept perfectly at any spacing.
  if (total_energy(P) == 0.0) return KnotSelection{cands.back(), 1.0, true};
  for (auto it = cands.rbegin(); it != cands.rend(); ++it) {
    const double q = quality_from_spectrum(P, frequency_response(*it, sample_rate, N));
    if (q >= q_hat) return KnotSelection{*it, q, true};
  }
  const double q = quality_from_spectrum(P, frequency_response(cands.front(), sample_rate, N));
  return KnotSelection{cands.front(), q, false};
}

SewResult compute_weights(const Eigen::MatrixXd& gyro, const Eigen::MatrixXd& accel, double sample_rate,
                          double sigma_n_gyro, double sigma_n_accel, const SewOptions& options) {
  if (options.fixed_dt < 0.0 || !std::isfinite(options.fixed_dt)) {
    throw Error(Errc::kInvalidArgument, "fixed knot spacing must be positive");
  }
  SewResult out;
  KnotSelection sel_g;
  KnotSelection sel_a;
  if (options.fixed_dt > 0.0) {
    out.dt = options.fixed_dt;
  } else {
    sel_g = select_knot_spacing(gyro, sample_rate, options.q_hat, options.candidates);
    sel_a = select_knot_spacing(accel, sample_rate, options.q_hat, options.candidates);
    out.dt = std::min(sel_g.dt, sel_a.dt);
  }

  auto analyse = [&](const Eigen::MatrixXd& sig, double sigma_n, const KnotSelection& sel) {
    SewAnalysis a;
    a.N = static_cast<int>(sig.rows());
    a.sample_rate = sample_rate;
    a.dt = out.dt;
    a.sigma_n = sigma_n;
    const auto P = power_spectrum(sig);
    const auto H = frequency_response(out.dt, sample_rate, a.N);
    const auto pred =
        predict_from_spectrum(power_spectrum(remove_end_line(sig)), H, sigma_n, static_cast<int>(sig.cols()));
    a.sigma_e = pred.sigma_e;
    a.sigma_f = pred.sigma_f;
    a.sigma_r = std::max(pred.sigma_r, options.min_sigma_r);
    a.quality = total_energy(P) == 0.0 ? 1.0 : quality_from_spectrum(P, H);
    a.satisfied = sel.satisfied;
    return a;
  };
  out.gyro = analyse(gyro, sigma_n_gyro, sel_g);
  out.accel = analyse(accel, sigma_n_accel, sel_a);
  out.W_gyro = Eigen::Matrix3d::Identity() / (out.gyro.sigma_r * out.gyro.sigma_r);
  out.W_accel = Eigen::Matrix3d::Identity() / (out.accel.sigma_r * out.accel.sigma_r);
  return out;
}

}  // namespace ctsfm
