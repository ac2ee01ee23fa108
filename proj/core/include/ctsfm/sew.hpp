#pragma once

// Spline error weighting: predicts the residual of a least-squares cubic
// spline fit from the signal spectrum, picks a knot spacing from an energy
// quality target and turns the predicted residual into IMU weights.
//
// DFT convention is unitary, so sum |X_k|^2 = sum |x_i|^2.

#include <vector>

#include <Eigen/Core>

namespace ctsfm {

/// Per-bin gain of least-squares cubic B-spline fitting with knot spacing dt
/// to N samples at `sample_rate`. Bins 0..N-1; H[k] = H[N-k].
std::vector<double> frequency_response(double dt, double sample_rate, int N);

/// Number of cached responses (for tests).
std::size_t frequency_response_cache_size();
void clear_frequency_response_cache();

struct ResidualPrediction {
  double sigma_e = 0.0;  // approximation error
  double sigma_f = 0.0;  // filtered sensor noise
  double sigma_r = 0.0;  // sqrt(sigma_e^2 + sigma_f^2)
};

/// `signal` is N x D (rows are samples, columns are axes).
ResidualPrediction predict_residual_std(const Eigen::MatrixXd& signal, double sample_rate, double dt,
                                        double sigma_n);

/// |H X|^2 / |X|^2. Throws kDegenerate for a zero-energy signal.
double quality(const Eigen::MatrixXd& signal, double sample_rate, double dt);

/// 64 log-spaced values from 2 samples to a eighth of the signal duration.
std::vector<double> knot_spacing_candidates(int N, double sample_rate, int count = 64);

struct KnotSelection {
  double dt = 0.0;
  double quality = 0.0;
  /// False when no candidate reached the target; dt is then the smallest candidate.
  bool satisfied = true;
};

KnotSelection select_knot_spacing(const Eigen::MatrixXd& signal, double sample_rate, double q_hat,
                                  int candidates = 64);

struct SewAnalysis {
  int N = 0;
  double sample_rate = 0.0;
  double dt = 0.0;
  double sigma_n = 0.0;
  double sigma_e = 0.0;
  double sigma_f = 0.0;
  double sigma_r = 0.0;
  double quality = 0.0;
  bool satisfied = true;
};

struct SewResult {
  double dt = 0.0;
  Eigen::Matrix3d W_gyro = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d W_accel = Eigen::Matrix3d::Identity();
  SewAnalysis gyro;
  SewAnalysis accel;
};

struct SewOptions {
  double q_hat = 0.99;
  int candidates = 64;
  /// Lower bound on the predicted residual std, guarding against 1/0 weights.
  double min_sigma_r = 1e-6;
  /// Positive: use this knot spacing instead of selecting one; weights are
  /// still predicted at it.
  double fixed_dt = 0.0;
};

/// Gyro drives the rotational knot spacing and accelerometer the translational
/// one; the smaller is used for every spline. W = I / sigma_r^2 at that spacing.
SewResult compute_weights(const Eigen::MatrixXd& gyro, const Eigen::MatrixXd& accel, double sample_rate,
                          double sigma_n_gyro, double sigma_n_accel, const SewOptions& options = {});

/// Unitary DFT of each column, |X_k|^2 summed over columns.
std::vector<double> power_spectrum(const Eigen::MatrixXd& signal);

}  // namespace ctsfm
