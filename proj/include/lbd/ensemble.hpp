#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "lbd/net.hpp"

namespace lbd {

/// A finite mixture of point masses over network parameters.
///
/// Particles are the columns of a P x M matrix so that coordinate-wise
/// statistics across particles are row reductions.
/// Seeds of different particles are spaced far apart so that runs with
/// consecutive seeds never share a particle initialization.
inline constexpr std::uint64_t kParticleSeedStride = 1'000'003;

/// seed + j * kParticleSeedStride.
std::uint64_t particle_seed(std::uint64_t seed, Index j);

class ParticleEnsemble {
 public:
  /// Uniform mixture weights when `mixture_weights` is empty.
  ParticleEnsemble(NetShape shape, Eigen::MatrixXd particles, Eigen::VectorXd mixture_weights = {});

  /// Particle j drawn with init_params(shape, particle_seed(seed, j)).
  static ParticleEnsemble initialize(const NetShape& shape, Index num_particles, std::uint64_t seed);

  const NetShape& shape() const { return shape_; }
  Index size() const { return particles_.cols(); }
  Index param_count() const { return particles_.rows(); }
  const Eigen::MatrixXd& particles() const { return particles_; }
  /// Callers must keep the P x M dimensions.
  Eigen::MatrixXd& mutable_particles() { return particles_; }
  auto particle(Index j) const { return particles_.col(j); }
  const Eigen::VectorXd& mixture_weights() const { return weights_; }

  bool operator==(const ParticleEnsemble& other) const;

 private:
  NetShape shape_;
  Eigen::MatrixXd particles_;
  Eigen::VectorXd weights_;
};

struct Predictive {
  Eigen::MatrixXd per_particle;  // M x K log-probabilities
  Eigen::VectorXd mixture;       // K probabilities
};

Predictive predictive_logprobs(const ParticleEnsemble& ens, const Eigen::VectorXd& x);

struct BatchPredictive {
  std::vector<Eigen::MatrixXd> per_particle;  // M entries of B x K log-probabilities
  Eigen::MatrixXd mixture;                    // B x K probabilities
};

BatchPredictive predictive_batch(const ParticleEnsemble& ens, const Eigen::MatrixXd& inputs);

/// (1/M) sum_j ||theta_j||^2.
double l2_term(const ParticleEnsemble& ens);

/// Diagonal-Gaussian entropy proxy 1/2 sum_k log(var_k + epsilon) with the
/// population variance across particles. Zero (with a warning) when M = 1.
double entropy_term(const ParticleEnsemble& ens, double epsilon);

/// d entropy_term / d theta, P x M: (theta_jk - mean_k) / (M (var_k + epsilon)).
Eigen::MatrixXd entropy_gradient(const ParticleEnsemble& ens, double epsilon);

struct RegularizerValue {
  double l2_term = 0.0;
  double entropy_term = 0.0;
  double combined = 0.0;  // lambda * l2_term - anneal * entropy_term
  double epsilon = 0.0;
};

struct Regularizer {
  RegularizerValue value;
  Eigen::MatrixXd gradient;  // P x M
};

/// Weight decay plus annealed repulsion, with its gradient per particle.
Regularizer regularizer(const ParticleEnsemble& ens, double lambda, double anneal, double epsilon);

struct DiversityDiagnostics {
  double param_distance = 0.0;  // mean pairwise Euclidean distance
  double disagreement = 0.0;    // mean pairwise fraction of differing argmax classes
};

DiversityDiagnostics diversity_diagnostics(const ParticleEnsemble& ens, const Eigen::MatrixXd& inputs);

/// Versioned text checkpoint; numbers are written in shortest round-trip form.
std::string to_checkpoint_text(const ParticleEnsemble& ens);
ParticleEnsemble parse_checkpoint(const std::string& text, const std::string& source);
void save_checkpoint(const ParticleEnsemble& ens, const std::string& path);
ParticleEnsemble load_checkpoint(const std::string& path);

}  // namespace lbd
