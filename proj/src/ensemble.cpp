#include "lbd/ensemble.hpp"

#include <cmath>
#include <mutex>
#include <sstream>

#include "lbd/errors.hpp"
#include "lbd/text_io.hpp"

namespace lbd {

namespace {

constexpr std::string_view kCheckpointMagic = "lbd-ensemble";
constexpr int kCheckpointVersion = 1;

void warn_single_particle() {
  static std::once_flag once;
  std::call_once(once, [] { warn("entropy term is 0 for a single particle; repulsion has no effect"); });
}

void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0)) throw InputError("variance floor epsilon must be positive");
}

}  // namespace

ParticleEnsemble::ParticleEnsemble(NetShape shape, Eigen::MatrixXd particles, Eigen::VectorXd mixture_weights)
    : shape_(std::move(shape)), particles_(std::move(particles)), weights_(std::move(mixture_weights)) {
  shape_.validate();
  if (particles_.cols() < 1) throw InputError("ensemble needs at least one particle");
  if (particles_.rows() != shape_.param_count()) {
    throw InputError("particles have " + std::to_string(particles_.rows()) + " parameters, shape needs " +
                     std::to_string(shape_.param_count()));
  }
  if (!particles_.allFinite()) throw InputError("particles contain non-finite values");
  if (weights_.size() == 0) weights_ = Eigen::VectorXd::Constant(particles_.cols(), 1.0 / particles_.cols());
  if (weights_.size() != particles_.cols()) throw InputError("one mixture weight per particle required");
  if ((weights_.array() < 0.0).any() || std::abs(weights_.sum() - 1.0) > 1e-12) {
    throw InputError("mixture weights must be nonnegative and sum to 1");
  }
}

std::uint64_t particle_seed(std::uint64_t seed, Index j) {
  return seed + kParticleSeedStride * static_cast<std::uint64_t>(j);
}

ParticleEnsemble ParticleEnsemble::initialize(const NetShape& shape, Index num_particles, std::uint64_t seed) {
  shape.validate();
  if (num_particles < 1) throw InputError("ensemble needs at least one particle");
  Eigen::MatrixXd particles(shape.param_count(), num_particles);
  for (Index j = 0; j < num_particles; ++j) particles.col(j) = init_params(shape, particle_seed(seed, j));
  return ParticleEnsemble(shape, std::move(particles));
}

bool ParticleEnsemble::operator==(const ParticleEnsemble& other) const {
  return shape_ == other.shape_ && particles_.rows() == other.particles_.rows() &&
         particles_.cols() == other.particles_.cols() && particles_ == other.particles_ && weights_ == other.weights_;
}

Predictive predictive_logprobs(const ParticleEnsemble& ens, const Eigen::VectorXd& x) {
  if (x.size() != ens.shape().input_dim) {
    throw InputError("input has " + std::to_string(x.size()) + " features, expected " +
                     std::to_string(ens.shape().input_dim));
  }
  Predictive out;
  out.per_particle.resize(ens.size(), ens.shape().num_classes);
  out.mixture = Eigen::VectorXd::Zero(ens.shape().num_classes);
  for (Index j = 0; j < ens.size(); ++j) {
    out.per_particle.row(j) = forward_logprobs(ens.shape(), ens.particle(j), x).transpose();
    out.mixture += ens.mixture_weights()[j] * out.per_particle.row(j).array().exp().matrix().transpose();
  }
  return out;
}

BatchPredictive predictive_batch(const ParticleEnsemble& ens, const Eigen::MatrixXd& inputs) {
  BatchPredictive out;
  out.per_particle.reserve(static_cast<std::size_t>(ens.size()));
  out.mixture = Eigen::MatrixXd::Zero(inputs.rows(), ens.shape().num_classes);
  for (Index j = 0; j < ens.size(); ++j) {
    out.per_particle.push_back(forward_logprobs_batch(ens.shape(), ens.particle(j), inputs));
    out.mixture += ens.mixture_weights()[j] * out.per_particle.back().array().exp().matrix();
  }
  return out;
}

double l2_term(const ParticleEnsemble& ens) {
  return ens.particles().colwise().squaredNorm().sum() / static_cast<double>(ens.size());
}

namespace {

// Population variance per coordinate. Two-pass (mean of squared deviations)
// equals mean(theta^2) - mean(theta)^2 exactly in real arithmetic and avoids
// cancellation for large parameters.
Eigen::VectorXd coordinate_variance(const Eigen::MatrixXd& particles, Eigen::VectorXd& mean) {
  mean = particles.rowwise().mean();
  return (particles.colwise() - mean).array().square().rowwise().mean().matrix();
}

}  // namespace

double entropy_term(const ParticleEnsemble& ens, double epsilon) {
  check_epsilon(epsilon);
  if (ens.size() == 1) {
    warn_single_particle();
    return 0.0;
  }
  Eigen::VectorXd mean;
  const Eigen::VectorXd var = coordinate_variance(ens.particles(), mean);
  return 0.5 * (var.array() + epsilon).log().sum();
}

Eigen::MatrixXd entropy_gradient(const ParticleEnsemble& ens, double epsilon) {
  check_epsilon(epsilon);
  if (ens.size() == 1) return Eigen::MatrixXd::Zero(ens.param_count(), 1);
  Eigen::VectorXd mean;
  const Eigen::VectorXd var = coordinate_variance(ens.particles(), mean);
  const Eigen::VectorXd scale = (static_cast<double>(ens.size()) * (var.array() + epsilon)).inverse().matrix();
  return ((ens.particles().colwise() - mean).array().colwise() * scale.array()).matrix();
}

Regularizer regularizer(const ParticleEnsemble& ens, double lambda, double anneal, double epsilon) {
  if (!(lambda >= 0.0)) throw InputError("lambda must be >= 0");
  if (!(anneal >= 0.0 && anneal <= 1.0)) throw InputError("anneal weight must lie in [0, 1]");
  check_epsilon(epsilon);
  Regularizer reg;
  reg.value.epsilon = epsilon;
  reg.value.l2_term = l2_term(ens);
  reg.value.entropy_term = entropy_term(ens, epsilon);
  reg.value.combined = lambda * reg.value.l2_term - anneal * reg.value.entropy_term;
  reg.gradient = (2.0 * lambda / static_cast<double>(ens.size())) * ens.particles();
  if (anneal != 0.0 && ens.size() > 1) reg.gradient -= anneal * entropy_gradient(ens, epsilon);
  return reg;
}

DiversityDiagnostics diversity_diagnostics(const ParticleEnsemble& ens, const Eigen::MatrixXd& inputs) {
  DiversityDiagnostics diag;
  const Index m = ens.size();
  if (m < 2) return diag;
  std::vector<std::vector<Index>> argmax(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) {
    const Eigen::MatrixXd logp = forward_logprobs_batch(ens.shape(), ens.particle(j), inputs);
    auto& picks = argmax[static_cast<std::size_t>(j)];
    picks.resize(static_cast<std::size_t>(inputs.rows()));
    for (Index i = 0; i < inputs.rows(); ++i) logp.row(i).maxCoeff(&picks[static_cast<std::size_t>(i)]);
  }
  double distance = 0.0;
  double disagreement = 0.0;
  Index pairs = 0;
  for (Index a = 0; a < m; ++a) {
    for (Index b = a + 1; b < m; ++b, ++pairs) {
      distance += (ens.particle(a) - ens.particle(b)).norm();
      if (inputs.rows() > 0) {
        Index differ = 0;
        for (std::size_t i = 0; i < argmax[0].size(); ++i) {
          differ += argmax[static_cast<std::size_t>(a)][i] != argmax[static_cast<std::size_t>(b)][i];
        }
        disagreement += static_cast<double>(differ) / static_cast<double>(inputs.rows());
      }
    }
  }
  diag.param_distance = distance / static_cast<double>(pairs);
  diag.disagreement = disagreement / static_cast<double>(pairs);
  return diag;
}

std::string to_checkpoint_text(const ParticleEnsemble& ens) {
  std::string out;
  out += std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
  out += "input_dim " + std::to_string(ens.shape().input_dim) + "\n";
  out += "hidden";
  for (const Index h : ens.shape().hidden_dims) out += " " + std::to_string(h);
  out += "\nclasses " + std::to_string(ens.shape().num_classes) + "\n";
  out += "particles " + std::to_string(ens.size()) + "\n";
  out += "params " + std::to_string(ens.param_count()) + "\n";
  out += "weights";
  for (Index j = 0; j < ens.size(); ++j) out += " " + format_double(ens.mixture_weights()[j]);
  out += "\n";
  for (Index j = 0; j < ens.size(); ++j) {
    for (Index p = 0; p < ens.param_count(); ++p) {
      if (p) out += ' ';
      out += format_double(ens.particles()(p, j));
    }
    out += '\n';
  }
  return out;
}

ParticleEnsemble parse_checkpoint(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next_fields = [&](std::string_view key) {
    if (!std::getline(in, line)) throw ParseError(source, line_no + 1, "unexpected end of checkpoint");
    ++line_no;
    std::vector<std::string_view> fields;
    for (const auto f : split(trim(line), ' ')) {
      if (!f.empty()) fields.push_back(f);
    }
    if (!key.empty() && (fields.empty() || fields.front() != key)) {
      throw ParseError(source, line_no, "expected '" + std::string(key) + "'");
    }
    return fields;
  };
  auto as_index = [&](std::string_view token) {
    try {
      return static_cast<Index>(parse_integer(token));
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, line_no, e.what());
    }
  };
  auto as_double = [&](std::string_view token) {
    try {
      return parse_double(token);
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, line_no, e.what());
    }
  };

  const auto header = next_fields(kCheckpointMagic);
  if (header.size() != 2 || as_index(header[1]) != kCheckpointVersion) {
    throw ParseError(source, line_no, "unsupported checkpoint version");
  }
  NetShape shape;
  auto fields = next_fields("input_dim");
  if (fields.size() != 2) throw ParseError(source, line_no, "malformed input_dim");
  shape.input_dim = as_index(fields[1]);
  fields = next_fields("hidden");
  for (std::size_t i = 1; i < fields.size(); ++i) shape.hidden_dims.push_back(as_index(fields[i]));
  fields = next_fields("classes");
  if (fields.size() != 2) throw ParseError(source, line_no, "malformed classes");
  shape.num_classes = as_index(fields[1]);
  fields = next_fields("particles");
  if (fields.size() != 2) throw ParseError(source, line_no, "malformed particles");
  const Index m = as_index(fields[1]);
  fields = next_fields("params");
  if (fields.size() != 2) throw ParseError(source, line_no, "malformed params");
  const Index p = as_index(fields[1]);
  shape.validate();
  if (m < 1 || p != shape.param_count()) throw ParseError(source, line_no, "parameter count does not match shape");
  fields = next_fields("weights");
  if (static_cast<Index>(fields.size()) != m + 1) throw ParseError(source, line_no, "expected one weight per particle");
  Eigen::VectorXd weights(m);
  for (Index j = 0; j < m; ++j) weights[j] = as_double(fields[static_cast<std::size_t>(j + 1)]);
  Eigen::MatrixXd particles(p, m);
  for (Index j = 0; j < m; ++j) {
    fields = next_fields("");
    if (static_cast<Index>(fields.size()) != p) throw ParseError(source, line_no, "particle row has wrong length");
    for (Index k = 0; k < p; ++k) particles(k, j) = as_double(fields[static_cast<std::size_t>(k)]);
  }
  return ParticleEnsemble(std::move(shape), std::move(particles), std::move(weights));
}

void save_checkpoint(const ParticleEnsemble& ens, const std::string& path) {
  write_file(path, to_checkpoint_text(ens));
}

ParticleEnsemble load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path), path); }

}  // namespace lbd
