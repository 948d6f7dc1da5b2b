#include "lbd/net.hpp"

#include <random>
#include <string>

namespace lbd {

Index NetShape::layer_in(Index layer) const {
  return layer == 0 ? input_dim : hidden_dims[static_cast<std::size_t>(layer - 1)];
}

Index NetShape::layer_out(Index layer) const {
  return layer + 1 == num_layers() ? num_classes : hidden_dims[static_cast<std::size_t>(layer)];
}

Index NetShape::layer_offset(Index layer) const {
  Index offset = 0;
  for (Index l = 0; l < layer; ++l) offset += layer_out(l) * (layer_in(l) + 1);
  return offset;
}

Index NetShape::param_count() const { return layer_offset(num_layers()); }

void NetShape::validate() const {
  if (input_dim <= 0) throw InputError("input_dim must be positive");
  for (const Index h : hidden_dims) {
    if (h <= 0) throw InputError("hidden layer sizes must be positive");
  }
  if (num_classes < 2) throw InputError("num_classes must be at least 2");
}

ParamVector init_params(const NetShape& shape, std::uint64_t seed) {
  shape.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1a17u};
  std::mt19937_64 rng(seq);
  ParamVector params(shape.param_count());
  for (Index l = 0; l < shape.num_layers(); ++l) {
    const Index in = shape.layer_in(l);
    const Index count = shape.layer_out(l) * (in + 1);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const Index off = shape.layer_offset(l);
    for (Index i = 0; i < count; ++i) params[off + i] = dist(rng);
  }
  return params;
}

}  // namespace lbd
