// SPDX-License-Identifier: Apache-2.0
#include "psl/denoiser.hpp"

#include <cmath>
#include <numbers>

#include "psl/digest.hpp"
#include "psl/error.hpp"
#include "psl/random.hpp"

namespace psl {

std::string_view arch_name(Arch arch) { return arch == Arch::model_a ? "model_a" : "model_b"; }

Arch parse_arch(std::string_view name) {
  if (name == "model_a") return Arch::model_a;
  if (name == "model_b") return Arch::model_b;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

std::vector<std::size_t> arch_widths(Arch arch) {
  if (arch == Arch::model_a) return {64, 64};
  return {128, 128, 128};
}

Tensor timestep_embedding(std::span<const int> timesteps, int num_timesteps, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> out(timesteps.size() * dim, 0.0);
  for (std::size_t r = 0; r < timesteps.size(); ++r) {
    const double s = 1000.0 * static_cast<double>(timesteps[r]) / static_cast<double>(num_timesteps);
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
      out[r * dim + k] = std::sin(freq * s);
      out[r * dim + half + k] = std::cos(freq * s);
    }
  }
  return Tensor::from({timesteps.size(), dim}, std::move(out));
}

DenoiserModel DenoiserModel::build(Arch arch, const PromptEncoder& encoder, int num_timesteps, std::uint64_t seed) {
  if (num_timesteps < 1) throw ConfigError("denoiser needs a positive timestep count");
  DenoiserModel m;
  m.arch_ = arch;
  m.widths_ = arch_widths(arch);
  m.cond_dim_ = encoder.dim();
  m.num_timesteps_ = num_timesteps;
  m.encoder_hash_ = encoder.hash();

  Rng rng = make_rng(seed, 0x5eed);
  std::size_t fan_in = m.input_dim();
  auto add_layer = [&](std::size_t fan_out, bool zero) {
    std::vector<double> w(fan_in * fan_out, 0.0);
    if (!zero) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& v : w) v = uniform(rng, -bound, bound);
    }
    Tensor wt = Tensor::from({fan_in, fan_out}, std::move(w), true);
    wt.set_name("layer" + std::to_string(m.params_.size() / 2) + ".weight");
    Tensor bt = Tensor::zeros({fan_out}, true);
    bt.set_name("layer" + std::to_string(m.params_.size() / 2) + ".bias");
    m.params_.push_back(std::move(wt));
    m.params_.push_back(std::move(bt));
    fan_in = fan_out;
  };
  for (auto width : m.widths_) add_layer(width, false);
  add_layer(kDataDim, true);
  return m;
}

DenoiserModel DenoiserModel::from_parameters(Arch arch, std::size_t cond_dim, int num_timesteps,
                                             EncoderHash encoder_hash, std::vector<Tensor> params, bool frozen) {
  DenoiserModel m;
  m.arch_ = arch;
  m.widths_ = arch_widths(arch);
  m.cond_dim_ = cond_dim;
  m.num_timesteps_ = num_timesteps;
  m.encoder_hash_ = encoder_hash;
  if (params.size() != 2 * (m.widths_.size() + 1))
    throw ConfigError("parameter count does not match architecture " + std::string(arch_name(arch)));
  std::size_t fan_in = m.input_dim();
  for (std::size_t l = 0; l <= m.widths_.size(); ++l) {
    const std::size_t fan_out = l < m.widths_.size() ? m.widths_[l] : kDataDim;
    if (params[2 * l].shape() != Shape{fan_in, fan_out} || params[2 * l + 1].shape() != Shape{fan_out})
      throw DimensionError("layer " + std::to_string(l) + " parameters have unexpected shape");
    params[2 * l].set_name("layer" + std::to_string(l) + ".weight");
    params[2 * l + 1].set_name("layer" + std::to_string(l) + ".bias");
    fan_in = fan_out;
  }
  m.params_ = std::move(params);
  m.frozen_ = false;
  for (auto& p : m.params_) p.set_requires_grad(true);
  if (frozen) m.freeze();
  return m;
}

void DenoiserModel::freeze() {
  frozen_ = true;
  for (auto& p : params_) {
    p.set_requires_grad(false);
    p.clear_grad();
  }
}

std::span<Tensor> DenoiserModel::trainable_parameters() {
  if (frozen_) throw ContractError("model is frozen; parameter updates are rejected");
  return params_;
}

Tensor DenoiserModel::predict_eps(const Tensor& z_t, std::span<const int> timesteps, const Tensor& cond) const {
  if (z_t.rank() != 2 || z_t.cols() != kDataDim)
    throw DimensionError("predict_eps: z_t must be [B, 2], got " + shape_to_string(z_t.shape()));
  const std::size_t batch = z_t.rows();
  if (cond.rank() != 2 || cond.cols() != cond_dim_)
    throw ContractError("predict_eps: conditioning shape " + shape_to_string(cond.shape()) +
                        " does not match encoder dimension " + std::to_string(cond_dim_));
  if (cond.rows() != batch && cond.rows() != 1)
    throw DimensionError("predict_eps: conditioning rows " + std::to_string(cond.rows()) + " vs batch " +
                         std::to_string(batch));
  if (timesteps.size() != batch && timesteps.size() != 1)
    throw DimensionError("predict_eps: " + std::to_string(timesteps.size()) + " timesteps for batch " +
                         std::to_string(batch));
  for (int t : timesteps)
    if (t < 1 || t > num_timesteps_)
      throw ContractError("predict_eps: timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(num_timesteps_) + "]");

  std::vector<int> ts(timesteps.begin(), timesteps.end());
  if (ts.size() == 1 && batch > 1) ts.assign(batch, timesteps[0]);
  Tensor temb = timestep_embedding(ts, num_timesteps_, kTimeEmbedDim);
  Tensor c = cond.rows() == batch ? cond : broadcast(cond, batch);

  Tensor h = concat({z_t, temb, c});
  const std::size_t layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = add(matmul(h, params_[2 * l]), broadcast(params_[2 * l + 1], batch));
    if (l + 1 < layers) h = silu(h);
  }
  return h;
}

Tensor DenoiserModel::predict_eps(const Tensor& z_t, int t, const Tensor& cond) const {
  const int ts[1] = {t};
  return predict_eps(z_t, ts, cond);
}

std::string DenoiserModel::parameter_digest() const {
  Sha256 h;
  for (const auto& p : params_) h.update(p.values());
  return h.hex_digest();
}

std::size_t count_params(const DenoiserModel& model) {
  std::size_t n = 0;
  for (const auto& p : model.parameters()) n += p.numel();
  return n;
}

}  // namespace psl
