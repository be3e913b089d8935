// SPDX-License-Identifier: Apache-2.0
#include "psl/sampler.hpp"

#include <string>

#include "psl/error.hpp"
#include "psl/random.hpp"

namespace psl {

SamplerKind parse_sampler(std::string_view name) {
  if (name == "ddim") return SamplerKind::ddim;
  if (name == "ddpm") return SamplerKind::ddpm;
  throw ConfigError("unknown sampler '" + std::string(name) + "'");
}

std::vector<Point> sample(const DenoiserModel& model, const SampleRequest& request, const PromptEncoder& encoder,
                          const NoiseSchedule& sched) {
  if (!model.frozen()) throw ContractError("sample: model must be frozen");
  if (model.encoder_hash() != encoder.hash())
    throw CompatibilityError("sample: model was trained against a different prompt encoder");
  if (request.n_samples == 0) throw ConfigError("sample: n_samples must be positive");
  if (request.cfg_scale < 0.0) throw ConfigError("sample: cfg scale must be nonnegative");
  if (request.sampler == SamplerKind::ddpm && request.steps != sched.steps())
    throw ConfigError("sample: the DDPM sampler runs all " + std::to_string(sched.steps()) + " schedule steps");

  const std::size_t n = request.n_samples;
  const auto cond_values = encoder.encode(request.prompt, request.overrides);
  Tensor cond = Tensor::row(cond_values);
  Tensor uncond = Tensor::row(encoder.encode(PromptSpec{}));

  std::vector<Rng> streams;
  streams.reserve(n);
  for (std::size_t i = 0; i < n; ++i) streams.push_back(make_rng(request.seed, i));
  auto draw = [&] {
    std::vector<double> v(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
      v[2 * i] = standard_normal(streams[i]);
      v[2 * i + 1] = standard_normal(streams[i]);
    }
    return Tensor::from({n, 2}, std::move(v));
  };

  Tensor z = draw();
  const auto ts = sampling_timesteps(request.steps, sched);
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    Tensor eps_c = model.predict_eps(z, t, cond);
    Tensor eps_u = model.predict_eps(z, t, uncond);
    Tensor eps = cfg_combine(eps_u, eps_c, request.cfg_scale);
    if (request.sampler == SamplerKind::ddim) {
      const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
      z = ddim_step(z, eps, t, t_prev, sched);
    } else {
      z = reverse_step(z, eps, t, sched, t > 1 ? draw() : Tensor::zeros({n, 2}));
    }
  }
  return tensor_points(z);
}

}  // namespace psl
