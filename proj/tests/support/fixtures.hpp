// SPDX-License-Identifier: Apache-2.0
//
// Small trained models shared by the tests of one executable.
#pragma once

#include "psl/dataset.hpp"
#include "psl/denoiser.hpp"
#include "psl/encoder.hpp"
#include "psl/schedule.hpp"
#include "psl/train_base.hpp"

namespace psl::check {

struct World {
  ToyDataset data;
  PromptEncoder encoder;
  NoiseSchedule sched;
  DenoiserModel model_a;
};

inline World make_world(std::size_t iterations, std::size_t batch) {
  World w{make_toy_dataset(), PromptEncoder::build(toy_vocabulary(32), 7), default_schedule(), {}};
  w.model_a = DenoiserModel::build(Arch::model_a, w.encoder, w.sched.steps(), 1);
  BaseTrainConfig c;
  c.iterations = iterations;
  c.batch_size = batch;
  train_base(w.model_a, w.data, w.sched, w.encoder, c);
  return w;
}

/// A quickly trained model_a: good enough for the conditional structure to show.
inline const World& small_world() {
  static const World w = make_world(1500, 128);
  return w;
}

}  // namespace psl::check
