// The guided residual assembled in one piece, for comparison against the
// two-term split computed by lsds_gradient.
#pragma once

#include "augment.hpp"
#include "generator.hpp"
#include "guidance.hpp"
#include "loss.hpp"

namespace oracle {

// w(t)(eps_guided - eps) pushed through the augmentation and generator.
inline pxd::LogitField monolithic_gradient(const pxd::LogitField& theta, const pxd::Palette& p, pxd::ScoreOracle& o,
                                           const pxd::StepDraws& d, double s) {
  using namespace pxd;
  const ProbField w = d.gumbel ? d.gumbel->weights : softmax_probs(theta);
  const Image x = render_blend(w, p);
  const Image xa = apply(d.augment, x);
  const int t = d.t;
  Image xt = xa;
  for (std::size_t i = 0; i < xt.size(); ++i)
    xt.data[i] = o.schedule().alpha[t] * xa.data[i] + o.schedule().sigma[t] * d.eps.data[i];
  const Image guided = cfg_combine(o.predict_noise(xt, true, t), o.predict_noise(xt, false, t), s);
  Image r = guided;
  for (std::size_t i = 0; i < r.size(); ++i) r.data[i] = o.schedule().weight[t] * (guided.data[i] - d.eps.data[i]);
  return backprop_to_logits(vjp(d.augment, r, x.height, x.width), w, p, d.gumbel ? 1.0 / d.gumbel->tau : 1.0);
}

}  // namespace oracle
