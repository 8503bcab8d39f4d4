#include "invdec/model_check.hpp"

#include <algorithm>
#include <random>

#include "invdec/ad_ops.hpp"
#include "invdec/gradcheck.hpp"

namespace invdec::model {

ModelConfig gradcheck_config() {
  ModelConfig c;
  c.variates = 3;
  c.lookback = 16;
  c.patch_len = 4;
  c.stride = 4;
  c.d_model = 8;
  c.heads = 2;
  c.dec_heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.horizon = 4;
  c.lambda = 0.7;
  return c;
}

GradcheckReport check_gradients(const ModelConfig& cfg, std::uint64_t seed, double h,
                                double abs_floor, double rel_tol) {
  RngStreams rng(seed);
  ModelParams params = init_params(cfg, rng);
  auto& draw = rng.stream("gradcheck");
  std::normal_distribution<double> wide(0.0, 0.4);
  for (auto& p : params.store) {
    const bool gain = p.name.find(".gain") != std::string::npos;
    for (double& v : p.value.data()) v = (gain ? 1.0 : 0.0) + wide(draw);
  }
  std::normal_distribution<double> unit(0.0, 1.0);
  Tensor x({2, cfg.lookback, cfg.variates});
  Tensor y({2, cfg.horizon, cfg.variates});
  for (double& v : x.data()) v = unit(draw);
  for (double& v : y.data()) v = unit(draw);

  ForwardOptions opts;
  opts.record_trace = false;
  auto loss_value = [&] {
    Tape tape;
    Var pred = forward(tape, x, params, cfg, opts).prediction;
    return ad::mse(pred, tape.constant(y)).value()[0];
  };

  params.store.zero_grads();
  {
    Tape tape;
    Var pred = forward(tape, x, params, cfg, opts).prediction;
    tape.backward(ad::mse(pred, tape.constant(y)));
  }

  GradcheckReport report;
  for (auto& p : params.store) {
    const Tensor analytic = p.grad;
    const Tensor numeric = finite_diff_grad(loss_value, p, h);
    const double err = max_grad_rel_error(analytic, numeric, abs_floor, rel_tol);
    const std::string group = param_group(p.name);
    auto it = report.group_error.find(group);
    if (it == report.group_error.end() || err > it->second) {
      report.group_error[group] = err;
      report.worst_param[group] = p.name;
    }
    report.max_error = std::max(report.max_error, err);
  }
  return report;
}

}  // namespace invdec::model
