#include "nacrf/adam.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace nacrf {

template <typename S>
AdamState<S> make_adam_state(const EncoderConfig& config) {
  return AdamState<S>{zero_params<S>(config), zero_params<S>(config), 0};
}

template <typename S>
void adam_update(ModelParams<S>& params, const ModelParams<S>& grads, AdamState<S>& state, const AdamConfig& config) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const S lr = static_cast<S>(config.learning_rate);
  const S b1 = static_cast<S>(config.beta1);
  const S b2 = static_cast<S>(config.beta2);
  const S c1 = static_cast<S>(1.0 / (1.0 - std::pow(config.beta1, t)));
  const S c2 = static_cast<S>(1.0 / (1.0 - std::pow(config.beta2, t)));
  const S eps = static_cast<S>(config.epsilon);

  std::vector<Mat<S>*> g_list, m_list, v_list;
  const_cast<ModelParams<S>&>(grads).for_each([&](const std::string&, Mat<S>& x) { g_list.push_back(&x); });
  state.m.for_each([&](const std::string&, Mat<S>& x) { m_list.push_back(&x); });
  state.v.for_each([&](const std::string&, Mat<S>& x) { v_list.push_back(&x); });
  std::size_t i = 0;
  params.for_each([&](const std::string&, Mat<S>& p) {
    const auto g = g_list[i]->array();
    auto m = m_list[i]->array();
    auto v = v_list[i]->array();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.square();
    p.array() -= lr * (m * c1) / ((v * c2).sqrt() + eps);
    ++i;
  });
}

template <typename S>
double global_norm(const ModelParams<S>& grads) {
  double sq = 0;
  grads.for_each([&](const std::string&, const Mat<S>& g) { sq += g.template cast<double>().squaredNorm(); });
  return std::sqrt(sq);
}

template <typename S>
double clip_global_norm(ModelParams<S>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0 && norm > max_norm) {
    const S scale = static_cast<S>(max_norm / norm);
    grads.for_each([&](const std::string&, Mat<S>& g) { g *= scale; });
  }
  return norm;
}

template AdamState<float> make_adam_state<float>(const EncoderConfig&);
template AdamState<double> make_adam_state<double>(const EncoderConfig&);
template void adam_update<float>(ModelParams<float>&, const ModelParams<float>&, AdamState<float>&, const AdamConfig&);
template void adam_update<double>(ModelParams<double>&, const ModelParams<double>&, AdamState<double>&,
                                  const AdamConfig&);
template double global_norm<float>(const ModelParams<float>&);
template double global_norm<double>(const ModelParams<double>&);
template double clip_global_norm<float>(ModelParams<float>&, double);
template double clip_global_norm<double>(ModelParams<double>&, double);

}  // namespace nacrf
