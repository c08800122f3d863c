#include "mono3d/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mono3d {

template <typename S>
Var<S> ParameterSet<S>::add(const std::string& name, Planar<S> init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter: " + name);
  auto v = Var<S>::leaf(std::move(init));
  entries_.emplace_back(name, v);
  return v;
}

template <typename S>
const Var<S>& ParameterSet<S>::get(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  throw std::out_of_range("no parameter named " + name);
}

template <typename S>
bool ParameterSet<S>::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

template <typename S>
std::size_t ParameterSet<S>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_) n += std::size_t(v.value().size());
  return n;
}

template <typename S>
void ParameterSet<S>::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

template <typename S>
Conv2d<S>::Conv2d(ParameterSet<S>& params, const std::string& name, int in_channels,
                  int out_channels, int k, int s, Rng& rng, Init init)
    : kernel(k), stride(s) {
  Planar<S> w(out_channels, in_channels, k * k);
  if (init != Init::kZero) {
    const double fan_in = double(in_channels) * k * k;
    const double slope = kLeakySlope;
    double bound = std::sqrt(6.0 / ((1.0 + slope * slope) * fan_in));
    if (init == Init::kHeScaled) bound *= 0.1;
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = S(dist(rng));
  }
  weight = params.add(name + ".weight", std::move(w));
  bias = params.add(name + ".bias", Planar<S>(out_channels, 1, 1));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;

}  // namespace mono3d
