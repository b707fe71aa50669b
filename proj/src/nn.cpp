#include "tcvsr/nn.hpp"

#include <cmath>

namespace tcvsr {

template <typename T>
Var<T> ParamStore<T>::create(const std::string& name, Tensor<T> init, ParamGroup group) {
  if (index_.count(name)) throw StateError("duplicate parameter name " + name);
  Var<T> v(std::move(init), true);
  index_[name] = entries_.size();
  entries_.push_back({name, v, group});
  return v;
}

template <typename T>
const typename ParamStore<T>::Entry* ParamStore<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

template <typename T>
std::int64_t ParamStore<T>::count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.var.size();
  return n;
}

template <typename T>
std::int64_t ParamStore<T>::count(ParamGroup group) const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.group == group ? e.var.size() : 0;
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

template <typename T>
Var<T> resblock(const Var<T>& x, const Conv<T>& c1, const Conv<T>& c2) {
  if (x.rank() != 4 || x.dim(1) != c1.in_channels() || c2.out_channels() != x.dim(1)) {
    throw ShapeError("resblock: channel mismatch for input " + shape_str(x.shape()));
  }
  return add(x, c2(lrelu(c1(x))));
}

template <typename T>
Tensor<T> Builder<T>::uniform(Shape shape, double bound) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng_.uniform(-bound, bound));
  return t;
}

template <typename T>
Conv<T> Builder<T>::conv(const std::string& name, std::int64_t cin, std::int64_t cout, int k, int stride, int pad,
                         bool zero) {
  Conv<T> c;
  const Shape ws{cout, cin, k, k};
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
  c.weight = store_.create(qualify(name) + ".weight", zero ? Tensor<T>(ws) : uniform(ws, bound), group_);
  c.bias = store_.create(qualify(name) + ".bias", Tensor<T>({cout}), group_);
  c.stride = stride;
  c.pad = pad < 0 ? k / 2 : pad;
  return c;
}

template <typename T>
ConvT<T> Builder<T>::conv_t(const std::string& name, std::int64_t cin, std::int64_t cout, int k, int stride,
                            bool zero) {
  ConvT<T> c;
  // Weight is stored Cout x Cin like a forward conv; each input pixel feeds
  // k*k/stride^2 outputs per output channel.
  const Shape ws{cout, cin, k, k};
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k / (stride * stride)));
  c.weight = store_.create(qualify(name) + ".weight", zero ? Tensor<T>(ws) : uniform(ws, bound), group_);
  c.bias = store_.create(qualify(name) + ".bias", Tensor<T>({cout}), group_);
  c.stride = stride;
  c.pad = 0;
  return c;
}

template <typename T>
ResBlock<T> Builder<T>::resblock(const std::string& name, std::int64_t channels) {
  ResBlock<T> b;
  b.c1 = conv(name + ".conv1", channels, channels, 3);
  b.c2 = conv(name + ".conv2", channels, channels, 3, 1, -1, true);
  return b;
}

template <typename T>
std::vector<ResBlock<T>> Builder<T>::res_stack(const std::string& name, std::int64_t channels, int count) {
  std::vector<ResBlock<T>> out;
  for (int i = 0; i < count; ++i) out.push_back(resblock(name + "." + std::to_string(i), channels));
  return out;
}

template <typename T>
Var<T> Builder<T>::matrix(const std::string& name, std::int64_t rows, std::int64_t cols, bool zero) {
  const Shape s{rows, cols};
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  return store_.create(qualify(name), zero ? Tensor<T>(s) : uniform(s, bound), group_);
}

template <typename T>
Var<T> Builder<T>::scalar(const std::string& name, T value) {
  return store_.create(qualify(name), Tensor<T>({1}, value), group_);
}

template <typename T>
void randomize_all(ParamStore<T>& store, Rng& rng, double scale) {
  for (auto& e : store.entries()) {
    for (auto& v : e.var.mutable_value().data()) v = static_cast<T>(rng.uniform(-scale, scale));
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Builder<float>;
template class Builder<double>;
template Var<float> resblock(const Var<float>&, const Conv<float>&, const Conv<float>&);
template Var<double> resblock(const Var<double>&, const Conv<double>&, const Conv<double>&);
template void randomize_all(ParamStore<float>&, Rng&, double);
template void randomize_all(ParamStore<double>&, Rng&, double);

}  // namespace tcvsr
