#include "tcvsr/flow.hpp"

#include <cmath>

namespace tcvsr {

template <typename T>
FlowNet<T> FlowNet<T>::build(Builder<T> b, int levels, int channels) {
  if (levels < 1) throw ConfigError("flow pyramid needs at least one level");
  if (channels < 2) throw ConfigError("flow channels must be >= 2");
  FlowNet net;
  net.levels = levels;
  const std::int64_t c = channels;
  for (int l = 0; l < levels; ++l) {
    auto lb = b.sub("level" + std::to_string(l));
    std::vector<Conv<T>> s;
    s.push_back(lb.conv("conv0", 8, c, 3));
    s.push_back(lb.conv("conv1", c, c, 3));
    s.push_back(lb.conv("conv2", c, c, 3));
    s.push_back(lb.conv("conv3", c, c / 2, 3));
    s.push_back(lb.conv("conv4", c / 2, 2, 3, 1, -1, true));
    net.stacks.push_back(std::move(s));
  }
  return net;
}

template <typename T>
Var<T> FlowNet<T>::estimate(const Var<T>& ref, const Var<T>& src) const {
  return estimate_levels(ref, src).back();
}

template <typename T>
std::vector<Var<T>> FlowNet<T>::estimate_levels(const Var<T>& ref, const Var<T>& src) const {
  if (ref.shape() != src.shape()) {
    throw ShapeError("estimate_flow: frame shapes differ " + shape_str(ref.shape()) + " vs " + shape_str(src.shape()));
  }
  if (ref.rank() != 4) throw ShapeError("estimate_flow: frames must be B x C x H x W");
  const std::int64_t div = std::int64_t{1} << (levels - 1);
  if (ref.dim(2) % div || ref.dim(3) % div) {
    throw ShapeError("estimate_flow: frame size " + shape_str(ref.shape()) + " not divisible by " +
                     std::to_string(div));
  }
  std::vector<Var<T>> refs{ref}, srcs{src};
  for (int l = 1; l < levels; ++l) {
    refs.push_back(avg_pool2x(refs.back()));
    srcs.push_back(avg_pool2x(srcs.back()));
  }
  Var<T> flow;
  std::vector<Var<T>> out;
  for (int l = 0; l < levels; ++l) {
    const auto& r = refs[levels - 1 - l];
    const auto& s = srcs[levels - 1 - l];
    if (!flow.defined()) {
      flow = constant(Tensor<T>({r.dim(0), 2, r.dim(2), r.dim(3)}));
    } else {
      flow = scale(upsample2x(flow), T(2));
    }
    Var<T> h = concat<T>({r, warp(s, flow), flow}, 1);
    const auto& stack = stacks[l];
    for (std::size_t k = 0; k + 1 < stack.size(); ++k) h = lrelu(stack[k](h));
    flow = add(flow, stack.back()(h));
    out.push_back(flow);
  }
  return out;
}

template <typename T>
Alignment<T> align_bidirectional(const FlowNet<T>& net, const Var<T>& x_prev, const Var<T>& x_cur,
                                 const Var<T>& x_next) {
  Alignment<T> a;
  if (x_prev.defined()) {
    a.flow_prev = net.estimate(x_cur, x_prev);
    a.h_prev = warp(x_prev, a.flow_prev);
  }
  if (x_next.defined()) {
    a.flow_next = net.estimate(x_cur, x_next);
    a.h_next = warp(x_next, a.flow_next);
  }
  return a;
}

double endpoint_error(const Tensor<float>& flow, const Tensor<float>& truth, int margin) {
  if (flow.shape() != truth.shape() || flow.rank() != 4 || flow.dim(1) != 2) {
    throw ShapeError("endpoint_error: fields must share a B x 2 x H x W shape");
  }
  const std::int64_t B = flow.dim(0), H = flow.dim(2), W = flow.dim(3);
  if (2 * margin >= H || 2 * margin >= W) throw ShapeError("endpoint_error: margin leaves no interior pixels");
  double acc = 0;
  std::int64_t n = 0;
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t y = margin; y < H - margin; ++y)
      for (std::int64_t x = margin; x < W - margin; ++x) {
        const double dx = static_cast<double>(flow(b, 0, y, x)) - truth(b, 0, y, x);
        const double dy = static_cast<double>(flow(b, 1, y, x)) - truth(b, 1, y, x);
        acc += std::sqrt(dx * dx + dy * dy);
        ++n;
      }
  return acc / static_cast<double>(n);
}

template struct FlowNet<float>;
template struct FlowNet<double>;
template Alignment<float> align_bidirectional(const FlowNet<float>&, const Var<float>&, const Var<float>&,
                                              const Var<float>&);
template Alignment<double> align_bidirectional(const FlowNet<double>&, const Var<double>&, const Var<double>&,
                                               const Var<double>&);

}  // namespace tcvsr
