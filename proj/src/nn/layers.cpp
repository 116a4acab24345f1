#include "cascade/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace cascade::nn {

Var ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw std::logic_error("duplicate parameter " + name);
  Var v = parameter(std::move(init));
  items_.emplace_back(name, v);
  return v;
}

Var ParamStore::get(const std::string& name) const {
  for (const auto& [n, v] : items_)
    if (n == name) return v;
  throw std::out_of_range("unknown parameter " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& item : items_)
    if (item.first == name) return true;
  return false;
}

std::size_t ParamStore::count() const {
  std::size_t total = 0;
  for (const auto& item : items_) total += item.second->value.size();
  return total;
}

void ParamStore::zero_grad() {
  for (auto& item : items_) item.second->grad = Tensor();
}

namespace {

Tensor uniform_init(Shape s, int fan_in, Rng& rng) {
  Tensor t(s);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.vec()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k,
               int stride, Rng& rng, bool zero_init)
    : geom_{stride, k / 2}, cout_(cout) {
  const Shape ws{cout, cin, k, k};
  weight_ = ps.add(name + ".weight",
                   zero_init ? Tensor(ws) : uniform_init(ws, cin * k * k, rng));
  bias_ = ps.add(name + ".bias", Tensor({cout, 1, 1, 1}));
}

Var Conv2d::operator()(const Var& x) const {
  return conv2d(x, weight_, bias_, geom_);
}

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
               bool zero_init) {
  const Shape ws{out, in, 1, 1};
  weight_ = ps.add(name + ".weight",
                   zero_init ? Tensor(ws) : uniform_init(ws, in, rng));
  bias_ = ps.add(name + ".bias", Tensor({out, 1, 1, 1}));
}

Var Linear::operator()(const Var& x) const { return linear(x, weight_, bias_); }

int default_groups(int channels) {
  for (int g = 8; g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

GroupNorm::GroupNorm(ParamStore& ps, const std::string& name, int channels,
                     bool affine)
    : groups_(default_groups(channels)) {
  if (affine) {
    gamma_ = ps.add(name + ".gamma", Tensor({channels, 1, 1, 1}, 1.0f));
    beta_ = ps.add(name + ".beta", Tensor({channels, 1, 1, 1}));
  }
}

Var GroupNorm::operator()(const Var& x) const {
  return group_norm(x, groups_, gamma_, beta_);
}

ResBlock::ResBlock(ParamStore& ps, const std::string& name, int cin, int cout,
                   int emb_dim, Rng& rng)
    : norm1_(ps, name + ".norm1", cin),
      norm2_(ps, name + ".norm2", cout),
      conv1_(ps, name + ".conv1", cin, cout, 3, 1, rng),
      conv2_(ps, name + ".conv2", cout, cout, 3, 1, rng),
      has_skip_(cin != cout) {
  if (emb_dim > 0) emb_proj_ = Linear(ps, name + ".emb", emb_dim, cout, rng);
  if (has_skip_) skip_ = Conv2d(ps, name + ".skip", cin, cout, 1, 1, rng);
}

Var ResBlock::operator()(const Var& x, const Var& emb) const {
  Var h = conv1_(silu(norm1_(x)));
  if (emb) h = modulate(h, nullptr, emb_proj_(silu(emb)));
  h = conv2_(silu(norm2_(h)));
  return add(has_skip_ ? skip_(x) : x, h);
}

CrossAttentionBlock::CrossAttentionBlock(ParamStore& ps, const std::string& name,
                                         int channels, int context_dim, Rng& rng)
    : norm_(ps, name + ".norm", channels) {
  auto proj = [&](const std::string& n, int in) {
    return ps.add(name + "." + n, uniform_init({channels, in, 1, 1}, in, rng));
  };
  wq_ = proj("wq", channels);
  wk_ = proj("wk", context_dim);
  wv_ = proj("wv", context_dim);
  wo_ = proj("wo", channels);
  bo_ = ps.add(name + ".bo", Tensor({channels, 1, 1, 1}));
}

Var CrossAttentionBlock::operator()(const Var& x, const Var& context) const {
  return add(x, cross_attention(norm_(x), context, wq_, wk_, wv_, wo_, bo_));
}

Adam::Adam(const ParamStore& ps, Options opt) : ps_(ps), opt_(opt) {
  for (const auto& item : ps_.items()) {
    m_.emplace_back(item.second->value.size(), 0.0f);
    v_.emplace_back(item.second->value.size(), 0.0f);
  }
}

double Adam::step(float lr_scale) {
  double sq = 0.0;
  for (const auto& item : ps_.items()) {
    const Tensor& g = item.second->grad;
    for (std::size_t i = 0; i < g.size(); ++i) sq += static_cast<double>(g[i]) * g[i];
  }
  const double norm = std::sqrt(sq);
  float clip = 1.0f;
  if (opt_.clip_norm > 0.0f && norm > opt_.clip_norm) {
    clip = static_cast<float>(opt_.clip_norm / norm);
  }
  ++t_;
  const float bc1 = 1.0f - std::pow(opt_.beta1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(opt_.beta2, static_cast<float>(t_));
  const float lr = opt_.lr * lr_scale;
  const auto& items = ps_.items();
  for (std::size_t p = 0; p < items.size(); ++p) {
    Node& node = *items[p].second;
    if (node.grad.empty()) continue;
    float* w = node.value.data();
    const float* g = node.grad.data();
    float* m = m_[p].data();
    float* v = v_[p].data();
    const std::size_t n = node.value.size();
    for (std::size_t i = 0; i < n; ++i) {
      const float gi = g[i] * clip;
      m[i] = opt_.beta1 * m[i] + (1.0f - opt_.beta1) * gi;
      v[i] = opt_.beta2 * v[i] + (1.0f - opt_.beta2) * gi * gi;
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt_.eps);
    }
  }
  return norm;
}

}  // namespace cascade::nn
