#include "oko/model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "oko/errors.hpp"

namespace oko {

namespace {

DenseLayer zero_layer(std::size_t in, std::size_t out) {
  return DenseLayer{in, out, Vec(in * out, 0.0), Vec(out, 0.0)};
}

DenseLayer he_layer(std::size_t in, std::size_t out, RngStream& rng) {
  DenseLayer l = zero_layer(in, out);
  const double sd = std::sqrt(2.0 / static_cast<double>(in));
  for (double& w : l.weights) w = sd * rng.normal();
  return l;
}

Vec affine(const DenseLayer& l, std::span<const double> x) {
  Vec y(l.bias);
  for (std::size_t o = 0; o < l.out; ++o) {
    const double* w = l.weights.data() + o * l.in;
    double s = 0.0;
    for (std::size_t i = 0; i < l.in; ++i) s += w[i] * x[i];
    y[o] += s;
  }
  return y;
}

void relu_inplace(Vec& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

// Visits matching tensors of two same-shaped parameter sets.
template <class P, class Q, class F>
void zip_tensors(P& a, Q& b, F&& fn) {
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    fn(a.layers[l].weights, b.layers[l].weights);
    fn(a.layers[l].bias, b.layers[l].bias);
  }
  if (a.aux_head) {
    fn(a.aux_head->weights, b.aux_head->weights);
    fn(a.aux_head->bias, b.aux_head->bias);
  }
}

void check_same_shape(const MlpParams& a, const MlpParams& b) {
  bool ok = a.layers.size() == b.layers.size() && a.aux_head.has_value() == b.aux_head.has_value();
  for (std::size_t l = 0; ok && l < a.layers.size(); ++l)
    ok = a.layers[l].in == b.layers[l].in && a.layers[l].out == b.layers[l].out;
  if (ok && a.aux_head) ok = a.aux_head->in == b.aux_head->in && a.aux_head->out == b.aux_head->out;
  if (!ok) throw InvalidArgument("parameter shapes do not match");
}

void check_params(const MlpParams& p) {
  if (p.layers.empty()) throw InvalidArgument("network has no layers");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    if (L.weights.size() != L.in * L.out || L.bias.size() != L.out)
      throw InvalidArgument("layer " + std::to_string(l) + " has inconsistent storage");
    if (l > 0 && L.in != p.layers[l - 1].out)
      throw InvalidArgument("layer " + std::to_string(l) + " does not chain to the previous layer");
  }
  if (p.aux_head) {
    const auto& A = *p.aux_head;
    if (A.weights.size() != A.in * A.out || A.bias.size() != A.out || A.in != p.layers.back().in ||
        A.out != p.layers.back().out)
      throw InvalidArgument("aux head does not match the classification head");
  }
}

struct Cache {
  std::vector<Vec> acts;  // acts[0] = x, acts[l] = input of layer l
  Vec logits;
  Vec aux_logits;
};

Cache forward_cached(const MlpParams& p, std::span<const double> x) {
  if (x.size() != p.input_dim())
    throw InvalidArgument("input width " + std::to_string(x.size()) + " != " +
                          std::to_string(p.input_dim()));
  Cache c;
  c.acts.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
    Vec h = affine(p.layers[l], c.acts.back());
    relu_inplace(h);
    c.acts.push_back(std::move(h));
  }
  c.logits = affine(p.layers.back(), c.acts.back());
  if (p.aux_head) c.aux_logits = affine(*p.aux_head, c.acts.back());
  return c;
}

// Accumulates d(loss)/d(params) into g given upstream gradients at the heads.
void backprop(const MlpParams& p, const Cache& c, std::span<const double> dlogits,
              std::span<const double> daux, MlpGrads& g) {
  const std::size_t L = p.layers.size();
  const Vec& feat = c.acts.back();
  Vec dfeat(feat.size(), 0.0);
  auto head = [&](const DenseLayer& layer, DenseLayer& gl, std::span<const double> d) {
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double go = d[o];
      if (go == 0.0) continue;
      gl.bias[o] += go;
      double* gw = gl.weights.data() + o * layer.in;
      const double* w = layer.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) {
        gw[i] += go * feat[i];
        dfeat[i] += go * w[i];
      }
    }
  };
  head(p.layers[L - 1], g.layers[L - 1], dlogits);
  if (!daux.empty()) head(*p.aux_head, *g.aux_head, daux);

  Vec dout = std::move(dfeat);
  for (std::size_t l = L - 1; l-- > 0;) {
    const DenseLayer& layer = p.layers[l];
    DenseLayer& gl = g.layers[l];
    const Vec& in = c.acts[l];
    const Vec& out = c.acts[l + 1];
    Vec din(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      if (out[o] <= 0.0) continue;  // ReLU gate
      const double go = dout[o];
      if (go == 0.0) continue;
      gl.bias[o] += go;
      double* gw = gl.weights.data() + o * layer.in;
      const double* w = layer.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) {
        gw[i] += go * in[i];
        din[i] += go * w[i];
      }
    }
    dout = std::move(din);
  }
}

void scale_grads(MlpGrads& g, double s) {
  zip_tensors(g, g, [s](Vec& a, Vec&) {
    for (double& x : a) x *= s;
  });
}

}  // namespace

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  if (aux_head) n += aux_head->weights.size() + aux_head->bias.size();
  return n;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  for (const auto& l : layers) z.layers.push_back(zero_layer(l.in, l.out));
  if (aux_head) z.aux_head = zero_layer(aux_head->in, aux_head->out);
  return z;
}

bool MlpParams::all_finite() const {
  bool ok = true;
  zip_tensors(*this, *this, [&ok](const Vec& a, const Vec&) { ok = ok && oko::all_finite(a); });
  return ok;
}

MlpParams init_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t classes,
                   bool aux_head, RngStream& rng) {
  if (input_dim == 0 || classes == 0) throw InvalidArgument("input and output widths must be positive");
  MlpParams p;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    if (h == 0) throw InvalidArgument("hidden widths must be positive");
    p.layers.push_back(he_layer(in, h, rng));
    in = h;
  }
  p.layers.push_back(he_layer(in, classes, rng));
  if (aux_head) p.aux_head = he_layer(in, classes, rng);
  return p;
}

Vec forward_single(const MlpParams& params, std::span<const double> x) {
  if (params.layers.empty()) throw InvalidArgument("network has no layers");
  if (x.size() != params.input_dim())
    throw InvalidArgument("input width " + std::to_string(x.size()) + " != " +
                          std::to_string(params.input_dim()));
  Vec h(x.begin(), x.end());
  for (std::size_t l = 0; l + 1 < params.layers.size(); ++l) {
    h = affine(params.layers[l], h);
    relu_inplace(h);
  }
  return affine(params.layers.back(), h);
}

Vec forward_set(const MlpParams& params, std::span<const Vec> members) {
  if (members.empty()) throw InvalidArgument("forward_set: empty set");
  std::vector<Vec> logits;
  logits.reserve(members.size());
  for (const auto& x : members) logits.push_back(forward_single(params, x));
  return set_logit_sum(logits);
}

BackwardResult backward_examples(const MlpParams& params, const LabeledDataset& ds,
                                 std::span<const Sample> batch, const LossSpec& loss) {
  check_params(params);
  if (batch.empty()) throw InvalidArgument("empty batch");
  if (loss.is_set_loss()) throw InvalidArgument("set losses need backward_sets");
  if (ds.dim() != params.input_dim()) throw InvalidArgument("dataset width does not match the network");
  BackwardResult r{0.0, params.zeros_like()};
  for (const auto& s : batch) {
    const Cache c = forward_cached(params, ds.row(s.index));
    const LossGrad lg = evaluate_example_loss(loss, c.logits, s.label);
    r.loss += lg.loss;
    backprop(params, c, lg.grad, {}, r.grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  r.loss *= inv;
  scale_grads(r.grads, inv);
  return r;
}

BackwardResult backward_sets(const MlpParams& params, const LabeledDataset& ds,
                             std::span<const OkoSet> sets, const LossSpec& loss, double aux_weight) {
  check_params(params);
  if (sets.empty()) throw InvalidArgument("empty meta-batch");
  if (!loss.is_set_loss()) throw InvalidArgument("backward_sets needs oko_hard or oko_soft");
  if (ds.dim() != params.input_dim()) throw InvalidArgument("dataset width does not match the network");
  const bool aux = params.aux_head.has_value();
  BackwardResult r{0.0, params.zeros_like()};
  for (const auto& set : sets) {
    check_oko_set(set, static_cast<int>(params.num_classes()));
    if (aux && set.k != 1) throw InvalidArgument("the aux odd-class head requires k = 1");
    std::vector<Cache> caches;
    caches.reserve(set.size());
    Vec sum(params.num_classes(), 0.0);
    Vec aux_sum(aux ? params.num_classes() : 0, 0.0);
    for (std::size_t idx : set.indices) {
      caches.push_back(forward_cached(params, ds.row(idx)));
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += caches.back().logits[j];
      for (std::size_t j = 0; j < aux_sum.size(); ++j) aux_sum[j] += caches.back().aux_logits[j];
    }
    const LossGrad lg = loss.kind == LossKind::kOkoHard ? oko_hard(sum, set.pair_label)
                                                        : oko_soft(sum, set.labels);
    r.loss += lg.loss;
    Vec daux;
    if (aux) {
      LossGrad odd = vanilla_ce(aux_sum, set.labels[2]);
      r.loss += aux_weight * odd.loss;
      for (double& v : odd.grad) v *= aux_weight;
      daux = std::move(odd.grad);
    }
    // d(sum)/d(member logits) is the identity, so every member sees the same upstream gradient.
    for (const auto& c : caches) backprop(params, c, lg.grad, daux, r.grads);
  }
  const double inv = 1.0 / static_cast<double>(sets.size());
  r.loss *= inv;
  scale_grads(r.grads, inv);
  return r;
}

OptState OptState::for_params(const MlpParams& params, double base_lr, double momentum,
                              std::size_t total_steps) {
  OptState s;
  s.velocity = params.zeros_like();
  s.base_lr = base_lr;
  s.momentum = momentum;
  s.total_steps = total_steps;
  return s;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (step > total_steps) throw InvalidArgument("cosine_lr: step beyond total_steps");
  if (total_steps == 0) return base_lr;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

void sgd_momentum_step(MlpParams& params, const MlpGrads& grads, OptState& opt) {
  check_same_shape(params, grads);
  check_same_shape(params, opt.velocity);
  if (!grads.all_finite()) throw NumericFault("non-finite gradient; step rejected");
  const double lr = cosine_lr(std::min(opt.step, opt.total_steps), opt.total_steps, opt.base_lr);
  const double mu = opt.momentum;
  auto update = [&](auto& self_params, auto& vel) {
    zip_tensors(vel, grads, [mu](Vec& v, const Vec& g) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = mu * v[i] + g[i];
    });
    zip_tensors(self_params, vel, [lr](Vec& th, const Vec& v) {
      for (std::size_t i = 0; i < th.size(); ++i) th[i] -= lr * v[i];
    });
  };
  update(params, opt.velocity);
  ++opt.step;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kVanilla: return "vanilla";
    case Method::kLabelSmoothing: return "label_smoothing";
    case Method::kFocal: return "focal";
    case Method::kWeighted: return "weighted";
    case Method::kBatchBalanced: return "batch_balanced";
    case Method::kBalancedLabelSmoothing: return "batch_balanced_ls";
    case Method::kBalancedTemperature: return "batch_balanced_ts";
    case Method::kOko: return "oko";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  for (auto m : {Method::kVanilla, Method::kLabelSmoothing, Method::kFocal, Method::kWeighted,
                 Method::kBatchBalanced, Method::kBalancedLabelSmoothing,
                 Method::kBalancedTemperature, Method::kOko}) {
    if (to_string(m) == name) return m;
  }
  throw InvalidArgument("unknown method: " + name);
}

LossSpec default_loss_for(Method m) {
  LossSpec s;
  switch (m) {
    case Method::kLabelSmoothing:
    case Method::kBalancedLabelSmoothing: s.kind = LossKind::kLabelSmoothing; break;
    case Method::kFocal: s.kind = LossKind::kFocal; break;
    case Method::kWeighted: s.kind = LossKind::kWeighted; break;
    case Method::kOko: s.kind = LossKind::kOkoHard; break;
    default: s.kind = LossKind::kVanilla; break;
  }
  return s;
}

bool uses_balanced_batches(Method m) {
  return m == Method::kBatchBalanced || m == Method::kBalancedLabelSmoothing ||
         m == Method::kBalancedTemperature;
}

void TrainConfig::validate() const {
  if ((method == Method::kOko) != loss.is_set_loss())
    throw InvalidArgument("oko_hard/oko_soft losses go with method oko and only with it");
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("learning rate must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  if (k < 0) throw InvalidArgument("k must be non-negative");
  if (aux_odd_head && method != Method::kOko) throw InvalidArgument("aux odd-class head is OKO only");
  if (aux_odd_head && k != 1) throw InvalidArgument("the aux odd-class head requires k = 1");
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (loss.kind != LossKind::kWeighted) loss.validate();
}

TrainResult train(const LabeledDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.size() == 0) throw InvalidArgument("empty training set");
  LossSpec loss = cfg.loss;
  if (loss.kind == LossKind::kWeighted && loss.class_counts.empty()) {
    for (std::size_t n : ds.class_counts()) loss.class_counts.push_back(static_cast<double>(n));
  }
  loss.validate();

  RngStream init_rng(cfg.seed, 1);
  RngStream sample_rng(cfg.seed, 2);
  TrainResult out;
  out.params = init_mlp(ds.dim(), cfg.hidden, static_cast<std::size_t>(ds.num_classes()),
                        cfg.aux_odd_head, init_rng);

  const std::size_t n = ds.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  OptState opt = OptState::for_params(out.params, cfg.lr, cfg.momentum, steps_per_epoch * cfg.epochs);
  const ClassPartition part = partition_by_class(ds);

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    double epoch_loss = 0.0;
    std::size_t drawn = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t b = std::min(cfg.batch_size, n - s * cfg.batch_size);
      BackwardResult r;
      if (cfg.method == Method::kOko) {
        std::vector<OkoSet> sets;
        sets.reserve(b);
        for (std::size_t i = 0; i < b; ++i) sets.push_back(sample_oko_set(part, cfg.k, sample_rng));
        r = backward_sets(out.params, ds, sets, loss, cfg.aux_weight);
      } else {
        const auto batch = uses_balanced_batches(cfg.method)
                               ? sample_balanced_batch(part, b, sample_rng)
                               : sample_uniform_batch(ds, b, sample_rng);
        r = backward_examples(out.params, ds, batch, loss);
      }
      sgd_momentum_step(out.params, r.grads, opt);
      epoch_loss += r.loss * static_cast<double>(b);
      drawn += b;
    }
    out.log.epoch_loss.push_back(epoch_loss / static_cast<double>(drawn));
    out.log.examples_drawn += drawn;
  }
  out.log.steps = opt.step;
  return out;
}

Vec predict_proba(const MlpParams& params, std::span<const double> x, double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  Vec z = forward_single(params, x);
  for (double& v : z) v /= temperature;
  return softmax(z);
}

namespace {

using nlohmann::json;
constexpr int kCheckpointVersion = 1;

json layer_json(const DenseLayer& l) {
  return json{{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}};
}

DenseLayer layer_from(const json& j) {
  DenseLayer l;
  l.in = j.at("in").get<std::size_t>();
  l.out = j.at("out").get<std::size_t>();
  l.weights = j.at("weights").get<Vec>();
  l.bias = j.at("bias").get<Vec>();
  return l;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json j;
  j["version"] = kCheckpointVersion;
  j["config_hash"] = ckpt.config_hash;
  j["seed"] = ckpt.seed;
  j["layers"] = json::array();
  for (const auto& l : ckpt.params.layers) j["layers"].push_back(layer_json(l));
  j["aux_head"] = ckpt.params.aux_head ? layer_json(*ckpt.params.aux_head) : json(nullptr);
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw InvalidArgument("unsupported checkpoint version");
    Checkpoint c;
    c.config_hash = j.at("config_hash").get<std::uint64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& l : j.at("layers")) c.params.layers.push_back(layer_from(l));
    if (!j.at("aux_head").is_null()) c.params.aux_head = layer_from(j.at("aux_head"));
    check_params(c.params);
    if (!c.params.all_finite()) throw InvalidArgument("checkpoint holds non-finite parameters");
    return c;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("cannot write " + path.string());
  f << checkpoint_to_json(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InvalidArgument("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace oko
