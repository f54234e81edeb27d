#include "strcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "strcn/errors.hpp"

namespace strcn {

Variant variant_from_string(const std::string& s) {
  if (s == "A" || s == "a" || s == "appearance") return Variant::kAppearance;
  if (s == "G" || s == "g" || s == "geometric") return Variant::kGeometric;
  throw ConfigError("unknown variant '" + s + "' (expected A or G)");
}

std::string to_string(Variant v) { return v == Variant::kAppearance ? "A" : "G"; }

void StrcnConfig::validate() const {
  if (input_h <= 0 || input_w <= 0 || input_c <= 0)
    throw ConfigError("model: input dimensions must be positive");
  if (feature_maps < 1) throw ConfigError("model: feature_maps must be >= 1");
  if (rcl_layers < 0 || rcl_layers > 4) throw ConfigError("model: rcl_layers must be in 0..4");
  if (rcl_iterations < 0) throw ConfigError("model: rcl_iterations must be >= 0");
  if (num_classes < 2) throw ConfigError("model: need at least 2 classes");
}

std::vector<PoolSpec> pooling_schedule(Variant variant) {
  if (variant == Variant::kAppearance)
    return {{4, 1, 4, 1}, {4, 1, 4, 1}, {4, 4, 4, 4}, {2, 2, 2, 2}};
  return {{4, 4, 4, 4}, {4, 4, 4, 4}, {4, 4, 4, 4}, {2, 2, 2, 2}};
}

std::vector<std::pair<int, int>> trace_shapes(const StrcnConfig& cfg) {
  cfg.validate();
  const auto pools = pooling_schedule(cfg.variant);
  std::vector<std::pair<int, int>> shapes;
  int h = cfg.input_h - 4;  // conv1 5x5, pad 0, stride 1
  int w = cfg.input_w - 4;
  if (h < 1 || w < 1) throw ConfigError("model: input too small for the 5x5 convolution");
  shapes.emplace_back(h, w);
  const int pool_stages = std::max(cfg.rcl_layers, 1);  // pool1 always runs
  for (int i = 0; i < pool_stages; ++i) {
    const PoolSpec& p = pools[static_cast<std::size_t>(i)];
    if (p.k_h > h || p.k_w > w)
      throw ConfigError("model: input too small for the pooling schedule");
    h = (h - p.k_h) / p.s_h + 1;
    w = (w - p.k_w) / p.s_w + 1;
    shapes.emplace_back(h, w);
    // An RCL keeps spatial size (1x1 feed-forward, 3x3 recurrent with pad 1).
    if (i < cfg.rcl_layers) shapes.emplace_back(h, w);
  }
  return shapes;
}

namespace {

Tensor he_uniform(Rng& rng, const TensorShape& shape, int fan_in) {
  const double bound = std::sqrt(6.0 / fan_in);
  return Tensor::uniform(rng, shape, -bound, bound, true);
}

BatchNormLayer make_norm(int channels) {
  BatchNormLayer n;
  n.gamma = Tensor::full({channels}, 1.0, true);
  n.beta = Tensor::zeros({channels}, true);
  return n;
}

}  // namespace

Tensor RclLayer::forward(const Tensor& x, bool training, bool update_stats,
                         std::vector<Tensor>* preactivations) {
  // Feed-forward drive is shared by every iteration.
  const Tensor drive = conv2d(x, feed_forward.kernel, feed_forward.bias, 1, 1, 0, 0);
  if (preactivations) preactivations->push_back(drive);
  Tensor state = relu(batch_norm(drive, norms[0].gamma, norms[0].beta, norms[0].stats, training,
                                 update_stats));
  for (int n = 1; n <= iterations; ++n) {
    const Tensor rec = conv2d(state, recurrent_kernel, Tensor(), 1, 1, 1, 1);
    const Tensor z = add(drive, rec);
    if (preactivations) preactivations->push_back(z);
    BatchNormLayer& bn = norms[static_cast<std::size_t>(n)];
    state = relu(batch_norm(z, bn.gamma, bn.beta, bn.stats, training, update_stats));
  }
  return state;
}

StrcnNetwork::StrcnNetwork(const StrcnConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  trace_shapes(cfg_);  // throws when the stack does not fit
  pools_ = pooling_schedule(cfg_.variant);

  Rng rng(cfg_.init_seed);
  const int m = cfg_.feature_maps;
  conv1_.kernel = he_uniform(rng, {5, 5, cfg_.input_c, m}, 5 * 5 * cfg_.input_c);
  conv1_.bias = Tensor::zeros({m}, true);
  norm1_ = make_norm(m);

  for (int i = 0; i < cfg_.rcl_layers; ++i) {
    RclLayer layer;
    layer.feed_forward.kernel = he_uniform(rng, {1, 1, m, m}, m);
    layer.feed_forward.bias = Tensor::zeros({m}, true);
    layer.recurrent_kernel = he_uniform(rng, {3, 3, m, m}, 9 * m);
    layer.iterations = cfg_.rcl_iterations;
    for (int n = 0; n <= cfg_.rcl_iterations; ++n) layer.norms.push_back(make_norm(m));
    rcls_.push_back(std::move(layer));
  }
  head_ = he_uniform(rng, {m, cfg_.num_classes}, m);
}

Tensor StrcnNetwork::forward_logits(const Tensor& x, bool training, bool update_stats) {
  const auto& xs = x.shape();
  if (xs.size() != 4 || xs[1] != cfg_.input_h || xs[2] != cfg_.input_w || xs[3] != cfg_.input_c)
    throw ShapeError("forward: input does not match the configured shape");

  Tensor h = conv2d(x, conv1_.kernel, conv1_.bias, 1, 1, 0, 0);
  h = relu(batch_norm(h, norm1_.gamma, norm1_.beta, norm1_.stats, training, update_stats));
  for (std::size_t i = 0; i < rcls_.size(); ++i) {
    const PoolSpec& p = pools_[i];
    h = max_pool(h, p.k_h, p.k_w, p.s_h, p.s_w);
    h = rcls_[i].forward(h, training, update_stats);
  }
  if (rcls_.empty()) {
    const PoolSpec& p = pools_[0];
    h = max_pool(h, p.k_h, p.k_w, p.s_h, p.s_w);
  }
  h = global_avg_pool(h);
  return matmul(h, head_);
}

std::vector<double> StrcnNetwork::predict(const Tensor& input) {
  const auto& shape = input.shape();
  if (shape.size() != 3) throw ShapeError("predict: expected a single [H,W,C] input");
  std::vector<double> data = input.values();
  Tensor batch = Tensor::from_vector({1, shape[0], shape[1], shape[2]}, std::move(data));
  const Tensor logits = forward_logits(batch, /*training=*/false);
  const Tensor probs = softmax(logits);
  return probs.values();
}

std::vector<Tensor> StrcnNetwork::parameters() {
  std::vector<Tensor> params{conv1_.kernel, conv1_.bias, norm1_.gamma, norm1_.beta};
  for (RclLayer& layer : rcls_) {
    params.push_back(layer.feed_forward.kernel);
    params.push_back(layer.feed_forward.bias);
    params.push_back(layer.recurrent_kernel);
    for (BatchNormLayer& n : layer.norms) {
      params.push_back(n.gamma);
      params.push_back(n.beta);
    }
  }
  params.push_back(head_);
  return params;
}

// --- checkpoint io -----------------------------------------------------------

namespace {

constexpr char kWeightMagic[8] = {'S', 'T', 'R', 'C', 'N', 'W', 'T', '1'};

void write_array(std::ofstream& out, const std::string& name, const TensorShape& shape,
                 const std::vector<double>& values) {
  const std::uint16_t len = static_cast<std::uint16_t>(name.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(name.data(), len);
  const std::uint8_t ndim = static_cast<std::uint8_t>(shape.size());
  out.write(reinterpret_cast<const char*>(&ndim), sizeof(ndim));
  for (int d : shape) {
    const std::int32_t v = d;
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

struct NamedArray {
  TensorShape shape;
  std::vector<double> values;
};

std::map<std::string, NamedArray> read_arrays(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (std::memcmp(magic, kWeightMagic, sizeof(magic)) != 0)
    throw IoError("bad checkpoint magic: " + path.string());
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  std::map<std::string, NamedArray> arrays;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint8_t ndim = 0;
    in.read(reinterpret_cast<char*>(&ndim), sizeof(ndim));
    NamedArray a;
    std::int64_t n = 1;
    for (int d = 0; d < ndim; ++d) {
      std::int32_t v = 0;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      a.shape.push_back(v);
      n *= v;
    }
    a.values.resize(static_cast<std::size_t>(n));
    in.read(reinterpret_cast<char*>(a.values.data()),
            static_cast<std::streamsize>(a.values.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint: " + path.string());
    arrays.emplace(std::move(name), std::move(a));
  }
  return arrays;
}

}  // namespace

void StrcnNetwork::save(const std::filesystem::path& path) const {
  std::vector<std::pair<std::string, std::pair<TensorShape, std::vector<double>>>> entries;
  auto put = [&](const std::string& name, const Tensor& t) {
    entries.emplace_back(name, std::make_pair(t.shape(), t.values()));
  };
  auto put_raw = [&](const std::string& name, const std::vector<double>& v) {
    entries.emplace_back(name,
                         std::make_pair(TensorShape{static_cast<int>(v.size())}, v));
  };
  auto put_norm = [&](const std::string& prefix, const BatchNormLayer& n) {
    put(prefix + ".gamma", n.gamma);
    put(prefix + ".beta", n.beta);
    put_raw(prefix + ".running_mean", n.stats.running_mean);
    put_raw(prefix + ".running_var", n.stats.running_var);
  };

  put("conv1.kernel", conv1_.kernel);
  put("conv1.bias", conv1_.bias);
  put_norm("norm1", norm1_);
  for (std::size_t i = 0; i < rcls_.size(); ++i) {
    const std::string p = "rcl" + std::to_string(i);
    put(p + ".ff.kernel", rcls_[i].feed_forward.kernel);
    put(p + ".ff.bias", rcls_[i].feed_forward.bias);
    put(p + ".rec.kernel", rcls_[i].recurrent_kernel);
    for (std::size_t n = 0; n < rcls_[i].norms.size(); ++n)
      put_norm(p + ".norm" + std::to_string(n), rcls_[i].norms[n]);
  }
  put("head", head_);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kWeightMagic, sizeof(kWeightMagic));
  const std::uint32_t count = static_cast<std::uint32_t>(entries.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& [name, payload] : entries) write_array(out, name, payload.first, payload.second);
  if (!out) throw IoError("checkpoint write failed: " + path.string());

  // Config sidecar, flat key = value lines.
  std::ofstream cfg(path.string() + ".kv");
  cfg << "model.variant = " << to_string(cfg_.variant) << "\n"
      << "model.input_h = " << cfg_.input_h << "\n"
      << "model.input_w = " << cfg_.input_w << "\n"
      << "model.input_c = " << cfg_.input_c << "\n"
      << "model.feature_maps = " << cfg_.feature_maps << "\n"
      << "model.rcl_layers = " << cfg_.rcl_layers << "\n"
      << "model.rcl_iterations = " << cfg_.rcl_iterations << "\n"
      << "model.num_classes = " << cfg_.num_classes << "\n"
      << "model.init_seed = " << cfg_.init_seed << "\n";
}

StrcnNetwork StrcnNetwork::load(const std::filesystem::path& path) {
  std::ifstream cfg_in(path.string() + ".kv");
  if (!cfg_in) throw IoError("missing checkpoint sidecar: " + path.string() + ".kv");
  StrcnConfig cfg;
  std::string line;
  auto value_of = [](const std::string& l) {
    const auto pos = l.find('=');
    if (pos == std::string::npos) return std::string();
    auto v = l.substr(pos + 1);
    v.erase(0, v.find_first_not_of(" \t"));
    v.erase(v.find_last_not_of(" \t\r") + 1);
    return v;
  };
  while (std::getline(cfg_in, line)) {
    if (line.rfind("model.variant", 0) == 0) cfg.variant = variant_from_string(value_of(line));
    else if (line.rfind("model.input_h", 0) == 0) cfg.input_h = std::stoi(value_of(line));
    else if (line.rfind("model.input_w", 0) == 0) cfg.input_w = std::stoi(value_of(line));
    else if (line.rfind("model.input_c", 0) == 0) cfg.input_c = std::stoi(value_of(line));
    else if (line.rfind("model.feature_maps", 0) == 0) cfg.feature_maps = std::stoi(value_of(line));
    else if (line.rfind("model.rcl_layers", 0) == 0) cfg.rcl_layers = std::stoi(value_of(line));
    else if (line.rfind("model.rcl_iterations", 0) == 0)
      cfg.rcl_iterations = std::stoi(value_of(line));
    else if (line.rfind("model.num_classes", 0) == 0) cfg.num_classes = std::stoi(value_of(line));
    else if (line.rfind("model.init_seed", 0) == 0) cfg.init_seed = std::stoull(value_of(line));
  }

  StrcnNetwork net(cfg);
  auto arrays = read_arrays(path);
  auto fill = [&](const std::string& name, Tensor& t) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw IoError("checkpoint missing array: " + name);
    if (static_cast<std::int64_t>(it->second.values.size()) != t.size())
      throw IoError("checkpoint array size mismatch: " + name);
    t.raw_values() = it->second.values;
  };
  auto fill_raw = [&](const std::string& name, std::vector<double>& v) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw IoError("checkpoint missing array: " + name);
    v = it->second.values;
  };
  auto fill_norm = [&](const std::string& prefix, BatchNormLayer& n) {
    fill(prefix + ".gamma", n.gamma);
    fill(prefix + ".beta", n.beta);
    fill_raw(prefix + ".running_mean", n.stats.running_mean);
    fill_raw(prefix + ".running_var", n.stats.running_var);
    n.stats.initialized = true;
  };

  fill("conv1.kernel", net.conv1_.kernel);
  fill("conv1.bias", net.conv1_.bias);
  fill_norm("norm1", net.norm1_);
  for (std::size_t i = 0; i < net.rcls_.size(); ++i) {
    const std::string p = "rcl" + std::to_string(i);
    fill(p + ".ff.kernel", net.rcls_[i].feed_forward.kernel);
    fill(p + ".ff.bias", net.rcls_[i].feed_forward.bias);
    fill(p + ".rec.kernel", net.rcls_[i].recurrent_kernel);
    for (std::size_t n = 0; n < net.rcls_[i].norms.size(); ++n)
      fill_norm(p + ".norm" + std::to_string(n), net.rcls_[i].norms[n]);
  }
  fill("head", net.head_);
  return net;
}

}  // namespace strcn
