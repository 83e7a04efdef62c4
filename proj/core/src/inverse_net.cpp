#include "styleswap/inverse_net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <iostream>
#include <numeric>

#include "styleswap/csv.hpp"
#include "styleswap/stylize.hpp"

namespace styleswap {

template <typename T>
std::size_t BasicInverseNet<T>::upsample_factor() const {
  std::size_t f = 1;
  for (const auto& l : layers) {
    if (l.spec.kind == LayerKind::NNUpsample) f *= l.spec.factor;
  }
  return f;
}

template <typename T>
std::size_t BasicInverseNet<T>::input_channels() const {
  for (const auto& l : layers) {
    if (l.spec.has_params()) return l.spec.in_channels;
  }
  return 3;
}

template <typename T>
void BasicInverseNet<T>::validate() const {
  std::size_t c = input_channels();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    l.spec.validate();
    if (l.spec.kind == LayerKind::MaxPool) {
      throw ConfigError("inverse net '" + name + "' layer " + std::to_string(i) + " downsamples");
    }
    if (l.spec.has_params()) {
      if (l.spec.in_channels != c) {
        throw ConfigError("inverse net '" + name + "' layer " + std::to_string(i) + " expects " +
                          std::to_string(l.spec.in_channels) + " channels, receives " + std::to_string(c));
      }
      check_params(l.spec, l.params);
      c = l.spec.out_channels;
    }
  }
  if (c != 3) throw ConfigError("inverse net '" + name + "' does not end in 3 channels");
}

template <typename T>
Shape BasicInverseNet<T>::output_shape(const Shape& activation_shape) const {
  return stack_output_shape<T>(layers, activation_shape);
}

namespace {

void push_conv_in_relu(InverseNet& net, std::size_t in, std::size_t out, Rng& rng) {
  const LayerSpec conv = LayerSpec::conv(in, out);
  net.layers.push_back({conv, init_params<float>(conv, rng)});
  net.layers.push_back({LayerSpec::instance_norm(), {}});
  net.layers.push_back({LayerSpec::relu(), {}});
}

void push_conv(InverseNet& net, std::size_t in, std::size_t out, Rng& rng) {
  const LayerSpec conv = LayerSpec::conv(in, out);
  net.layers.push_back({conv, init_params<float>(conv, rng)});
}

}  // namespace

InverseNet build_inverse_vgg19(std::uint64_t seed) {
  InverseNet net;
  net.name = std::string("inverse-") + kVgg19Name;
  net.paired_encoder = kVgg19Name;
  Rng rng(seed);
  push_conv_in_relu(net, 256, 128, rng);
  net.layers.push_back({LayerSpec::nn_upsample(2), {}});
  push_conv_in_relu(net, 128, 128, rng);
  push_conv_in_relu(net, 128, 64, rng);
  net.layers.push_back({LayerSpec::nn_upsample(2), {}});
  push_conv_in_relu(net, 64, 64, rng);
  push_conv(net, 64, 3, rng);
  return net;
}

InverseNet build_inverse_tiny(const Encoder& encoder, std::size_t hidden, std::uint64_t seed) {
  if (hidden < 1) throw ConfigError("inverse net needs at least one hidden channel");
  std::size_t factor = encoder.downsample_factor();
  InverseNet net;
  net.name = "inverse-" + encoder.name;
  net.paired_encoder = encoder.name;
  Rng rng(seed);
  push_conv_in_relu(net, encoder.output_channels(), hidden, rng);
  while (factor > 1) {
    if (factor % 2) throw ConfigError("tiny inverse net supports power-of-two downsampling only");
    factor /= 2;
    net.layers.push_back({LayerSpec::nn_upsample(2), {}});
    push_conv_in_relu(net, hidden, hidden, rng);
  }
  push_conv(net, hidden, 3, rng);
  return net;
}

template <typename T>
void check_pairing(const BasicInverseNet<T>& net, const BasicEncoder<T>& encoder) {
  if (net.paired_encoder != encoder.name || net.input_channels() != encoder.output_channels() ||
      net.upsample_factor() != encoder.downsample_factor()) {
    throw ConfigError("inverse net '" + net.name + "' (paired with '" + net.paired_encoder +
                      "') cannot invert encoder '" + encoder.name + "'");
  }
}

template <typename T>
BasicTensor<T> invert(const BasicTensor<T>& activations, const BasicInverseNet<T>& net) {
  if (activations.rank() != 3 || activations.channels() != net.input_channels()) {
    throw ShapeError("invert: activations " + shape_string(activations.shape()) + " do not match '" + net.name +
                     "' input channels " + std::to_string(net.input_channels()));
  }
  return stack_forward<T>(net.layers, activations, nullptr);
}

template <typename T>
InversionLoss<T> inversion_loss(std::span<const BasicTensor<T>> batch, const BasicInverseNet<T>& net,
                                const BasicEncoder<T>& encoder, double lambda_tv, bool with_grads) {
  if (batch.empty()) throw ConfigError("inversion_loss: empty batch");
  if (!(lambda_tv >= 0.0)) throw ConfigError("TV weight must be >= 0");
  check_pairing(net, encoder);
  InversionLoss<T> out;
  if (with_grads) {
    out.param_grads.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      const auto& spec = net.layers[i].spec;
      if (spec.has_params()) {
        out.param_grads[i].weights = BasicTensor<T>::zeros(spec.weight_shape());
        out.param_grads[i].bias = BasicTensor<T>::zeros(spec.bias_shape());
      }
    }
  }
  const double n = static_cast<double>(batch.size());
  for (const auto& h : batch) {
    if (h.rank() != 3 || h.channels() != net.input_channels()) {
      throw ShapeError("inversion_loss: sample " + shape_string(h.shape()) + " does not match '" + net.name + "'");
    }
    StackTrace<T> net_trace;
    const BasicTensor<T> image = stack_forward<T>(net.layers, h, with_grads ? &net_trace : nullptr);
    if (encoder.output_shape(image.shape()) != h.shape()) {
      throw ShapeError("inversion_loss: encode(invert(H)) has shape " +
                       shape_string(encoder.output_shape(image.shape())) + ", H has " + shape_string(h.shape()));
    }
    Encoded<T> enc = encode(image, encoder);
    const BasicTensor<T> residual = sub(enc.activations, h);
    out.loss += (frobenius_norm_sq(residual) + lambda_tv * tv_loss(image)) / n;
    if (!with_grads) continue;
    BasicTensor<T> g = encode_backward(enc.trace, encoder, scale(residual, T(2)));
    if (lambda_tv > 0.0) axpy_inplace(g, static_cast<T>(lambda_tv), tv_grad(image));
    StackGrad<T> sg = stack_backward<T>(net.layers, net_trace, g, true);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      if (!net.layers[i].spec.has_params()) continue;
      axpy_inplace(out.param_grads[i].weights, static_cast<T>(1.0 / n), sg.param_grads[i].weights);
      axpy_inplace(out.param_grads[i].bias, static_cast<T>(1.0 / n), sg.param_grads[i].bias);
    }
  }
  return out;
}

void BatchComposition::validate() const {
  if (natural < 1 || painting < 1) throw ConfigError("minibatch needs at least one natural image and one painting");
  if (swapped > natural * painting) {
    throw ConfigError("minibatch asks for " + std::to_string(swapped) + " swapped samples but only " +
                      std::to_string(natural * painting) + " pairs exist");
  }
}

std::vector<Tensor> assemble_minibatch(std::span<const Tensor> natural, std::span<const Tensor> paintings,
                                       const Encoder& encoder, std::size_t swapped, const SwapConfig& swap) {
  if (swapped > natural.size() * paintings.size()) throw ConfigError("not enough pairs for swapped samples");
  std::vector<Tensor> batch;
  batch.reserve(natural.size() + paintings.size() + swapped);
  for (const auto& img : natural) batch.push_back(encode_activations(img, encoder));
  for (const auto& img : paintings) batch.push_back(encode_activations(img, encoder));
  std::size_t made = 0;
  for (std::size_t i = 0; i < natural.size() && made < swapped; ++i) {
    for (std::size_t j = 0; j < paintings.size() && made < swapped; ++j, ++made) {
      batch.push_back(style_swap(batch[i], batch[natural.size() + j], swap));
    }
  }
  return batch;
}

std::vector<Tensor> make_minibatch(std::span<const Tensor> natural_pool, std::span<const Tensor> painting_pool,
                                   const Encoder& encoder, const BatchComposition& composition,
                                   const SwapConfig& swap, Rng& rng) {
  composition.validate();
  if (natural_pool.size() < composition.natural) {
    throw InputError("natural image pool exhausted: need " + std::to_string(composition.natural) + ", have " +
                     std::to_string(natural_pool.size()));
  }
  if (painting_pool.size() < composition.painting) {
    throw InputError("painting pool exhausted: need " + std::to_string(composition.painting) + ", have " +
                     std::to_string(painting_pool.size()));
  }
  auto draw = [&rng](std::span<const Tensor> pool, std::size_t k) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx.begin(), idx.end());
    std::vector<Tensor> chosen;
    for (std::size_t i = 0; i < k; ++i) chosen.push_back(pool[idx[i]]);
    return chosen;
  };
  const auto nat = draw(natural_pool, composition.natural);
  const auto paint = draw(painting_pool, composition.painting);
  return assemble_minibatch(nat, paint, encoder, composition.swapped, swap);
}

ValidationSet make_validation_set(std::span<const Tensor> natural, std::span<const Tensor> paintings,
                                  const Encoder& encoder, const SwapConfig& swap, std::size_t max_swapped) {
  ValidationSet v;
  std::vector<Tensor> nat_acts, paint_acts;
  for (const auto& img : natural) nat_acts.push_back(encode_activations(img, encoder));
  for (const auto& img : paintings) paint_acts.push_back(encode_activations(img, encoder));
  v.real = nat_acts;
  v.real.insert(v.real.end(), paint_acts.begin(), paint_acts.end());
  if (!nat_acts.empty() && !paint_acts.empty()) {
    const std::size_t n = nat_acts.size(), p = paint_acts.size();
    const std::size_t count = std::min(max_swapped, n * p);
    for (std::size_t k = 0; k < count; ++k) {
      v.swapped.push_back(style_swap(nat_acts[k % n], paint_acts[(k / n + k) % p], swap));
    }
  }
  return v;
}

void TrainConfig::validate() const {
  if (!(lambda_tv >= 0.0)) throw ConfigError("TV weight must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  batch.validate();
  swap.validate();
  if (checkpoint_every > 0 && checkpoint_path.empty()) {
    throw ConfigError("checkpoint cadence set without a checkpoint path");
  }
}

double TrainReport::initial_loss() const {
  if (step_loss.empty()) throw ConfigError("empty training report");
  return step_loss.front();
}

double TrainReport::final_loss() const {
  if (step_loss.empty()) throw ConfigError("empty training report");
  const std::size_t k = std::min<std::size_t>(10, step_loss.size());
  return std::accumulate(step_loss.end() - static_cast<std::ptrdiff_t>(k), step_loss.end(), 0.0) /
         static_cast<double>(k);
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  CsvWriter csv({"step", "train_loss", "val_real", "val_swapped"});
  std::size_t v = 0;
  for (std::size_t i = 0; i < step_loss.size(); ++i) {
    const std::size_t step = first_step + i;
    if (v < validation.size() && validation[v].step == step) {
      csv.add(step, step_loss[i], validation[v].real, validation[v].swapped);
      ++v;
    } else {
      csv.add(step, step_loss[i], "", "");
    }
  }
  csv.save(path);
}

// ---------------------------------------------------------------------------
// Optimizer state sidecar: "SSTS", u32 version, u64 step, u32 slots,
// per slot u64 n, f32 m[n], f32 v[n]. Little-endian.

std::vector<std::uint8_t> encode_train_state(const TrainState& state) {
  std::vector<std::uint8_t> out{'S', 'S', 'T', 'S'};
  auto put = [&out](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put(1, 4);
  put(state.step, 8);
  put(state.moments.size(), 4);
  for (const auto& m : state.moments) {
    put(m.m.size(), 8);
    for (float f : m.m) put(std::bit_cast<std::uint32_t>(f), 4);
    for (float f : m.v) put(std::bit_cast<std::uint32_t>(f), 4);
  }
  return out;
}

TrainState decode_train_state(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto get = [&](int n) {
    if (bytes.size() - pos < static_cast<std::size_t>(n)) throw FormatError("training state truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
    return v;
  };
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "SSTS", 4) != 0) throw FormatError("training state: bad magic");
  pos = 4;
  if (get(4) != 1) throw FormatError("training state: unsupported version");
  TrainState s;
  s.step = get(8);
  const std::uint64_t slots = get(4);
  for (std::uint64_t i = 0; i < slots; ++i) {
    const std::uint64_t n = get(8);
    if (n > (bytes.size() - pos) / 8) throw FormatError("training state truncated");
    Adam<float>::Moments m;
    m.m.resize(n);
    m.v.resize(n);
    for (auto& f : m.m) f = std::bit_cast<float>(static_cast<std::uint32_t>(get(4)));
    for (auto& f : m.v) f = std::bit_cast<float>(static_cast<std::uint32_t>(get(4)));
    s.moments.push_back(std::move(m));
  }
  if (pos != bytes.size()) throw FormatError("training state: trailing bytes");
  return s;
}

std::filesystem::path state_path_for(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".state");
}

namespace {

void write_checkpoint(const std::filesystem::path& path, const InverseNet& net, const Adam<float>& adam) {
  save_weights(path, to_weight_file(net));
  write_file(state_path_for(path), encode_train_state(TrainState{adam.steps(), adam.moments()}));
}

ValidationPoint run_validation(std::size_t step, const ValidationSet& v, const InverseNet& net,
                               const Encoder& encoder, double lambda) {
  ValidationPoint p{step, 0.0, 0.0};
  if (!v.real.empty()) p.real = inversion_loss<float>(v.real, net, encoder, lambda, false).loss;
  if (!v.swapped.empty()) p.swapped = inversion_loss<float>(v.swapped, net, encoder, lambda, false).loss;
  return p;
}

}  // namespace

TrainReport train(const TrainData& data, const Encoder& encoder, InverseNet& net, const TrainConfig& config,
                  const TrainState* resume) {
  config.validate();
  check_pairing(net, encoder);
  const auto& comp = config.batch;
  if (data.natural.size() < comp.natural || data.paintings.size() < comp.painting) {
    throw InputError("training pools are empty or smaller than one minibatch (natural " +
                     std::to_string(data.natural.size()) + ", paintings " + std::to_string(data.paintings.size()) +
                     ")");
  }

  Adam<float> adam(AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8});
  std::size_t start = 0;
  if (resume) {
    adam.restore(resume->step, resume->moments);
    start = static_cast<std::size_t>(resume->step);
  }

  TrainReport report;
  report.first_step = start;
  const std::size_t steps_per_epoch =
      std::min(data.natural.size() / comp.natural, data.paintings.size() / comp.painting);
  std::size_t global = 0;
  bool stop = false;
  for (std::size_t epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    Rng rng(derive_seed(config.seed, epoch));
    std::vector<std::size_t> nat(data.natural.size()), paint(data.paintings.size());
    std::iota(nat.begin(), nat.end(), 0);
    std::iota(paint.begin(), paint.end(), 0);
    rng.shuffle(nat.begin(), nat.end());
    rng.shuffle(paint.begin(), paint.end());
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++global) {
      if (config.max_steps && global >= config.max_steps) {
        stop = true;
        break;
      }
      if (global < start) continue;
      std::vector<Tensor> chosen_nat, chosen_paint;
      for (std::size_t i = 0; i < comp.natural; ++i) chosen_nat.push_back(data.natural[nat[s * comp.natural + i]]);
      for (std::size_t i = 0; i < comp.painting; ++i) {
        chosen_paint.push_back(data.paintings[paint[s * comp.painting + i]]);
      }
      const auto batch = assemble_minibatch(chosen_nat, chosen_paint, encoder, comp.swapped, config.swap);
      InversionLoss<float> l = inversion_loss<float>(batch, net, encoder, config.lambda_tv, true);
      if (!std::isfinite(l.loss)) {
        throw NumericalError("training loss became " + std::to_string(l.loss) + " at step " +
                             std::to_string(global) +
                             (report.checkpoints.empty() ? std::string()
                                                         : "; last good checkpoint " +
                                                               report.checkpoints.back().string()));
      }
      adam.begin_step();
      for (std::size_t i = 0; i < net.layers.size(); ++i) {
        auto& layer = net.layers[i];
        if (!layer.spec.has_params()) continue;
        adam.update(2 * i, layer.params.weights.data(), l.param_grads[i].weights.data());
        adam.update(2 * i + 1, layer.params.bias.data(), l.param_grads[i].bias.data());
      }
      report.step_loss.push_back(l.loss);
      const std::size_t done = global + 1;
      if (config.validate_every && done % config.validate_every == 0) {
        report.validation.push_back(run_validation(global, data.validation, net, encoder, config.lambda_tv));
      }
      if (config.checkpoint_every && done % config.checkpoint_every == 0) {
        write_checkpoint(config.checkpoint_path, net, adam);
        report.checkpoints.push_back(config.checkpoint_path);
      }
    }
  }
  if (report.step_loss.empty()) return report;
  const std::size_t last = report.first_step + report.step_loss.size() - 1;
  if (report.validation.empty() || report.validation.back().step != last) {
    report.validation.push_back(run_validation(last, data.validation, net, encoder, config.lambda_tv));
  }
  if (!config.checkpoint_path.empty()) {
    write_checkpoint(config.checkpoint_path, net, adam);
    report.checkpoints.push_back(config.checkpoint_path);
  }
  return report;
}

Tensor feedforward_stylize(const Tensor& content, const Tensor& style, const Encoder& encoder,
                           const InverseNet& net, const SwapConfig& swap) {
  check_pairing(net, encoder);
  const Tensor target = style_swap(encode_activations(content, encoder), encode_activations(style, encoder), swap);
  return invert(target, net);
}

WeightFile to_weight_file(const InverseNet& net) {
  return WeightFile{NetworkRole::InverseNet, net.name, net.paired_encoder, Preprocess{}, net.layers};
}

InverseNet inverse_net_from_weights(const WeightFile& file) {
  if (file.role != NetworkRole::InverseNet) {
    throw FormatError("weight file '" + file.name + "' holds an encoder, not an inverse network");
  }
  InverseNet net{file.name, file.paired_encoder, file.layers};
  try {
    net.validate();
  } catch (const ConfigError& err) {
    throw FormatError(err.what());
  }
  return net;
}

template struct BasicInverseNet<float>;
template struct BasicInverseNet<double>;
template void check_pairing<float>(const BasicInverseNet<float>&, const BasicEncoder<float>&);
template void check_pairing<double>(const BasicInverseNet<double>&, const BasicEncoder<double>&);
template Tensor invert<float>(const Tensor&, const BasicInverseNet<float>&);
template TensorD invert<double>(const TensorD&, const BasicInverseNet<double>&);
template InversionLoss<float> inversion_loss<float>(std::span<const Tensor>, const BasicInverseNet<float>&,
                                                    const BasicEncoder<float>&, double, bool);
template InversionLoss<double> inversion_loss<double>(std::span<const TensorD>, const BasicInverseNet<double>&,
                                                      const BasicEncoder<double>&, double, bool);

}  // namespace styleswap
