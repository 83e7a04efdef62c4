#include <gtest/gtest.h>

#include "styleswap/inverse_net.hpp"
#include "styleswap/stylize.hpp"
#include "styleswap/synthetic.hpp"
#include "test_support.hpp"

using namespace styleswap;
using styleswap::testing::kink_free;
using styleswap::testing::numeric_grad;
using styleswap::testing::random_tensor;
using styleswap::testing::relative_error;
using styleswap::testing::TempDir;

namespace {

TrainData small_data(std::size_t n, std::size_t size, std::uint64_t seed) {
  TrainData d;
  d.natural = synthetic_pool(false, n, size, seed);
  d.paintings = synthetic_pool(true, n, size, seed + 1);
  return d;
}

}  // namespace

TEST(InverseNet, VggStructure) {
  const auto net = build_inverse_vgg19();
  std::vector<LayerKind> kinds;
  std::vector<std::pair<std::size_t, std::size_t>> convs;
  for (const auto& l : net.layers) {
    kinds.push_back(l.spec.kind);
    if (l.spec.kind == LayerKind::Conv) convs.emplace_back(l.spec.in_channels, l.spec.out_channels);
  }
  using K = LayerKind;
  EXPECT_EQ(kinds, (std::vector<K>{K::Conv, K::InstanceNorm, K::ReLU, K::NNUpsample, K::Conv, K::InstanceNorm,
                                   K::ReLU, K::Conv, K::InstanceNorm, K::ReLU, K::NNUpsample, K::Conv,
                                   K::InstanceNorm, K::ReLU, K::Conv}));
  EXPECT_EQ(convs, (std::vector<std::pair<std::size_t, std::size_t>>{
                       {256, 128}, {128, 128}, {128, 64}, {64, 64}, {64, 3}}));
  EXPECT_EQ(net.upsample_factor(), 4u);
  EXPECT_EQ(net.paired_encoder, kVgg19Name);
  EXPECT_EQ(net.output_shape({64, 64, 256}), (Shape{256, 256, 3}));
  EXPECT_NO_THROW(net.validate());
  EXPECT_NO_THROW(check_pairing(net, build_truncated_vgg19()));
}

TEST(InverseNet, TinyShapes) {
  const auto e = build_tiny(8, 1);
  const auto net = build_inverse_tiny(e, 6, 2);
  EXPECT_EQ(net.upsample_factor(), 2u);
  EXPECT_EQ(net.input_channels(), 8u);
  EXPECT_EQ(net.layers.back().spec.kind, LayerKind::Conv);
  const auto out = invert(Tensor::full({16, 16, 8}, 0.1f), net);
  EXPECT_EQ(out.shape(), (Shape{32, 32, 3}));
  // Fully convolutional: other sizes work too.
  EXPECT_EQ(invert(Tensor::full({5, 9, 8}, 0.1f), net).shape(), (Shape{10, 18, 3}));
}

TEST(InverseNet, InvertIsDeterministic) {
  const auto e = build_tiny(8, 1);
  const auto net = build_inverse_tiny(e, 6, 2);
  Rng rng(3);
  const auto h = random_uniform<float>({8, 8, 8}, 0.f, 1.f, rng);
  EXPECT_EQ(invert(h, net), invert(h, net));
  EXPECT_THROW(invert(Tensor::zeros({8, 8, 4}), net), ShapeError);
}

TEST(InverseNet, PairingChecked) {
  const auto net = build_inverse_tiny(build_tiny(8, 1));
  try {
    check_pairing(net, build_tiny(8, 2));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("inverse-tiny8-seed1"), std::string::npos);
    EXPECT_NE(msg.find("tiny8-seed2"), std::string::npos);
  }
  EXPECT_THROW(check_pairing(net, build_identity()), ConfigError);
}

TEST(InversionLoss, IdentityFixedPoint) {
  const auto e = build_identity().cast<double>();
  BasicInverseNet<double> net{"inverse-identity", kIdentityName, {}};
  const auto spec = LayerSpec::conv(3, 3, 1, 1, 0);
  LayerParams<double> p{TensorD::zeros(spec.weight_shape()), TensorD::zeros({3})};
  for (std::size_t c = 0; c < 3; ++c) p.weights.at(0, 0, c, c) = 1.0;
  net.layers.push_back({spec, p});
  const std::vector<TensorD> batch{random_tensor({5, 4, 3}, 1), random_tensor({3, 6, 3}, 2)};
  const auto l = inversion_loss<double>(batch, net, e, 0.0);
  EXPECT_EQ(l.loss, 0.0);
  EXPECT_EQ(frobenius_norm_sq(l.param_grads[0].weights), 0.0);
}

TEST(InversionLoss, MatchesIndependentComposition) {
  const auto e = build_tiny(4, 3);
  const auto net = build_inverse_tiny(e, 5, 4);
  Rng rng(5);
  std::vector<Tensor> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(random_uniform<float>({6, 7, 4}, 0.f, 1.f, rng));
  const double lambda = 1e-2;
  double ref = 0;
  for (const auto& h : batch) {
    const auto img = invert(h, net);
    ref += frobenius_norm_sq(sub(encode_activations(img, e), h)) + lambda * tv_loss(img);
  }
  ref /= 3;
  const auto l = inversion_loss<float>(batch, net, e, lambda, false);
  EXPECT_NEAR(l.loss, ref, 1e-6 * std::max(1.0, ref));
  EXPECT_GE(l.loss, 0.0);
  EXPECT_TRUE(l.param_grads.empty());
}

TEST(InversionLoss, ParamGradsFiniteDifferences) {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 5 && seed < 200; ++seed) {
    const auto e = build_tiny(3, seed).cast<double>();
    const auto net = build_inverse_tiny(build_tiny(3, seed), 3, seed + 7).cast<double>();
    std::vector<TensorD> batch{random_tensor({3, 3, 3}, 100 + seed, 0.0, 1.0),
                               random_tensor({2, 3, 3}, 300 + seed, 0.0, 1.0)};
    bool ok = true;
    for (const auto& h : batch) {
      StackTrace<double> t;
      const auto img = stack_forward<double>(net.layers, h, &t);
      ok = ok && kink_free<double>(net.layers, t) && kink_free<double>(e.layers, encode(img, e).trace.stack);
    }
    if (!ok) continue;
    const double lambda = 1e-6 + 0.1 * static_cast<double>(checked % 2);
    const auto l = inversion_loss<double>(batch, net, e, lambda);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      if (!net.layers[i].spec.has_params()) continue;
      auto probe = net;
      const auto fw = [&](const TensorD& w) {
        probe.layers[i].params.weights = w;
        return inversion_loss<double>(batch, probe, e, lambda, false).loss;
      };
      EXPECT_LT(relative_error(l.param_grads[i].weights, numeric_grad(fw, net.layers[i].params.weights)), 1e-4)
          << "layer " << i;
      probe = net;
      const auto fb = [&](const TensorD& b) {
        probe.layers[i].params.bias = b;
        return inversion_loss<double>(batch, probe, e, lambda, false).loss;
      };
      // Biases feeding instance norm have a true gradient of zero; compare
      // in absolute terms there.
      const auto nb = numeric_grad(fb, net.layers[i].params.bias);
      if (i + 1 < net.layers.size() && net.layers[i + 1].spec.kind == LayerKind::InstanceNorm) {
        EXPECT_LT(max_abs_diff(l.param_grads[i].bias, nb), 1e-6);
      } else {
        EXPECT_LT(relative_error(l.param_grads[i].bias, nb), 1e-4) << "layer " << i;
      }
    }
    ++checked;
  }
  EXPECT_EQ(checked, 5);
}

TEST(InversionLoss, RejectsBadInput) {
  const auto e = build_tiny(4, 3);
  const auto net = build_inverse_tiny(e, 5, 4);
  EXPECT_THROW(inversion_loss<float>({}, net, e, 0.0), ConfigError);
  const std::vector<Tensor> wrong{Tensor::zeros({4, 4, 3})};
  EXPECT_THROW(inversion_loss<float>(wrong, net, e, 0.0), ShapeError);
  const std::vector<Tensor> ok{Tensor::zeros({4, 4, 4})};
  EXPECT_THROW(inversion_loss<float>(ok, net, build_tiny(4, 9), 0.0), ConfigError);
}

TEST(Minibatch, EightSamplesWithAugmentation) {
  const auto d = small_data(6, 16, 1);
  const auto e = build_tiny(4, 1);
  Rng rng(2);
  const auto batch = make_minibatch(d.natural, d.paintings, e, BatchComposition{}, SwapConfig{}, rng);
  ASSERT_EQ(batch.size(), 8u);
  for (const auto& h : batch) EXPECT_EQ(h.shape(), (Shape{8, 8, 4}));
}

TEST(Minibatch, SwappedEntriesArePairSwaps) {
  const auto d = small_data(2, 16, 3);
  const auto e = build_tiny(4, 1);
  const auto batch = assemble_minibatch(d.natural, d.paintings, e, 4, SwapConfig{});
  ASSERT_EQ(batch.size(), 8u);
  std::size_t k = 4;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j, ++k) EXPECT_EQ(batch[k], style_swap(batch[i], batch[2 + j], SwapConfig{}));
}

TEST(Minibatch, SameSeedSameBatch) {
  const auto d = small_data(6, 16, 4);
  const auto e = build_tiny(4, 1);
  Rng a(9), b(9);
  EXPECT_EQ(make_minibatch(d.natural, d.paintings, e, BatchComposition{}, SwapConfig{}, a),
            make_minibatch(d.natural, d.paintings, e, BatchComposition{}, SwapConfig{}, b));
}

TEST(Minibatch, NoAugmentGivesFour) {
  const auto d = small_data(4, 16, 5);
  Rng rng(1);
  const auto batch = make_minibatch(d.natural, d.paintings, build_tiny(4, 1), BatchComposition{2, 2, 0},
                                    SwapConfig{}, rng);
  EXPECT_EQ(batch.size(), 4u);
}

TEST(Minibatch, ExhaustedPoolAndBadComposition) {
  const auto d = small_data(1, 16, 6);
  Rng rng(1);
  EXPECT_THROW(make_minibatch(d.natural, d.paintings, build_tiny(4, 1), BatchComposition{}, SwapConfig{}, rng),
               InputError);
  EXPECT_THROW(BatchComposition({2, 2, 5}).validate(), ConfigError);
}

TEST(TrainConfig, PaperDefaults) {
  const TrainConfig c;
  EXPECT_EQ(c.lambda_tv, 1e-6);
  EXPECT_EQ(c.learning_rate, 1e-3);
  EXPECT_EQ(c.epochs, 2u);
  EXPECT_EQ(c.batch.natural, 2u);
  EXPECT_EQ(c.batch.painting, 2u);
  EXPECT_EQ(c.batch.swapped, 4u);
}

TEST(Train, LossDecreasesAndEncoderFrozen) {
  auto d = small_data(16, 16, 7);
  const auto e = build_tiny(4, 2);
  const auto e_before = e;
  auto net = build_inverse_tiny(e, 8, 3);
  d.validation = make_validation_set(std::span(d.natural).first(2), std::span(d.paintings).first(2), e,
                                     SwapConfig{}, 2);
  TrainConfig c;
  c.learning_rate = 1e-2;
  c.epochs = 3;
  c.validate_every = 4;
  const auto r = train(d, e, net, c);
  EXPECT_EQ(r.step_loss.size(), 24u);
  EXPECT_LT(r.final_loss(), r.initial_loss());
  EXPECT_EQ(e, e_before);
  EXPECT_EQ(r.validation.size(), 6u);
  for (double l : r.step_loss) EXPECT_TRUE(std::isfinite(l));
}

TEST(Train, EmptyPoolRejected) {
  TrainData d;
  d.natural = synthetic_pool(false, 4, 16, 1);
  const auto e = build_tiny(4, 2);
  auto net = build_inverse_tiny(e, 8, 3);
  EXPECT_THROW(train(d, e, net, TrainConfig{}), InputError);
}

TEST(Train, ResumeReproducesLosses) {
  TempDir dir("resume");
  const auto d = small_data(8, 16, 8);
  const auto e = build_tiny(4, 2);
  TrainConfig c;
  c.learning_rate = 1e-2;
  c.epochs = 2;
  c.seed = 5;

  auto full_net = build_inverse_tiny(e, 6, 3);
  const auto full = train(d, e, full_net, c);
  ASSERT_EQ(full.step_loss.size(), 8u);

  auto part_net = build_inverse_tiny(e, 6, 3);
  TrainConfig first = c;
  first.max_steps = 3;
  first.checkpoint_path = dir / "ckpt.sswp";
  const auto part = train(d, e, part_net, first);
  ASSERT_EQ(part.step_loss.size(), 3u);

  auto resumed_net = inverse_net_from_weights(load_weights(dir / "ckpt.sswp"));
  const auto state = decode_train_state(read_file(state_path_for(dir / "ckpt.sswp")));
  EXPECT_EQ(state.step, 3u);
  const auto rest = train(d, e, resumed_net, c, &state);
  ASSERT_EQ(rest.first_step, 3u);
  ASSERT_EQ(rest.step_loss.size(), 5u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(part.step_loss[i], full.step_loss[i]);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(rest.step_loss[i], full.step_loss[3 + i]);
  EXPECT_EQ(resumed_net, full_net);
}

TEST(Train, CheckpointRoundTripKeepsValidationLoss) {
  TempDir dir("ckpt");
  auto d = small_data(4, 16, 9);
  const auto e = build_tiny(4, 2);
  d.validation = make_validation_set(d.natural, d.paintings, e, SwapConfig{}, 3);
  auto net = build_inverse_tiny(e, 6, 3);
  TrainConfig c;
  c.epochs = 1;
  c.checkpoint_path = dir / "n.sswp";
  const auto r = train(d, e, net, c);
  const auto loaded = inverse_net_from_weights(load_weights(dir / "n.sswp"));
  EXPECT_EQ(loaded, net);
  EXPECT_EQ(inversion_loss<float>(d.validation.swapped, loaded, e, c.lambda_tv, false).loss,
            r.validation.back().swapped);
}

TEST(Train, StateCodecRejectsGarbage) {
  TrainState s{7, {{{1.f, 2.f}, {3.f, 4.f}}}};
  const auto bytes = encode_train_state(s);
  const auto back = decode_train_state(bytes);
  EXPECT_EQ(back.step, 7u);
  EXPECT_EQ(back.moments[0].m, s.moments[0].m);
  EXPECT_EQ(back.moments[0].v, s.moments[0].v);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_train_state(extra), FormatError);
  EXPECT_THROW(decode_train_state(std::span(bytes).first(bytes.size() - 1)), FormatError);
}

TEST(ValidationSet, SeparatesRealAndSwapped) {
  const auto d = small_data(3, 16, 10);
  const auto e = build_tiny(4, 2);
  const auto v = make_validation_set(d.natural, d.paintings, e, SwapConfig{}, 50);
  EXPECT_EQ(v.real.size(), 6u);
  EXPECT_EQ(v.swapped.size(), 9u);
  const auto few = make_validation_set(d.natural, d.paintings, e, SwapConfig{}, 4);
  EXPECT_EQ(few.swapped.size(), 4u);
}

TEST(Feedforward, EqualsComposition) {
  Rng rng(11);
  const auto content = synthetic_natural(16, 16, rng), style = synthetic_painting(20, 12, rng);
  const auto e = build_tiny(4, 2);
  const auto net = build_inverse_tiny(e, 6, 3);
  const auto out = feedforward_stylize(content, style, e, net, SwapConfig{});
  const auto ref = invert(style_swap(encode_activations(content, e), encode_activations(style, e), SwapConfig{}), net);
  EXPECT_EQ(out, ref);
  EXPECT_EQ(out.shape(), content.shape());
  EXPECT_EQ(feedforward_stylize(content, style, e, net, SwapConfig{}), out);
  EXPECT_THROW(feedforward_stylize(content, style, build_tiny(4, 5), net, SwapConfig{}), ConfigError);
}

TEST(WeightsRoundTrip, InverseNet) {
  const auto net = build_inverse_tiny(build_tiny(4, 2), 6, 3);
  const auto file = to_weight_file(net);
  EXPECT_EQ(file.role, NetworkRole::InverseNet);
  EXPECT_EQ(inverse_net_from_weights(decode_weight_file(encode_weight_file(file))), net);
  EXPECT_THROW(inverse_net_from_weights(to_weight_file(build_tiny(4, 2))), FormatError);
}
