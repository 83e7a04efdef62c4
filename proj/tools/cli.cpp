#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <future>
#include <iomanip>
#include <ostream>
#include <regex>
#include <thread>

#include <CLI11.hpp>

#include "styleswap/csv.hpp"
#include "styleswap/inverse_net.hpp"
#include "styleswap/io.hpp"
#include "styleswap/style_swap.hpp"
#include "styleswap/stylize.hpp"

namespace fs = std::filesystem;

namespace styleswap::cli {

namespace {

struct SwapFlags {
  std::size_t patch_size = 3;
  std::size_t stride = 1;
  bool average_ties = false;

  SwapConfig config() const {
    SwapConfig c;
    c.patch_size = patch_size;
    c.stride = stride;
    c.average_ties = average_ties;
    c.validate();
    return c;
  }
};

void add_swap_flags(CLI::App* cmd, SwapFlags& f) {
  cmd->add_option("--patch-size", f.patch_size, "Patch size in activation cells")->capture_default_str();
  cmd->add_option("--stride", f.stride, "Patch stride")->capture_default_str();
  cmd->add_flag("--average-ties", f.average_ties, "Average tied best matches instead of taking the lowest index");
}

std::size_t parse_count(const std::string& text, const std::string& spec) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty()) throw ConfigError("bad number '" + text + "' in encoder spec '" + spec + "'");
  return static_cast<std::size_t>(v);
}

/// Images in `dir`, as for datasets, for --frames.
std::vector<fs::path> frame_list(const fs::path& dir) {
  auto listing = enumerate_dataset(dir);
  if (listing.images.empty()) throw InputError("frame folder '" + dir.string() + "' has no decodable images");
  return listing.images;
}

/// Runs fn(i) for i in [0, n) on a few worker threads. The first exception
/// is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> pending;
  for (std::size_t w = 0; w < workers; ++w) {
    pending.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    }));
  }
  std::exception_ptr first;
  for (auto& p : pending) {
    try {
      p.get();
    } catch (...) {
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
}

fs::path frame_output(const fs::path& out_dir, const fs::path& frame, const fs::path& out_flag) {
  fs::path name = frame.filename();
  const std::string ext = out_flag.has_extension() ? out_flag.extension().string() : ".png";
  name.replace_extension(ext == ".ppm" ? ".ppm" : ".png");
  return out_dir / name;
}

void print_stats(std::ostream& out, const SwapStats& s) {
  out << "content patches: " << s.content_patches << "\n"
      << "style patches: " << s.style_patches << "\n"
      << "distinct style patches used: " << s.distinct_used << "\n"
      << "mean correlation: " << std::setprecision(6) << s.mean_correlation << "\n";
}

// ---------------------------------------------------------------------------

struct SwapCommand {
  std::string content, style, out, encoder = "identity";
  SwapFlags swap;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("swap", "Style swap in activation space and report match statistics");
    cmd->add_option("--content", content, "Content image")->required();
    cmd->add_option("--style", style, "Style image")->required();
    cmd->add_option("--out", out, "Output: an image for the identity encoder, otherwise an SSTN tensor")->required();
    cmd->add_option("--encoder", encoder, "identity | tiny[:ch[:seed]] | vgg | file:PATH")->capture_default_str();
    add_swap_flags(cmd, swap);
  }

  int run(std::ostream& o) const {
    const Encoder e = resolve_encoder(encoder);
    const Tensor c = encode_activations(load_image(content), e);
    const Tensor s = encode_activations(load_image(style), e);
    const auto result = style_swap_detailed(c, s, swap.config());
    if (e.layers.empty()) {
      save_image(out, result.output);
    } else {
      write_file(out, encode_tensor_file(result.output));
    }
    o << "encoder: " << e.name << "\n";
    print_stats(o, result.stats);
    return kExitOk;
  }
};

struct StylizeCommand {
  std::string content, style, out, encoder = "identity", report, frames;
  SwapFlags swap;
  double tv_weight = 1e-6;
  std::size_t iters = 100;
  double lr = 0.05;
  std::string init = "content";
  std::uint64_t seed = 0;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("stylize", "Optimise an image toward style-swapped activations");
    cmd->add_option("--content", content, "Content image");
    cmd->add_option("--style", style, "Style image")->required();
    cmd->add_option("--out", out, "Output image (a directory with --frames)")->required();
    cmd->add_option("--encoder", encoder, "identity | tiny[:ch[:seed]] | vgg | file:PATH")->capture_default_str();
    add_swap_flags(cmd, swap);
    cmd->add_option("--tv-weight", tv_weight, "Total variation weight")->capture_default_str();
    cmd->add_option("--iters", iters, "Adam iterations")->capture_default_str();
    cmd->add_option("--lr", lr, "Adam step size")->capture_default_str();
    cmd->add_option("--init", init, "content | random")
        ->check(CLI::IsMember({"content", "random"}))
        ->capture_default_str();
    cmd->add_option("--seed", seed, "Seed for random initialisation")->capture_default_str();
    cmd->add_option("--report", report, "Per-iteration CSV");
    cmd->add_option("--frames", frames, "Stylize every image in this folder instead of --content");
  }

  OptimConfig config() const {
    OptimConfig c;
    c.lambda_tv = tv_weight;
    c.max_iters = iters;
    c.step = lr;
    c.init = init == "random" ? InitMode::Random : InitMode::Content;
    c.seed = seed;
    c.validate();
    return c;
  }

  int run(std::ostream& o) const {
    const Encoder e = resolve_encoder(encoder);
    const Tensor s = load_image(style);
    const OptimConfig oc = config();
    const SwapConfig sc = swap.config();
    if (!frames.empty()) {
      const auto list = frame_list(frames);
      fs::create_directories(out);
      parallel_for(list.size(), [&](std::size_t i) {
        const auto r = optimize(load_image(list[i]), s, e, sc, oc);
        save_image(frame_output(out, list[i], fs::path{}), r.final_image);
      });
      o << "stylized " << list.size() << " frames into " << out << "\n";
      return kExitOk;
    }
    if (content.empty()) throw ConfigError("stylize needs --content or --frames");
    const auto r = optimize(load_image(content), s, e, sc, oc);
    save_image(out, r.final_image);
    if (!report.empty()) r.write_csv(report);
    o << "iterations: " << oc.max_iters << "\n"
      << "initial loss: " << r.history.front().loss.total << "\n"
      << "final loss: " << r.history.back().loss.total << "\n"
      << "seconds: " << r.seconds << "\n";
    return kExitOk;
  }
};

struct TrainCommand {
  std::string natural, paintings, encoder = "tiny", out, resume, report;
  std::size_t epochs = 2, image_size = 256, hidden = 16, max_steps = 0, checkpoint_every = 0, validate_every = 0;
  std::size_t val_swapped = 50;
  double lr = 1e-3, tv_weight = 1e-6, holdout = 0.1;
  std::uint64_t seed = 0;
  bool no_augment = false;
  SwapFlags swap;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("train-inverse", "Train an inverse network for an encoder");
    cmd->add_option("--natural", natural, "Folder of natural images")->required();
    cmd->add_option("--paintings", paintings, "Folder of paintings")->required();
    cmd->add_option("--encoder", encoder, "identity | tiny[:ch[:seed]] | vgg | file:PATH")->capture_default_str();
    cmd->add_option("--out", out, "Checkpoint path (weight file; optimizer state goes to PATH.state)")->required();
    cmd->add_option("--epochs", epochs)->capture_default_str();
    cmd->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--tv-weight", tv_weight)->capture_default_str();
    cmd->add_option("--image-size", image_size, "Images are resized to this square size")->capture_default_str();
    cmd->add_option("--seed", seed)->capture_default_str();
    cmd->add_flag("--no-augment", no_augment, "Train without style-swapped activations");
    cmd->add_option("--hidden", hidden, "Hidden channels of the tiny inverse net")->capture_default_str();
    cmd->add_option("--holdout", holdout, "Fraction of each folder held out for validation")
        ->check(CLI::Range(0.0, 0.9))
        ->capture_default_str();
    cmd->add_option("--val-swapped", val_swapped, "Held-out style-swapped validation pairs")->capture_default_str();
    cmd->add_option("--validate-every", validate_every, "Validate every n steps (0: at the end)");
    cmd->add_option("--checkpoint-every", checkpoint_every, "Checkpoint every n steps (0: at the end)");
    cmd->add_option("--max-steps", max_steps, "Stop after this many global steps");
    cmd->add_option("--resume", resume, "Resume from this checkpoint");
    cmd->add_option("--report", report, "Per-step CSV");
    add_swap_flags(cmd, swap);
  }

  static std::vector<Tensor> load_pool(const std::string& dir, std::size_t size) {
    const auto listing = enumerate_dataset(dir);
    if (listing.images.empty()) throw InputError("dataset folder '" + dir + "' has no decodable images");
    return load_dataset(listing, size);
  }

  int run(std::ostream& o) const {
    const Encoder e = resolve_encoder(encoder);
    auto nat = load_pool(natural, image_size);
    auto paint = load_pool(paintings, image_size);
    const SwapConfig sc = swap.config();

    const auto held = [this](std::size_t n) { return static_cast<std::size_t>(holdout * static_cast<double>(n)); };
    const std::size_t hn = held(nat.size()), hp = held(paint.size());
    TrainData data;
    data.natural.assign(nat.begin(), nat.end() - static_cast<std::ptrdiff_t>(hn));
    data.paintings.assign(paint.begin(), paint.end() - static_cast<std::ptrdiff_t>(hp));
    data.validation = make_validation_set(std::span(nat).last(hn), std::span(paint).last(hp), e, sc, val_swapped);

    TrainConfig tc;
    tc.lambda_tv = tv_weight;
    tc.learning_rate = lr;
    tc.epochs = epochs;
    tc.swap = sc;
    tc.seed = seed;
    tc.checkpoint_every = checkpoint_every;
    tc.checkpoint_path = out;
    tc.validate_every = validate_every;
    tc.max_steps = max_steps;
    if (no_augment) tc.batch.swapped = 0;

    InverseNet net;
    TrainState state;
    const TrainState* resume_state = nullptr;
    if (!resume.empty()) {
      net = inverse_net_from_weights(load_weights(resume));
      state = decode_train_state(read_file(state_path_for(resume)));
      resume_state = &state;
    } else if (e.name == kVgg19Name) {
      net = build_inverse_vgg19(seed);
    } else {
      net = build_inverse_tiny(e, hidden, seed);
    }

    const TrainReport r = train(data, e, net, tc, resume_state);
    if (!report.empty()) r.write_csv(report);
    o << "encoder: " << e.name << "\n"
      << "training images: " << data.natural.size() << " natural, " << data.paintings.size() << " paintings\n"
      << "held out: " << hn << " natural, " << hp << " paintings, " << data.validation.swapped.size()
      << " swapped pairs\n"
      << "steps: " << r.step_loss.size() << " (from step " << r.first_step << ")\n";
    if (!r.step_loss.empty()) {
      o << "initial loss: " << r.initial_loss() << "\n"
        << "final loss: " << r.final_loss() << "\n";
    }
    if (!r.validation.empty()) {
      o << "validation real: " << r.validation.back().real << "\n"
        << "validation swapped: " << r.validation.back().swapped << "\n";
    }
    o << "checkpoint: " << out << "\n";
    return kExitOk;
  }
};

struct FeedforwardCommand {
  std::string content, style, net, out, encoder, frames;
  SwapFlags swap;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("feedforward", "Encode, style swap and invert in one pass");
    cmd->add_option("--content", content, "Content image");
    cmd->add_option("--style", style, "Style image")->required();
    cmd->add_option("--net", net, "Inverse network checkpoint")->required();
    cmd->add_option("--out", out, "Output image (a directory with --frames)")->required();
    cmd->add_option("--encoder", encoder, "Encoder spec; defaults to the one named in the checkpoint");
    cmd->add_option("--frames", frames, "Process every image in this folder instead of --content");
    add_swap_flags(cmd, swap);
  }

  int run(std::ostream& o) const {
    const InverseNet inv = inverse_net_from_weights(load_weights(net));
    const Encoder e = encoder.empty() ? encoder_for_paired_name(inv.paired_encoder) : resolve_encoder(encoder);
    check_pairing(inv, e);
    const Tensor s = load_image(style);
    const SwapConfig sc = swap.config();
    if (!frames.empty()) {
      const auto list = frame_list(frames);
      fs::create_directories(out);
      parallel_for(list.size(), [&](std::size_t i) {
        save_image(frame_output(out, list[i], fs::path{}), feedforward_stylize(load_image(list[i]), s, e, inv, sc));
      });
      o << "processed " << list.size() << " frames into " << out << "\n";
      return kExitOk;
    }
    if (content.empty()) throw ConfigError("feedforward needs --content or --frames");
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor img = feedforward_stylize(load_image(content), s, e, inv, sc);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_image(out, img);
    o << "encoder: " << e.name << "\n"
      << "net: " << inv.name << "\n"
      << "seconds: " << secs << "\n";
    return kExitOk;
  }
};

struct BenchCommand {
  std::string mode = "style-size", out, encoder = "tiny";
  std::vector<std::size_t> sizes{32, 64, 128};
  std::size_t base_size = 64, repeats = 1;
  std::uint64_t seed = 0;
  SwapFlags swap;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("bench", "Time the pipeline phases");
    cmd->add_option("--mode", mode, "style-size | content-size | matcher")
        ->check(CLI::IsMember({"style-size", "content-size", "matcher"}))
        ->capture_default_str();
    cmd->add_option("--sizes", sizes, "Comma-separated image sizes")->delimiter(',')->capture_default_str();
    cmd->add_option("--out", out, "CSV output")->required();
    cmd->add_option("--encoder", encoder, "identity | tiny[:ch[:seed]] | vgg | file:PATH")->capture_default_str();
    cmd->add_option("--base-size", base_size, "Size of the image that is held fixed")->capture_default_str();
    cmd->add_option("--repeats", repeats, "Repetitions per measurement (minimum is reported)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--seed", seed)->capture_default_str();
    add_swap_flags(cmd, swap);
  }

  template <typename F>
  double time_min(F&& fn) const {
    double best = 1e300;
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  }

  int run(std::ostream& o) const;
};

int BenchCommand::run(std::ostream& o) const {
  if (sizes.empty()) throw ConfigError("bench needs at least one size");
  const Encoder e = resolve_encoder(encoder);
  const SwapConfig sc = swap.config();
  const bool can_decode = !e.layers.empty();
  InverseNet inv;
  if (can_decode) inv = e.name == kVgg19Name ? build_inverse_vgg19(seed) : build_inverse_tiny(e, 16, seed);

  Rng rng(seed);
  CsvWriter csv({"size", "phase", "seconds", "style_patches"});
  for (std::size_t size : sizes) {
    const std::size_t ch = mode == "content-size" ? size : base_size;
    const std::size_t sh = mode == "style-size" || mode == "matcher" ? size : base_size;
    const Tensor content = random_uniform<float>({ch, ch, 3}, 0.f, 1.f, rng);
    const Tensor style = random_uniform<float>({sh, sh, 3}, 0.f, 1.f, rng);
    Tensor ca, sa, swapped;
    const double t_encode = time_min([&] {
      ca = encode_activations(content, e);
      sa = encode_activations(style, e);
    });
    sc.validate_for(sa.shape());
    const std::size_t patches =
        patch_grid_extent(sa.height(), sc.patch_size, sc.stride) * patch_grid_extent(sa.width(), sc.patch_size, sc.stride);
    if (mode == "matcher") {
      const double fast = time_min([&] { swapped = style_swap(ca, sa, sc); });
      const double brute = time_min([&] { swapped = brute_force_style_swap(ca, sa, sc); });
      csv.add(size, "fast", fast, patches);
      csv.add(size, "brute_force", brute, patches);
      o << "size " << size << ": fast " << fast << " s, brute force " << brute << " s\n";
      continue;
    }
    const double t_swap = time_min([&] { swapped = style_swap(ca, sa, sc); });
    csv.add(size, "encode", t_encode, patches);
    csv.add(size, "swap", t_swap, patches);
    o << "size " << size << ": encode " << t_encode << " s, swap " << t_swap << " s";
    if (can_decode) {
      const double t_decode = time_min([&] { invert(swapped, inv); });
      csv.add(size, "decode", t_decode, patches);
      o << ", decode " << t_decode << " s";
    }
    o << " (" << patches << " style patches)\n";
  }
  csv.save(out);
  return kExitOk;
}

}  // namespace

Encoder resolve_encoder(const std::string& spec) {
  if (spec == "identity") return build_identity();
  if (spec == "vgg" || spec == "vgg19") return build_truncated_vgg19();
  if (spec.rfind("file:", 0) == 0) return encoder_from_weights(load_weights(spec.substr(5)));
  if (spec == "tiny" || spec.rfind("tiny:", 0) == 0) {
    std::size_t channels = 8;
    std::uint64_t seed = 0;
    if (spec.size() > 4) {
      const std::string rest = spec.substr(5);
      const auto colon = rest.find(':');
      channels = parse_count(rest.substr(0, colon), spec);
      if (colon != std::string::npos) seed = parse_count(rest.substr(colon + 1), spec);
    }
    return build_tiny(channels, seed);
  }
  throw ConfigError("unknown encoder '" + spec + "' (use identity, tiny[:ch[:seed]], vgg or file:PATH)");
}

Encoder encoder_for_paired_name(const std::string& name) {
  if (name == kIdentityName) return build_identity();
  if (name == kVgg19Name) return build_truncated_vgg19();
  static const std::regex tiny(R"(tiny(\d+)-seed(\d+))");
  std::smatch m;
  if (std::regex_match(name, m, tiny)) return build_tiny(std::stoull(m[1].str()), std::stoull(m[2].str()));
  throw ConfigError("checkpoint is paired with encoder '" + name + "', which is not built in; pass --encoder file:PATH");
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Patch-based style swap: activation-space style transfer"};
  app.name("styleswap");
  app.require_subcommand(1);
  SwapCommand swap;
  StylizeCommand stylize;
  TrainCommand train_cmd;
  FeedforwardCommand feedforward;
  BenchCommand bench;
  swap.attach(app);
  stylize.attach(app);
  train_cmd.attach(app);
  feedforward.attach(app);
  bench.attach(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (app.got_subcommand("swap")) return swap.run(out);
    if (app.got_subcommand("stylize")) return stylize.run(out);
    if (app.got_subcommand("train-inverse")) return train_cmd.run(out);
    if (app.got_subcommand("feedforward")) return feedforward.run(out);
    if (app.got_subcommand("bench")) return bench.run(out);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace styleswap::cli
