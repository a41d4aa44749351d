#include "mslabel/cli.hpp"

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "binary_io.hpp"
#include "mslabel/checkpoint.hpp"
#include "mslabel/cost_model.hpp"
#include "mslabel/evaluation.hpp"
#include "mslabel/label_service.hpp"
#include "mslabel/registration.hpp"
#include "mslabel/spectral_io.hpp"
#include "mslabel/superpixel.hpp"
#include "mslabel/synthgen.hpp"
#include "mslabel/training.hpp"

namespace mslabel::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  // demosaic
  std::string demosaic_in, demosaic_out;
  // register
  std::string reg_cube, reg_points, reg_out;
  int reg_width = 0, reg_height = 0, reg_neighbors = 12;
  // stack
  std::string stack_rgb, stack_warped, stack_crop, stack_out;
  // slic
  std::string slic_in, slic_out, slic_boundary;
  std::optional<double> slic_region;
  std::optional<int> slic_count;
  double slic_compactness = 10.0;
  int slic_iterations = 10;
  std::uint64_t slic_seed = 0;
  // synth
  std::size_t synth_train = 30, synth_test = 10;
  std::uint64_t synth_seed = 0;
  int synth_width = 128, synth_height = 128;
  std::string synth_out, synth_template;
  // train
  std::string train_manifest, train_preset = "B", train_spec, train_out, train_history;
  int train_epochs = 100, train_batch = 1, train_precision = 32;
  double train_lr = 1e-3, train_beta1 = 0.9, train_beta2 = 0.999, train_eps = 1e-8;
  std::uint64_t train_seed = 0;
  bool train_rgb_only = false;
  // eval
  std::string eval_manifest, eval_checkpoint, eval_split = "test", eval_out;
  bool eval_full_res = false;
  int eval_precision = 32;
  // cost
  std::string cost_preset = "B", cost_spec, cost_input = "28x541x971", cost_json;
  int cost_classes = 8;
  bool cost_conv_only = false;
  double cost_throughput = 96.0, cost_power = 10.0;
  // pareto
  std::string pareto_in, pareto_out;
  // serve
  std::string serve_frames, serve_state, serve_host = "127.0.0.1", serve_classes;
  int serve_port = 8080;
};

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::write_file_atomic(path, bytes);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::write_text_atomic(path, text);
}

std::vector<std::uint8_t> boundary_pgm(const BinaryMask& mask) {
  const std::string header =
      "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (auto v : mask.values) out.push_back(v ? 0 : 255);
  return out;
}

NetworkSpec load_spec(const std::string& preset_name, const std::string& spec_path, int channels,
                      int classes) {
  if (!spec_path.empty()) return parse_network_spec(detail::read_text(spec_path));
  return preset(preset_name, channels, classes);
}

int cmd_demosaic(const Options& o, std::ostream& out) {
  const auto frame = read_mosaic(o.demosaic_in);
  const auto cube = demosaic_cube(frame);
  fs::path dst = o.demosaic_out;
  if (dst.empty()) dst = fs::path(o.demosaic_in).replace_extension(".msc");
  write_cube(dst, cube);
  out << "wrote " << dst.string() << " (" << cube.channels() << "x" << cube.height() << "x"
      << cube.width() << ")\n";
  return 0;
}

int cmd_register(const Options& o, std::ostream& out) {
  const auto cube = read_cube(o.reg_cube);
  const auto model = fit_lwmt(read_control_points(o.reg_points), o.reg_neighbors);
  const auto warped = warp_cube(cube, model, o.reg_width, o.reg_height);
  write_cube(o.reg_out, warped);
  out << "wrote " << o.reg_out << " (" << warped.channels() << "x" << warped.height() << "x"
      << warped.width() << ")\n";
  return 0;
}

int cmd_stack(const Options& o, std::ostream& out) {
  const auto stacked =
      crop_and_stack(read_cube(o.stack_rgb), read_cube(o.stack_warped), read_crop_rect(o.stack_crop));
  write_cube(o.stack_out, stacked);
  out << "wrote " << o.stack_out << " (" << stacked.channels() << "x" << stacked.height() << "x"
      << stacked.width() << ")\n";
  return 0;
}

int cmd_slic(const Options& o, std::ostream& out) {
  SlicParams p;
  p.region_size = o.slic_region;
  p.target_count = o.slic_count;
  p.compactness = o.slic_compactness;
  p.iterations = o.slic_iterations;
  p.seed = o.slic_seed;
  const auto seg = slic_segment(read_cube(o.slic_in), p);
  write_bytes(o.slic_out, encode_segmentation(seg));
  if (!o.slic_boundary.empty()) write_bytes(o.slic_boundary, boundary_pgm(boundary_mask(seg)));
  out << "wrote " << o.slic_out << " (" << seg.count << " superpixels)\n";
  return 0;
}

int cmd_synth(const Options& o, std::ostream& out) {
  auto tpl = o.synth_template.empty()
                 ? default_scene_template(o.synth_width, o.synth_height)
                 : parse_scene_spec(detail::read_text(o.synth_template));
  const auto manifest = generate_dataset(o.synth_train, o.synth_test, tpl, o.synth_seed, o.synth_out);
  out << "wrote " << manifest.frames.size() << " frames ("
      << manifest.count(Split::train) << " train, " << manifest.count(Split::test) << " test) to "
      << o.synth_out << "\n";
  return 0;
}

template <typename Scalar>
int train_with(const Options& o, const DatasetManifest& manifest, const NetworkSpec& spec,
               const TrainConfig& config, std::ostream& out) {
  const fs::path dir = !o.train_out.empty()
                           ? fs::path(o.train_out)
                           : fs::path(o.train_manifest).parent_path() / "checkpoint";
  const fs::path history_path =
      o.train_history.empty() ? dir / "history.jsonl" : fs::path(o.train_history);
  auto result = train<Scalar>(manifest, spec, config, nullptr, [&](const EpochRecord& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d  loss %.6f  train_err %.4f", e.epoch, e.train_loss,
                  e.train_err);
    out << buf;
    if (e.test_err) {
      std::snprintf(buf, sizeof buf, "  test_err %.4f", *e.test_err);
      out << buf;
    }
    out << "\n";
  });
  save_network(dir, result.network);
  write_text(history_path, result.history.to_jsonl());
  out << "wrote " << dir.string() << " and " << history_path.string() << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto manifest = read_manifest(o.train_manifest);
  const auto train_frames = manifest.subset(Split::train);
  require(!train_frames.empty(), ErrorCategory::invalid_input, "training split is empty");
  const int channels = o.train_rgb_only ? 3 : read_cube(train_frames.front().cube).channels();
  const auto spec = load_spec(o.train_preset, o.train_spec, channels, 8);
  TrainConfig config;
  config.epochs = o.train_epochs;
  config.adam = {o.train_lr, o.train_beta1, o.train_beta2, o.train_eps};
  config.batch_size = o.train_batch;
  config.seed = o.train_seed;
  config.rgb_only = o.train_rgb_only;
  if (o.train_precision == 64) return train_with<double>(o, manifest, spec, config, out);
  return train_with<float>(o, manifest, spec, config, out);
}

template <typename Scalar>
int eval_with(const Options& o, std::ostream& out) {
  auto net = load_network<Scalar>(o.eval_checkpoint);
  const auto& spec = net.spec();
  const auto manifest = read_manifest(o.eval_manifest);
  const int stride = output_stride(spec);
  std::vector<LabelMap> preds, gts;
  std::vector<ClassInfo> palette;
  for (const auto& f : manifest.frames) {
    if (o.eval_split != "all" && (f.split == Split::train) != (o.eval_split == "train")) continue;
    const auto cube = read_cube(f.cube);
    auto gt = read_labels(f.labels);
    if (palette.empty()) palette = gt.palette;
    const bool rgb_only = spec.input_channels == 3 && cube.channels() > 3;
    require(rgb_only || cube.channels() == spec.input_channels, ErrorCategory::invalid_input,
            "frame '" + f.id + "' has " + std::to_string(cube.channels()) +
                " channels; network expects " + std::to_string(spec.input_channels));
    auto pred = predict_labels(net.forward(cube_to_tensor<Scalar>(cube, rgb_only)));
    if (o.eval_full_res) {
      pred = upsample_nearest(pred, gt.width, gt.height);
    } else {
      gt = downsample_labels(gt, stride);
    }
    require(pred.width == gt.width && pred.height == gt.height, ErrorCategory::shape,
            "prediction size does not match ground truth for frame '" + f.id + "'");
    preds.push_back(std::move(pred));
    gts.push_back(std::move(gt));
  }
  require(!gts.empty(), ErrorCategory::invalid_input, "no frames in split '" + o.eval_split + "'");
  const auto cm = confusion_matrix(preds, gts, spec.output_classes);
  const auto report =
      evaluation_report_json(cm, palette, o.eval_full_res ? "full_resolution_nearest" : "output_resolution");
  if (o.eval_out.empty()) {
    out << report;
  } else {
    write_text(o.eval_out, report);
    char buf[96];
    std::snprintf(buf, sizeof buf, "error_rate %.6f over %lld pixels\n", cm.error_rate(),
                  static_cast<long long>(cm.total()));
    out << buf << "wrote " << o.eval_out << "\n";
  }
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  return o.eval_precision == 64 ? eval_with<double>(o, out) : eval_with<float>(o, out);
}

int cmd_cost(const Options& o, std::ostream& out) {
  const auto dims = parse_dims(o.cost_input);
  const auto spec =
      load_spec(o.cost_preset, o.cost_spec, static_cast<int>(dims[0]), o.cost_classes);
  const auto report = count_ops(spec, dims, o.cost_conv_only);
  const PlatformSpec platform{o.cost_throughput, o.cost_power};
  require(platform.throughput_gops > 0, ErrorCategory::invalid_input, "throughput must be positive");
  out << cost_report_table(report, &platform);
  if (!o.cost_json.empty()) write_text(o.cost_json, cost_report_json(report, &platform));
  return 0;
}

int cmd_pareto(const Options& o, std::ostream& out) {
  const auto front = pareto_front(parse_pareto_csv(detail::read_text(o.pareto_in)));
  const auto csv = pareto_csv(front);
  if (o.pareto_out.empty())
    out << csv;
  else
    write_text(o.pareto_out, csv);
  return 0;
}

int cmd_serve(const Options& o, std::ostream& out) {
  const fs::path state = o.serve_state.empty() ? fs::path(o.serve_frames) / "label_state"
                                               : fs::path(o.serve_state);
  auto palette = o.serve_classes.empty() ? default_palette()
                                         : parse_palette_json(detail::read_text(o.serve_classes));
  LabelStore store(o.serve_frames, state, std::move(palette));
  LabelServer server(store);
  const int port = server.bind(o.serve_host, o.serve_port);
  out << "listening on http://" << o.serve_host << ":" << port << "/api/\n" << std::flush;
  return server.run() ? 0 : 1;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multispectral scene labeling toolkit", "mslabel"};
  app.require_subcommand(1);
  Options o;

  auto* demosaic = app.add_subcommand("demosaic", "Unpack a 5x5 mosaic frame (MSQ1) into a cube (MSC1)");
  demosaic->add_option("input", o.demosaic_in, "Mosaic frame")->required();
  demosaic->add_option("-o,--out", o.demosaic_out, "Output cube (default: input with .msc)");

  auto* reg = app.add_subcommand("register", "Fit a local weighted mean warp and resample a cube");
  reg->add_option("--cube", o.reg_cube, "Cube to warp")->required();
  reg->add_option("--points", o.reg_points, "Control points JSON")->required();
  reg->add_option("--width", o.reg_width, "Output width")->required()->check(CLI::PositiveNumber);
  reg->add_option("--height", o.reg_height, "Output height")->required()->check(CLI::PositiveNumber);
  reg->add_option("--neighbors", o.reg_neighbors, "Points per local polynomial")
      ->capture_default_str();
  reg->add_option("-o,--out", o.reg_out, "Output cube")->required();

  auto* stack = app.add_subcommand("stack", "Crop and stack RGB and warped spectral channels");
  stack->add_option("--rgb", o.stack_rgb, "3-channel RGB cube")->required();
  stack->add_option("--warped", o.stack_warped, "Registered spectral cube")->required();
  stack->add_option("--crop", o.stack_crop, "Crop rectangle JSON")->required();
  stack->add_option("-o,--out", o.stack_out, "Output cube")->required();

  auto* slic = app.add_subcommand("slic", "Compute SLIC superpixels of a cube");
  slic->add_option("input", o.slic_in, "Input cube")->required();
  auto* region = slic->add_option("--region", o.slic_region, "Grid interval S in pixels");
  auto* count = slic->add_option("--count", o.slic_count, "Target superpixel count k");
  region->excludes(count);
  slic->add_option("--compactness", o.slic_compactness, "Compactness m")->capture_default_str();
  slic->add_option("--iterations", o.slic_iterations, "Assignment iterations")->capture_default_str();
  slic->add_option("--seed", o.slic_seed, "Grid phase seed (0 = centered)")->capture_default_str();
  slic->add_option("-o,--out", o.slic_out, "Output segmentation (SEG1)")->required();
  slic->add_option("--boundary", o.slic_boundary, "Optional boundary image (PGM)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  synth->add_option("--train", o.synth_train, "Training frames")->capture_default_str();
  synth->add_option("--test", o.synth_test, "Test frames")->capture_default_str();
  synth->add_option("--seed", o.synth_seed, "Random seed")->capture_default_str();
  synth->add_option("--width", o.synth_width, "Frame width")->capture_default_str();
  synth->add_option("--height", o.synth_height, "Frame height")->capture_default_str();
  synth->add_option("--template", o.synth_template, "Scene spec JSON (default: built-in street)");
  synth->add_option("--out", o.synth_out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a network on a dataset manifest");
  tr->add_option("--manifest", o.train_manifest, "Dataset manifest")->required();
  auto* tr_preset = tr->add_option("--preset", o.train_preset, "Network preset (A, B, C1, C2)")
                        ->capture_default_str();
  tr->add_option("--spec", o.train_spec, "Network spec JSON")->excludes(tr_preset);
  tr->add_option("--epochs", o.train_epochs, "Epochs")->capture_default_str();
  tr->add_option("--lr", o.train_lr, "Adam learning rate")->capture_default_str();
  tr->add_option("--beta1", o.train_beta1, "Adam beta1")->capture_default_str();
  tr->add_option("--beta2", o.train_beta2, "Adam beta2")->capture_default_str();
  tr->add_option("--eps", o.train_eps, "Adam epsilon")->capture_default_str();
  tr->add_option("--batch-size", o.train_batch, "Frames per step")->capture_default_str();
  tr->add_option("--seed", o.train_seed, "Random seed")->capture_default_str();
  tr->add_option("--precision", o.train_precision, "Float width (32 or 64)")
      ->check(CLI::IsMember({32, 64}))
      ->capture_default_str();
  tr->add_flag("--rgb-only", o.train_rgb_only, "Use channels 0-2 only");
  tr->add_option("--out", o.train_out, "Checkpoint directory (default: <manifest dir>/checkpoint)");
  tr->add_option("--history", o.train_history, "History JSONL (default: <out>/history.jsonl)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  ev->add_option("--manifest", o.eval_manifest, "Dataset manifest")->required();
  ev->add_option("--checkpoint", o.eval_checkpoint, "Checkpoint directory")->required();
  ev->add_option("--split", o.eval_split, "Frames to evaluate")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  ev->add_flag("--full-resolution", o.eval_full_res,
               "Upsample predictions (nearest) instead of downsampling ground truth");
  ev->add_option("--precision", o.eval_precision, "Float width (32 or 64)")
      ->check(CLI::IsMember({32, 64}))
      ->capture_default_str();
  ev->add_option("-o,--out", o.eval_out, "Report JSON (default: stdout)");

  auto* cost = app.add_subcommand("cost", "Count operations and project frame rates");
  auto* cost_preset = cost->add_option("--preset", o.cost_preset, "Network preset (A, B, C1, C2)")
                          ->capture_default_str();
  cost->add_option("--spec", o.cost_spec, "Network spec JSON")->excludes(cost_preset);
  cost->add_option("--input", o.cost_input, "Input size CxHxW")->capture_default_str();
  cost->add_option("--classes", o.cost_classes, "Output classes for presets")->capture_default_str();
  cost->add_flag("--conv-only", o.cost_conv_only, "Count convolutions only");
  cost->add_option("--throughput", o.cost_throughput, "Platform GOP/s")->capture_default_str();
  cost->add_option("--power", o.cost_power, "Platform power in W")->capture_default_str();
  cost->add_option("--json", o.cost_json, "Also write the report as JSON");

  auto* pareto = app.add_subcommand("pareto", "Extract the error/compute Pareto front");
  pareto->add_option("input", o.pareto_in, "CSV with label,error_rate,gop")->required();
  pareto->add_option("-o,--out", o.pareto_out, "Output CSV (default: stdout)");

  auto* serve = app.add_subcommand("serve", "Run the labeling HTTP service");
  serve->add_option("--frames", o.serve_frames, "Directory of .msc frames")->required();
  serve->add_option("--state", o.serve_state, "Label storage (default: <frames>/label_state)");
  serve->add_option("--classes", o.serve_classes, "Palette JSON (default: built-in 8 classes)");
  serve->add_option("--host", o.serve_host, "Bind address")->capture_default_str();
  serve->add_option("--port", o.serve_port, "Port (0 = any free port)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const auto* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    out << target->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*demosaic) return cmd_demosaic(o, out);
    if (*reg) return cmd_register(o, out);
    if (*stack) return cmd_stack(o, out);
    if (*slic) return cmd_slic(o, out);
    if (*synth) return cmd_synth(o, out);
    if (*tr) return cmd_train(o, out);
    if (*ev) return cmd_eval(o, out);
    if (*cost) return cmd_cost(o, out);
    if (*pareto) return cmd_pareto(o, out);
    if (*serve) return cmd_serve(o, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.category()) << ": " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace mslabel::cli
