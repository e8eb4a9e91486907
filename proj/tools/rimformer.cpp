#include "rim/checkpoint.hpp"
#include "rim/dataset.hpp"
#include "rim/errors.hpp"
#include "rim/evaluation.hpp"
#include "rim/fft.hpp"
#include "rim/model.hpp"
#include "rim/radar_sim.hpp"
#include "rim/rimt.hpp"
#include "rim/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rim;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kArtifact = 4, kNumerical = 5 };

// JSON config files: top-level keys are long flag names without dashes and
// apply to the subcommand being run.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames()[0];
      if (opt->count() > 0)
        j[name] = opt->results().size() == 1 ? json(opt->results()[0]) : json(opt->results());
      else if (default_also && !opt->get_default_str().empty())
        j[name] = opt->get_default_str();
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError("config: " + std::string(e.what()));
    }
    if (!j.is_object()) throw CLI::ConversionError("config: expected a JSON object");
    std::vector<std::string> parents;
    if (const auto subs = root_->get_subcommands(); !subs.empty()) parents.push_back(subs.front()->get_name());
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      auto scalar = [](const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
        return v.dump();
      };
      if (value.is_array())
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  const CLI::App* root_;
};

Tensor load_signal(const fs::path& path) {
  const RimtArray a = load_rimt(path);
  return from_rimt(a);
}

// [n, 2] (I, Q) or [n, 1] real channels as a complex signal.
ComplexSignal to_complex(const Tensor& t, double fs) {
  if (t.rank() != 2 || (t.dim(1) != 2 && t.dim(1) != 1))
    throw std::invalid_argument("expected a [n, 2] or [n, 1] signal, got " + shape_string(t.shape()));
  return ComplexSignal::from_channels(t.value(), fs);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << text;
  if (!os.flush()) throw IoError("write failed: " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double range_of_frequency(double f, const ChirpParams& p) { return f * kSpeedOfLight / (2.0 * p.slope); }

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  Index n = 8000;
  fs::path out;
  std::uint64_t seed = 0;
  std::string split = "8:1:1";
  Index samples = 1024;
  bool real = false;
};

int run_gen_data(const GenDataArgs& a) {
  const auto ratios = SplitRatios::parse(a.split);
  DatasetOptions options = dataset_options_for_length(a.samples);
  options.channels = a.real ? 1 : 2;
  const auto m = generate_dataset(a.n, a.out, ratios, a.seed, options);
  std::cout << "generated " << m.samples.size() << " pairs of " << m.sim.n_samples << " samples in " << a.out.string()
            << "\n  train " << m.count(Split::train) << "  val " << m.count(Split::val) << "  test "
            << m.count(Split::test) << "\n  master seed " << m.master_seed << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  fs::path data;
  std::string profile = "tiny";
  Index epochs = 500;
  std::uint64_t seed = 0;
  fs::path out;
  Index batch_size = 16;
  double lr = 1e-4;
  double lr_min = 1e-6;
  Index t0 = 50;
  Index t_mult = 2;
  double lambda = 0.3;
  std::string spectrum = "magnitude";
  Index checkpoint_every = 10;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  const LoadedDataset data = load_dataset(a.data);
  const Index n = data.manifest.sim.n_samples;
  ModelConfig model = a.profile == "full" ? ModelConfig::full(n) : ModelConfig::tiny(n);
  model.in_channels = data.manifest.channels;
  model.validate();
  LossConfig loss{a.lambda, a.spectrum == "complex" ? SpectrumMode::complex : SpectrumMode::magnitude};
  ScheduleConfig sched{a.lr, a.lr_min, a.t0, a.t_mult};
  TrainOptions opt;
  opt.epochs = a.epochs;
  opt.batch_size = a.batch_size;
  opt.seed = a.seed;
  opt.out_dir = a.out;
  opt.checkpoint_every = a.checkpoint_every;
  if (!a.quiet)
    opt.on_epoch = [](const EpochLog& r) {
      std::printf("epoch %4lld  train %.6g  val %.6g  mse %.4g  sinr %.2f dB  lr %.3g\n", static_cast<long long>(r.epoch),
                  r.train_loss, r.val_loss, r.val_mse, r.val_sinr_db, r.lr);
      std::fflush(stdout);
    };
  const auto report = train(data, model, loss, sched, opt);
  std::cout << "initial val loss " << fmt(report.initial.loss) << ", final val loss " << fmt(report.log.back().val_loss)
            << ", " << report.steps << " steps\n"
            << "wrote " << (a.out / kCheckpointName).string() << " and " << (a.out / kTrainLogName).string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  fs::path data;
  std::string ckpt = "none";
  bool cfar = false;
  double cfar_alpha = 0.82;
  Index cfar_train = 16;
  Index cfar_guard = 4;
  fs::path out;
  std::string split = "test";
  bool spectra = true;
};

std::string spectrum_csv(const LabeledPair& pair, const RowMatrix& pred, const DatasetManifest& m) {
  const double fs = m.sim.fs;
  const auto in = range_profile(ComplexSignal::from_channels(pair.input.value(), fs));
  const auto out = range_profile(ComplexSignal::from_channels(pred, fs));
  const auto clean = range_profile(ComplexSignal::from_channels(pair.target.value(), fs));
  std::ostringstream os;
  os << "bin,frequency_hz,range_m,input_db,output_db,clean_db\n";
  const Index n = in.size();
  for (Index k = 0; k < n; ++k) {
    const double f = bin_frequency(k, n, fs);
    os << k << ',' << fmt(f) << ',' << fmt(range_of_frequency(f, m.chirp)) << ',' << fmt(in[k]) << ','
       << fmt(out[k]) << ',' << fmt(clean[k]) << '\n';
  }
  return os.str();
}

int run_eval(const EvalArgs& a) {
  const LoadedDataset data = load_dataset(a.data);
  const auto& pairs = data.split(parse_split(a.split));
  if (pairs.empty()) throw ArtifactError("eval: split '" + a.split + "' is empty");
  std::optional<RimformerParams> params;
  if (a.ckpt != "none") {
    params = load_checkpoint(a.ckpt).params;
    if (params->config.signal_len != data.manifest.sim.n_samples)
      throw std::invalid_argument("eval: checkpoint expects " + std::to_string(params->config.signal_len) +
                                  "-sample signals, dataset has " + std::to_string(data.manifest.sim.n_samples));
  }
  EvalOptions opt;
  if (a.cfar) opt.cfar = CfarConfig{a.cfar_train, a.cfar_guard, a.cfar_alpha, true};
  const EvalReport report = evaluate_testset(pairs, params ? &*params : nullptr, data.manifest, opt);

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("eval: cannot create " + a.out.string());
  write_text(a.out / "report.json", report_to_json(report).dump(2) + "\n");
  if (a.spectra) {
    const auto frozen_params = params ? std::optional(frozen(*params)) : std::nullopt;
    for (const auto& pair : pairs) {
      const RowMatrix pred = frozen_params ? rimformer_forward(pair.input.detach(), *frozen_params).value()
                                           : pair.input.value();
      write_text(a.out / "spectra" / (pair.id + ".csv"), spectrum_csv(pair, pred, data.manifest));
    }
  }
  std::printf("%s on %lld %s samples: avg SINR %.2f dB, median %.2f dB (input avg %.2f dB), mse %.4g\n",
              report.mode.c_str(), static_cast<long long>(report.n_samples), a.split.c_str(), report.mean_sinr_db,
              report.median_sinr_db, report.input_mean_sinr_db, report.mean_mse);
  if (report.cfar_enabled)
    std::printf("CFAR: %lld/%lld targets detected, %lld false alarms\n", static_cast<long long>(report.targets_detected),
                static_cast<long long>(report.total_targets), static_cast<long long>(report.false_alarms));
  std::cout << "wrote " << (a.out / "report.json").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  fs::path ckpt, in, out;
};

int run_infer(const InferArgs& a) {
  const auto ck = load_checkpoint(a.ckpt);
  const RimtArray raw = load_rimt(a.in);
  const Tensor x = from_rimt(raw);
  const Index n = ck.params.config.signal_len;
  if (x.rank() != 2 || x.dim(0) != n || x.dim(1) != ck.params.config.in_channels)
    throw std::invalid_argument("infer: input " + shape_string(x.shape()) + " does not match the model's [" +
                                std::to_string(n) + ", " + std::to_string(ck.params.config.in_channels) + "]");
  // Same normalization as the training data, undone on the way out.
  const double scale = x.value().cwiseAbs().maxCoeff();
  if (!(scale > 0) || !std::isfinite(scale)) throw DegenerateInput("infer: input is all zero or not finite");
  const Tensor y = rimformer_forward(Tensor(x.shape(), x.value() / scale), frozen(ck.params));
  RimtArray out = to_rimt(Tensor(x.shape(), y.value() * scale), raw.dtype);
  save_rimt(a.out, out);
  std::cout << "wrote " << a.out.string() << " " << shape_string(x.shape()) << "\n";
  return kOk;
}

// ---------------------------------------------------------------- export

struct ExportArgs {
  std::string what;
  fs::path in, out;
  std::string window = "rect";
  Index win = 128;
  Index hop = 32;
  Index samples_per_chirp = 0;  // taken from the file when 0
};

WindowKind parse_window(const std::string& w) { return w == "hann" ? WindowKind::hann : WindowKind::rectangular; }

int run_export(const ExportArgs& a) {
  const ChirpParams p = ChirpParams::victim();
  const SimConfig sim;
  const Tensor t = load_signal(a.in);
  std::ostringstream os;
  if (a.what == "profile") {
    const ComplexSignal x = to_complex(t, sim.fs);
    const auto prof = range_profile(x, parse_window(a.window));
    os << "bin,frequency_hz,range_m,power_db\n";
    for (Index k = 0; k < prof.size(); ++k) {
      const double f = bin_frequency(k, prof.size(), sim.fs);
      os << k << ',' << fmt(f) << ',' << fmt(range_of_frequency(f, p)) << ',' << fmt(prof[k]) << '\n';
    }
  } else if (a.what == "stft") {
    const ComplexSignal x = to_complex(t, sim.fs);
    const RowMatrix s = stft(x, a.win, a.hop, parse_window(a.window == "rect" ? "hann" : a.window));
    os << "frequency_hz\\time_s";
    for (Index f = 0; f < s.cols(); ++f)
      os << ',' << fmt((static_cast<double>(f * a.hop) + 0.5 * static_cast<double>(a.win)) / sim.fs);
    os << '\n';
    for (Index k = 0; k < s.rows(); ++k) {
      os << fmt(bin_frequency(k, a.win, sim.fs));
      for (Index f = 0; f < s.cols(); ++f) os << ',' << fmt(20.0 * std::log10(std::max(s(k, f), 1e-300)));
      os << '\n';
    }
  } else {
    if (t.rank() != 3 || (t.dim(2) != 2 && t.dim(2) != 1))
      throw std::invalid_argument("export rd: expected a [chirps, samples, 2 | 1] frame, got " + shape_string(t.shape()));
    const Index chirps = t.dim(0), samples = t.dim(1);
    const bool iq = t.dim(2) == 2;
    Eigen::MatrixXcd frame(chirps, samples);
    for (Index c = 0; c < chirps; ++c)
      for (Index s = 0; s < samples; ++s)
        frame(c, s) = {t.value()(c * samples + s, 0), iq ? t.value()(c * samples + s, 1) : 0.0};
    const RowMatrix rd = rd_map(frame, parse_window(a.window), parse_window(a.window));
    os << "velocity_mps\\range_m";
    for (Index s = 0; s < samples; ++s) os << ',' << fmt(range_of_frequency(bin_frequency(s, samples, sim.fs), p));
    os << '\n';
    for (Index r = 0; r < chirps; ++r) {
      os << fmt(doppler_velocity(doppler_bin_of_row(r, chirps), p, chirps));
      for (Index s = 0; s < samples; ++s) os << ',' << fmt(rd(r, s));
      os << '\n';
    }
  }
  write_text(a.out, os.str());
  std::cout << "wrote " << a.out.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- gen-frame

struct GenFrameArgs {
  std::vector<std::string> targets{"30,0,1"};
  std::vector<std::string> interferers;
  Index chirps = 128;
  Index samples = 1024;
  double noise = 0.05;
  std::uint64_t seed = 0;
  fs::path out;
  fs::path clean_out;
  bool single = false;
  bool real = false;
};

std::vector<double> parse_tuple(const std::string& text, std::size_t n, const char* what) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      v.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string(what) + ": cannot parse '" + text + "'");
    }
  }
  if (v.size() != n) throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(n) + " values in '" + text + "'");
  return v;
}

int run_gen_frame(const GenFrameArgs& a) {
  const DatasetOptions o = dataset_options_for_length(a.samples);
  SimConfig sim = o.sim;
  sim.n_chirps = a.single ? 1 : a.chirps;
  SceneSpec scene;
  scene.noise_std = a.noise;
  scene.seed = a.seed;
  for (const auto& s : a.targets) {
    const auto v = parse_tuple(s, 3, "--target");
    scene.targets.push_back({v[0], v[1], v[2]});
  }
  for (const auto& s : a.interferers) {
    const auto v = parse_tuple(s, 4, "--interferer");
    scene.interferers.push_back({v[0], v[1], v[2], v[3]});
  }
  auto write = [&](const Eigen::MatrixXcd& m, const fs::path& path) {
    RimtArray arr;
    arr.dtype = Dtype::f64;
    const std::uint64_t ch = a.real ? 1 : 2;
    arr.dims = a.single ? std::vector<std::uint64_t>{static_cast<std::uint64_t>(m.cols()), ch}
                        : std::vector<std::uint64_t>{static_cast<std::uint64_t>(m.rows()),
                                                     static_cast<std::uint64_t>(m.cols()), ch};
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) {
        arr.values.push_back(m(r, c).real());
        if (!a.real) arr.values.push_back(m(r, c).imag());
      }
    save_rimt(path, arr);
    std::cout << "wrote " << path.string() << "\n";
  };
  const Frame frame = synth_frame(scene, o.chirp, sim);
  write(frame.interfered, a.out);
  if (!a.clean_out.empty()) write(frame.clean, a.clean_out);
  return kOk;
}

int guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DegenerateInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const ArtifactError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return kArtifact;
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radar interference mitigation with a windowed transformer"};
  app.require_subcommand(1);
  app.fallthrough();
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "", "JSON file with flag values for the subcommand; explicit flags win");
  std::function<int()> action;

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Simulate paired interfered/clean chirps");
  gen->add_option("--n", gd.n, "Number of pairs")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_option("--seed", gd.seed, "Master seed")->capture_default_str();
  gen->add_option("--split", gd.split, "train:val:test ratios")->capture_default_str();
  gen->add_option("--samples", gd.samples, "Samples per chirp")->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_flag("--real", gd.real, "Store real-valued IF signals (in-phase channel only)");
  gen->callback([&] { action = [&] { return run_gen_data(gd); }; });

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Train on a generated dataset");
  trn->add_option("--data", tr.data, "Dataset directory")->required();
  trn->add_option("--profile", tr.profile, "Model size")->check(CLI::IsMember({"tiny", "full"}))->capture_default_str();
  trn->add_option("--epochs", tr.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
  trn->add_option("--seed", tr.seed)->capture_default_str();
  trn->add_option("--out", tr.out, "Directory for the checkpoint and log")->required();
  trn->add_option("--batch-size", tr.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  trn->add_option("--lr", tr.lr, "Peak learning rate")->capture_default_str();
  trn->add_option("--lr-min", tr.lr_min)->capture_default_str();
  trn->add_option("--t0", tr.t0, "First restart period in epochs")->capture_default_str();
  trn->add_option("--t-mult", tr.t_mult)->capture_default_str();
  trn->add_option("--lambda", tr.lambda, "Frequency-term weight")->capture_default_str();
  trn->add_option("--spectrum", tr.spectrum)->check(CLI::IsMember({"magnitude", "complex"}))->capture_default_str();
  trn->add_option("--checkpoint-every", tr.checkpoint_every)->capture_default_str();
  trn->add_flag("--quiet", tr.quiet, "Skip per-epoch output");
  trn->callback([&] { action = [&] { return run_train(tr); }; });

  EvalArgs ev;
  auto* evl = app.add_subcommand("eval", "Score a checkpoint (or the raw input) on a split");
  evl->add_option("--data", ev.data)->required();
  evl->add_option("--ckpt", ev.ckpt, "Checkpoint path or 'none' for passthrough")->capture_default_str();
  evl->add_flag("--cfar", ev.cfar, "Run CA-CFAR on the reconstructions");
  evl->add_option("--cfar-alpha", ev.cfar_alpha)->capture_default_str();
  evl->add_option("--cfar-train", ev.cfar_train)->capture_default_str();
  evl->add_option("--cfar-guard", ev.cfar_guard)->capture_default_str();
  evl->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  evl->add_option("--out", ev.out, "Directory for report.json and spectra/")->required();
  evl->add_flag("!--no-spectra", ev.spectra, "Skip per-sample spectrum CSVs");
  evl->callback([&] { action = [&] { return run_eval(ev); }; });

  InferArgs in;
  auto* inf = app.add_subcommand("infer", "Reconstruct one signal");
  inf->add_option("--ckpt", in.ckpt)->required();
  inf->add_option("--in", in.in, "RIMT [n, 2] signal")->required();
  inf->add_option("--out", in.out)->required();
  inf->callback([&] { action = [&] { return run_infer(in); }; });

  ExportArgs ex;
  auto* exp = app.add_subcommand("export", "Plot data as CSV");
  exp->add_option("--what", ex.what)->required()->check(CLI::IsMember({"stft", "rd", "profile"}));
  exp->add_option("--in", ex.in)->required();
  exp->add_option("--out", ex.out)->required();
  exp->add_option("--window", ex.window)->check(CLI::IsMember({"rect", "hann"}))->capture_default_str();
  exp->add_option("--win", ex.win, "STFT window length")->check(CLI::PositiveNumber)->capture_default_str();
  exp->add_option("--hop", ex.hop, "STFT hop")->check(CLI::PositiveNumber)->capture_default_str();
  exp->callback([&] { action = [&] { return run_export(ex); }; });

  GenFrameArgs gf;
  auto* frm = app.add_subcommand("gen-frame", "Simulate one frame of chirps for RD/STFT export");
  frm->add_option("--target", gf.targets, "range_m,speed_mps,amplitude (repeatable)");
  frm->add_option("--interferer", gf.interferers, "start_hz,slope_hz_per_s,amplitude,offset_s (repeatable)");
  frm->add_option("--chirps", gf.chirps)->check(CLI::PositiveNumber)->capture_default_str();
  frm->add_option("--samples", gf.samples)->check(CLI::PositiveNumber)->capture_default_str();
  frm->add_option("--noise", gf.noise)->capture_default_str();
  frm->add_option("--seed", gf.seed)->capture_default_str();
  frm->add_flag("--single", gf.single, "Write one chirp as [samples, 2]");
  frm->add_flag("--real", gf.real, "Keep only the in-phase channel");
  frm->add_option("--out", gf.out, "Interfered frame")->required();
  frm->add_option("--clean-out", gf.clean_out, "Clean frame");
  frm->callback([&] { action = [&] { return run_gen_frame(gf); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::FileError& e) {
    app.exit(e);
    return kIo;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  return guarded(action);
}
