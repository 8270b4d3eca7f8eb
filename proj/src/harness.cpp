#include "deepsc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "deepsc/baseline.hpp"
#include "deepsc/errors.hpp"
#include "deepsc/metrics.hpp"

namespace deepsc {

namespace fs = std::filesystem;

namespace {

enum StreamTag : std::uint64_t {
  kTagData = 1,
  kTagInit = 2,
  kTagTrainChannel = 3,
  kTagEval = 4,
  kTagBaseline = 5,
  kTagSynth = 6,
};

std::uint64_t family_id(ChannelFamily f) { return static_cast<std::uint64_t>(f); }

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::string fmt_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt("%.6f", v);
}

double parse_double_strict(const std::string& s, const char* what) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ParseError(std::string(what) + ": not a number: '" + s + "'");
  }
  if (pos != s.size()) throw ParseError(std::string(what) + ": trailing junk in '" + s + "'");
  return v;
}

std::int64_t parse_int_strict(const std::string& s, const char* what) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError(std::string(what) + ": not an integer: '" + s + "'");
  }
  if (pos != s.size()) throw ConfigError(std::string(what) + ": trailing junk in '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s, const char* what) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(std::string(what) + ": not a boolean: '" + s + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct PooledCell {
  double sig_sum = 0.0;
  double err_sum = 0.0;
  std::int64_t n_samples = 0;
  double segsnr_sum = 0.0;
  int segsnr_count = 0;
  double pesq_sum = 0.0;
  int pesq_count = 0;

  void add_clip(std::span<const float> ref, std::span<const float> deg) {
    for (std::size_t i = 0; i < ref.size(); ++i) {
      sig_sum += static_cast<double>(ref[i]) * ref[i];
      const double d = static_cast<double>(ref[i]) - deg[i];
      err_sum += d * d;
    }
    n_samples += static_cast<std::int64_t>(ref.size());
    try {
      segsnr_sum += segmental_snr_db(ref, deg);
      ++segsnr_count;
    } catch (const ContractError&) {
      // silent clip: proxy undefined, skip
    }
  }

  EvalRow finish(const std::string& system, const std::string& train_channel,
                 const std::string& test_channel, double snr) const {
    EvalRow row;
    row.system = system;
    row.train_channel = train_channel;
    row.test_channel = test_channel;
    row.snr_db = snr;
    row.mse = err_sum / static_cast<double>(n_samples);
    row.sdr_db = err_sum == 0.0 ? std::numeric_limits<double>::infinity()
                                : 10.0 * std::log10(sig_sum / err_sum);
    row.segsnr_db = segsnr_count > 0 ? segsnr_sum / segsnr_count : 0.0;
    if (pesq_count > 0) row.pesq = pesq_sum / pesq_count;
    return row;
  }
};

// Optional external PESQ: scores ref/deg pairs via temporary wav files.
void maybe_pesq(PooledCell& cell, const ExperimentConfig& cfg, const std::string& tag,
                std::size_t clip_idx, std::span<const float> ref, std::span<const float> deg) {
  if (cfg.pesq_cmd.empty()) return;
  const fs::path dir = fs::path(cfg.out_dir) / "pesq_tmp";
  fs::create_directories(dir);
  const std::string base = tag + "_" + std::to_string(clip_idx);
  const std::string ref_path = (dir / (base + "_ref.wav")).string();
  const std::string deg_path = (dir / (base + "_deg.wav")).string();
  SpeechClip rc, dc;
  rc.sample_rate_hz = dc.sample_rate_hz = 8000;
  rc.samples.assign(ref.begin(), ref.end());
  dc.samples.assign(deg.begin(), deg.end());
  save_wav(ref_path, rc);
  save_wav(deg_path, dc);
  const auto score = pesq_external(ref_path, deg_path, cfg.pesq_cmd);
  if (score) {
    cell.pesq_sum += *score;
    ++cell.pesq_count;
  }
}

}  // namespace

// ---- config ----------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (hyper.D < 1 || hyper.N < 1 || hyper.F < 1 || hyper.L < 1 || hyper.blocks < 1 || hyper.r < 1) {
    throw ConfigError("config: model dims must be positive");
  }
  if (hyper.D % hyper.r != 0) throw ConfigError("config: r must divide D");
  if (train.lr <= 0.0f) throw ConfigError("config: lr must be > 0");
  if (train.batch < 1) throw ConfigError("config: batch must be >= 1");
  if (train.max_epochs < 1) throw ConfigError("config: max_epochs must be >= 1");
  if (eval.snr_grid.empty()) throw ConfigError("config: snr grid must be nonempty");
  if (eval.channels.empty()) throw ConfigError("config: eval channel set must be nonempty");
  if (eval.trials < 1) throw ConfigError("config: trials must be >= 1");
}

std::vector<double> parse_snr_grid(const std::string& text) {
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw ConfigError("snr grid: expected lo:step:hi, got '" + text + "'");
    const double lo = parse_double_strict(parts[0], "snr grid lo");
    const double step = parse_double_strict(parts[1], "snr grid step");
    const double hi = parse_double_strict(parts[2], "snr grid hi");
    if (step <= 0.0) throw ConfigError("snr grid: step must be positive");
    for (double v = lo; v <= hi + 1e-9; v += step) grid.push_back(v);
  } else {
    for (const auto& p : split(text, ',')) {
      if (!p.empty()) grid.push_back(parse_double_strict(p, "snr grid"));
    }
  }
  if (grid.empty()) throw ConfigError("snr grid: empty");
  return grid;
}

namespace {

void apply_config_line_impl(ExperimentConfig& cfg, const std::string& section,
                            const std::string& key, const std::string& value) {
  const std::string full = section + "." + key;
  if (full == "data.train_dir") cfg.train_dir = value;
  else if (full == "data.test_dir") cfg.test_dir = value;
  else if (full == "data.train_manifest") cfg.train_manifest = value;
  else if (full == "data.test_manifest") cfg.test_manifest = value;
  else if (full == "model.d") cfg.hyper.D = static_cast<int>(parse_int_strict(value, "model.d"));
  else if (full == "model.n") cfg.hyper.N = static_cast<int>(parse_int_strict(value, "model.n"));
  else if (full == "model.f") cfg.hyper.F = static_cast<int>(parse_int_strict(value, "model.f"));
  else if (full == "model.l") cfg.hyper.L = static_cast<int>(parse_int_strict(value, "model.l"));
  else if (full == "model.blocks") cfg.hyper.blocks = static_cast<int>(parse_int_strict(value, "model.blocks"));
  else if (full == "model.r") cfg.hyper.r = static_cast<int>(parse_int_strict(value, "model.r"));
  else if (full == "train.channel") cfg.train.channel = channel_family_from_string(value);
  else if (full == "train.snr_db") cfg.train.snr_db = parse_double_strict(value, "train.snr_db");
  else if (full == "train.rician_k") cfg.train.rician_k = parse_double_strict(value, "train.rician_k");
  else if (full == "train.lr") cfg.train.lr = static_cast<float>(parse_double_strict(value, "train.lr"));
  else if (full == "train.batch") cfg.train.batch = static_cast<int>(parse_int_strict(value, "train.batch"));
  else if (full == "train.max_epochs") cfg.train.max_epochs = static_cast<int>(parse_int_strict(value, "train.max_epochs"));
  else if (full == "train.patience") cfg.train.patience = static_cast<int>(parse_int_strict(value, "train.patience"));
  else if (full == "train.min_delta") cfg.train.min_delta = parse_double_strict(value, "train.min_delta");
  else if (full == "train.redraw_channel") cfg.train.redraw_channel = parse_bool(value, "train.redraw_channel");
  else if (full == "eval.channels") {
    cfg.eval.channels.clear();
    for (const auto& name : split(value, ',')) {
      if (!name.empty()) cfg.eval.channels.push_back(channel_family_from_string(name));
    }
  } else if (full == "eval.snr_grid") cfg.eval.snr_grid = parse_snr_grid(value);
  else if (full == "eval.trials") cfg.eval.trials = static_cast<int>(parse_int_strict(value, "eval.trials"));
  else if (full == "eval.rician_k") cfg.eval.rician_k = parse_double_strict(value, "eval.rician_k");
  else if (full == "run.seed") cfg.seed = static_cast<std::uint64_t>(parse_int_strict(value, "run.seed"));
  else if (full == "run.out_dir") cfg.out_dir = value;
  else if (full == "run.pesq_cmd") cfg.pesq_cmd = value;
  else if (full == "run.baseline") cfg.baseline = parse_bool(value, "run.baseline");
  else if (full == "run.equalize") cfg.equalize = parse_bool(value, "run.equalize");
  else throw ConfigError("config: unknown key '" + full + "'");
}

}  // namespace

void apply_config_line(ExperimentConfig& cfg, const std::string& section, const std::string& key,
                       const std::string& value) {
  try {
    apply_config_line_impl(cfg, section, key, value);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  ExperimentConfig cfg;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#' || line[first] == ';') continue;
    if (line[first] == '[') {
      const auto close = line.find(']', first);
      if (close == std::string::npos) {
        throw ConfigError("config: unterminated section at line " + std::to_string(line_no));
      }
      section = line.substr(first + 1, close - first - 1);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected key=value at line " + std::to_string(line_no));
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_config_line(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "[data]\n"
     << "train_dir=" << cfg.train_dir << "\ntest_dir=" << cfg.test_dir
     << "\ntrain_manifest=" << cfg.train_manifest << "\ntest_manifest=" << cfg.test_manifest
     << "\n[model]\nd=" << cfg.hyper.D << "\nn=" << cfg.hyper.N << "\nf=" << cfg.hyper.F
     << "\nl=" << cfg.hyper.L << "\nblocks=" << cfg.hyper.blocks << "\nr=" << cfg.hyper.r
     << "\n[train]\nchannel=" << to_string(cfg.train.channel) << "\nsnr_db=" << cfg.train.snr_db
     << "\nrician_k=" << cfg.train.rician_k << "\nlr=" << cfg.train.lr
     << "\nbatch=" << cfg.train.batch << "\nmax_epochs=" << cfg.train.max_epochs
     << "\npatience=" << cfg.train.patience << "\nmin_delta=" << cfg.train.min_delta
     << "\n[eval]\nchannels=";
  for (std::size_t i = 0; i < cfg.eval.channels.size(); ++i) {
    if (i) os << ',';
    os << to_string(cfg.eval.channels[i]);
  }
  os << "\nsnr_grid=";
  for (std::size_t i = 0; i < cfg.eval.snr_grid.size(); ++i) {
    if (i) os << ',';
    os << cfg.eval.snr_grid[i];
  }
  os << "\ntrials=" << cfg.eval.trials << "\nrician_k=" << cfg.eval.rician_k
     << "\n[run]\nseed=" << cfg.seed << "\nout_dir=" << cfg.out_dir
     << "\npesq_cmd=" << cfg.pesq_cmd << "\nbaseline=" << (cfg.baseline ? "true" : "false")
     << "\nequalize=" << (cfg.equalize ? "true" : "false") << "\n";
  return os.str();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(serialize_config(*this)); }

// ---- training ----------------------------------------------------------------

TrainResult train(const ExperimentConfig& cfg, ChannelFamily family,
                  const std::string& checkpoint_path) {
  const SpeechDataset dataset(cfg.train_dir, cfg.train_manifest);
  if (dataset.num_clips() < static_cast<std::size_t>(cfg.train.batch)) {
    throw DatasetError("train: need at least one full batch of clips");
  }
  DeepSCSModel model(cfg.hyper, Rng::derive(cfg.seed, kTagInit, family_id(family)));

  ChannelSpec spec;
  spec.family = family;
  spec.snr_db = cfg.train.snr_db;
  spec.rician_k = cfg.train.rician_k;

  const std::uint64_t chan_stream = Rng::derive(cfg.seed, kTagTrainChannel, family_id(family));
  Rng chan_rng(chan_stream);

  TrainResult result;
  result.checkpoint_path = checkpoint_path;
  double best = std::numeric_limits<double>::infinity();
  int stall = 0;
  std::int64_t step = 0;
  const std::int64_t n_symbols = static_cast<std::int64_t>(cfg.hyper.F) * cfg.hyper.N;

  for (int epoch = 0; epoch < cfg.train.max_epochs; ++epoch) {
    const auto batches = dataset.epoch_batches(cfg.train.batch, cfg.W(), cfg.hyper.F, cfg.hyper.L,
                                               Rng::derive(cfg.seed, kTagData), epoch);
    double epoch_sum = 0.0;
    for (const auto& batch : batches) {
      if (!cfg.train.redraw_channel) chan_rng = Rng(chan_stream);
      const ChannelRealization real = sample_channel(spec, batch.batch(), n_symbols, chan_rng);
      GradTape tape;
      double loss_value = 0.0;
      {
        TapeScope scope(tape);
        const Tensor m_hat = model.forward(batch.data, real, cfg.equalize);
        const Tensor loss = mse_loss(m_hat, batch.data);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw DivergenceError("train: non-finite loss at step " + std::to_string(step));
        }
        tape.backward(loss);
      }
      sgd_step(model.params(), cfg.train.lr);
      if (step == 0) result.initial_loss = loss_value;
      result.step_losses.push_back(loss_value);
      epoch_sum += loss_value;
      ++step;
    }
    const double epoch_loss = epoch_sum / static_cast<double>(batches.size());
    result.epoch_losses.push_back(epoch_loss);
    result.epochs_run = epoch + 1;
    if (epoch_loss < best - cfg.train.min_delta) {
      best = epoch_loss;
      stall = 0;
    } else if (++stall >= cfg.train.patience) {
      break;  // loss no longer decreasing
    }
    best = std::min(best, epoch_loss);
  }
  result.best_loss = best;
  if (!checkpoint_path.empty()) {
    fs::create_directories(fs::path(checkpoint_path).parent_path().empty()
                               ? "."
                               : fs::path(checkpoint_path).parent_path().string());
    model.save(checkpoint_path);
  }
  return result;
}

// ---- evaluation ----------------------------------------------------------------

EvalReport evaluate(const ExperimentConfig& cfg, const DeepSCSModel& model,
                    const std::string& train_channel_label) {
  if (!(model.hyper() == cfg.hyper)) {
    throw CheckpointError("evaluate: checkpoint hyperparameters do not match the configuration");
  }
  const SpeechDataset dataset(cfg.test_dir, cfg.test_manifest);
  const FrameBatch frames = dataset.all_frames(cfg.W(), cfg.hyper.F, cfg.hyper.L);
  const auto refs = deframe(frames.data);
  const std::int64_t n_symbols = static_cast<std::int64_t>(cfg.hyper.F) * cfg.hyper.N;

  const std::uint64_t hash_before = model.param_hash();

  EvalReport report;
  report.build_id = kBuildId;
  report.config_hash = hex64(cfg.hash());
  report.seed = cfg.seed;
  report.deepsc_symbols_per_clip = n_symbols;

  for (std::size_t fi = 0; fi < cfg.eval.channels.size(); ++fi) {
    const ChannelFamily family = cfg.eval.channels[fi];
    ChannelSpec spec;
    spec.family = family;
    spec.rician_k = cfg.eval.rician_k;
    for (std::size_t si = 0; si < cfg.eval.snr_grid.size(); ++si) {
      spec.snr_db = cfg.eval.snr_grid[si];
      PooledCell cell;
      for (int trial = 0; trial < cfg.eval.trials; ++trial) {
        Rng rng(Rng::derive(cfg.seed, kTagEval, family_id(family), si, static_cast<std::uint64_t>(trial)));
        const ChannelRealization real =
            sample_channel(spec, frames.batch(), n_symbols, rng);
        const Tensor m_hat = model.forward(frames.data, real, cfg.equalize);
        const auto recs = deframe(m_hat);
        for (std::size_t c = 0; c < refs.size(); ++c) {
          cell.add_clip(refs[c], recs[c]);
          if (trial == 0) {
            maybe_pesq(cell, cfg, "deepsc_" + to_string(family) + "_" + std::to_string(si), c,
                       refs[c], recs[c]);
          }
        }
      }
      report.rows.push_back(
          cell.finish("deepsc-s", train_channel_label, to_string(family), spec.snr_db));
    }
  }

  if (model.param_hash() != hash_before) {
    throw ContractError("evaluate: model parameters changed during evaluation");
  }
  return report;
}

EvalReport evaluate_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                               const std::string& train_channel_label) {
  const DeepSCSModel model = DeepSCSModel::load(checkpoint_path);
  return evaluate(cfg, model, train_channel_label);
}

EvalReport run_baseline(const ExperimentConfig& cfg) {
  const SpeechDataset dataset(cfg.test_dir, cfg.test_manifest);
  const FrameBatch frames = dataset.all_frames(cfg.W(), cfg.hyper.F, cfg.hyper.L);
  const auto refs = deframe(frames.data);

  EvalReport report;
  report.build_id = kBuildId;
  report.config_hash = hex64(cfg.hash());
  report.seed = cfg.seed;
  report.deepsc_symbols_per_clip = static_cast<std::int64_t>(cfg.hyper.F) * cfg.hyper.N;

  for (std::size_t fi = 0; fi < cfg.eval.channels.size(); ++fi) {
    const ChannelFamily family = cfg.eval.channels[fi];
    ChannelSpec spec;
    spec.family = family;
    spec.rician_k = cfg.eval.rician_k;
    for (std::size_t si = 0; si < cfg.eval.snr_grid.size(); ++si) {
      spec.snr_db = cfg.eval.snr_grid[si];
      PooledCell cell;
      for (int trial = 0; trial < cfg.eval.trials; ++trial) {
        for (std::size_t c = 0; c < refs.size(); ++c) {
          SpeechClip clip;
          clip.sample_rate_hz = 8000;
          clip.source_id = frames.clip_ids[c];
          clip.samples.assign(refs[c].begin(), refs[c].end());
          const std::uint64_t stream = Rng::derive(cfg.seed, kTagBaseline, family_id(family), si,
                                                   static_cast<std::uint64_t>(trial), c);
          const BaselineResult res = baseline_transmit(clip, spec, stream);
          report.baseline_symbols_per_clip = res.n_symbols;
          cell.add_clip(refs[c], res.recovered.samples);
          if (trial == 0) {
            maybe_pesq(cell, cfg, "baseline_" + to_string(family) + "_" + std::to_string(si), c,
                       refs[c], res.recovered.samples);
          }
        }
      }
      report.rows.push_back(cell.finish("baseline", "none", to_string(family), spec.snr_db));
    }
  }
  return report;
}

EvalReport cross_train_experiment(const ExperimentConfig& cfg) {
  const ChannelFamily families[] = {ChannelFamily::AWGN, ChannelFamily::Rayleigh,
                                    ChannelFamily::Rician};
  std::vector<EvalReport> reports;
  for (ChannelFamily fam : families) {
    const std::string ckpt =
        (fs::path(cfg.out_dir) / ("model_" + to_string(fam) + ".ckpt")).string();
    fs::create_directories(cfg.out_dir);
    const TrainResult tr = train(cfg, fam, ckpt);
    write_loss_curve_csv((fs::path(cfg.out_dir) / ("loss_curve_" + to_string(fam) + ".csv")).string(),
                         tr);
    reports.push_back(evaluate_checkpoint(cfg, ckpt, to_string(fam)));
  }
  return merge_reports(reports);
}

EvalReport merge_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ContractError("merge_reports: need at least one report");
  EvalReport merged;
  merged.build_id = reports.front().build_id;
  merged.seed = reports.front().seed;
  for (const auto& r : reports) {
    merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
    if (!merged.config_hash.empty() && merged.config_hash != r.config_hash &&
        merged.config_hash.find(r.config_hash) == std::string::npos) {
      merged.config_hash += "+" + r.config_hash;
    } else if (merged.config_hash.empty()) {
      merged.config_hash = r.config_hash;
    }
    merged.deepsc_symbols_per_clip =
        std::max(merged.deepsc_symbols_per_clip, r.deepsc_symbols_per_clip);
    merged.baseline_symbols_per_clip =
        std::max(merged.baseline_symbols_per_clip, r.baseline_symbols_per_clip);
  }
  return merged;
}

// ---- report files ----------------------------------------------------------------

static const char* kCsvHeader = "system,train_channel,test_channel,snr_db,mse,sdr_db,segsnr_db,pesq";

void write_results_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw ParseError("report: cannot write " + path);
  out << kCsvHeader << "\n";
  for (const auto& row : report.rows) {
    out << row.system << ',' << row.train_channel << ',' << row.test_channel << ','
        << fmt("%.10g", row.snr_db) << ',' << fmt("%.9e", row.mse) << ','
        << fmt_metric(row.sdr_db) << ',' << fmt_metric(row.segsnr_db) << ','
        << (row.pesq ? fmt("%.6f", *row.pesq) : "") << "\n";
  }
}

EvalReport read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("report: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("report: empty csv " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw ParseError("report: unexpected header in " + path);
  EvalReport report;
  report.build_id = kBuildId;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) {
      throw ParseError("report: expected 8 columns at line " + std::to_string(line_no));
    }
    EvalRow row;
    row.system = f[0];
    if (row.system != "deepsc-s" && row.system != "baseline") {
      throw ParseError("report: unknown system '" + f[0] + "' at line " + std::to_string(line_no));
    }
    row.train_channel = f[1];
    row.test_channel = f[2];
    row.snr_db = parse_double_strict(f[3], "snr_db");
    row.mse = parse_double_strict(f[4], "mse");
    row.sdr_db = parse_double_strict(f[5], "sdr_db");
    row.segsnr_db = parse_double_strict(f[6], "segsnr_db");
    if (!f[7].empty()) row.pesq = parse_double_strict(f[7], "pesq");
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_loss_curve_csv(const std::string& path, const TrainResult& result) {
  std::ofstream out(path);
  if (!out) throw ParseError("report: cannot write " + path);
  out << "step,loss\n";
  for (std::size_t i = 0; i < result.step_losses.size(); ++i) {
    out << i << ',' << fmt("%.9e", result.step_losses[i]) << "\n";
  }
}

void write_summary(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw ParseError("report: cannot write " + path);
  out << "DeepSC-S vs classical baseline\n";
  out << "build " << report.build_id << ", config " << report.config_hash << ", seed "
      << report.seed << "\n";
  if (report.deepsc_symbols_per_clip > 0) {
    out << "channel symbols per clip: deepsc-s " << report.deepsc_symbols_per_clip;
    if (report.baseline_symbols_per_clip > 0) {
      out << ", baseline " << report.baseline_symbols_per_clip
          << " (rate fairness is a config choice via model.n)";
    }
    out << "\n";
  }
  out << "\n";

  // pair up rows per (test_channel, snr); the rician-trained model is the
  // robust representative when several trained models are present
  std::map<std::pair<std::string, double>, std::pair<const EvalRow*, const EvalRow*>> cells;
  for (const auto& row : report.rows) {
    auto& cell = cells[{row.test_channel, row.snr_db}];
    if (row.system == "deepsc-s") {
      if (cell.first == nullptr || row.train_channel == "rician") cell.first = &row;
    } else {
      cell.second = &row;
    }
  }
  out << "test_channel  snr_db   deepsc_sdr   baseline_sdr   delta   winner\n";
  for (const auto& [key, pair] : cells) {
    const auto& [chan, snr] = key;
    out << chan;
    for (std::size_t i = chan.size(); i < 14; ++i) out << ' ';
    out << fmt("%6.1f", snr) << "   ";
    if (pair.first) out << fmt("%9.3f", pair.first->sdr_db);
    else out << "        -";
    out << "   ";
    if (pair.second) out << fmt("%11.3f", pair.second->sdr_db);
    else out << "          -";
    out << "   ";
    if (pair.first && pair.second) {
      const double delta = pair.first->sdr_db - pair.second->sdr_db;
      out << fmt("%6.3f", delta) << "   "
          << (delta > 0 ? "deepsc-s" : (delta < 0 ? "baseline" : "tie"));
    } else {
      out << "     -   -";
    }
    out << "\n";
  }
}

void write_run_meta(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw ParseError("report: cannot write " + path);
  out << "build_id=" << report.build_id << "\n"
      << "config_hash=" << report.config_hash << "\n"
      << "seed=" << report.seed << "\n"
      << "rows=" << report.rows.size() << "\n";
}

// ---- synthetic clips ----------------------------------------------------------

SpeechClip make_synth_clip(std::uint64_t seed, int n_samples, int sample_rate_hz) {
  Rng rng(Rng::derive(seed, kTagSynth));
  SpeechClip clip;
  clip.sample_rate_hz = sample_rate_hz;
  clip.source_id = "synth_" + std::to_string(seed);
  clip.samples.resize(static_cast<std::size_t>(n_samples));

  const double f0 = rng.uniform(95.0, 210.0);
  const double syllable_hz = rng.uniform(2.0, 4.0);
  const double vibrato_hz = rng.uniform(4.0, 6.5);
  const int n_harm = 5;
  double phase[n_harm];
  double amp[n_harm];
  for (int k = 0; k < n_harm; ++k) {
    phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    amp[k] = 1.0 / (k + 1) * rng.uniform(0.6, 1.0);
  }
  const double noise_level = 0.02;

  double peak = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i) / sample_rate_hz;
    const double env =
        0.2 + 0.8 * std::pow(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * syllable_hz * t), 1.5);
    const double f_inst = f0 * (1.0 + 0.012 * std::sin(2.0 * std::numbers::pi * vibrato_hz * t));
    double s = 0.0;
    for (int k = 0; k < n_harm; ++k) {
      s += amp[k] * std::sin(2.0 * std::numbers::pi * f_inst * (k + 1) * t + phase[k]);
    }
    s = env * s + noise_level * rng.normal();
    clip.samples[static_cast<std::size_t>(i)] = static_cast<float>(s);
    peak = std::max(peak, std::abs(s));
  }
  const float gain = peak > 0.0 ? static_cast<float>(0.85 / peak) : 1.0f;
  for (float& v : clip.samples) v *= gain;
  return clip;
}

void write_synth_dataset(const std::string& dir, int n_clips, int n_samples, int sample_rate_hz,
                         std::uint64_t seed) {
  fs::create_directories(dir);
  for (int i = 0; i < n_clips; ++i) {
    const SpeechClip clip =
        make_synth_clip(Rng::derive(seed, 0xABCDULL, static_cast<std::uint64_t>(i)), n_samples,
                        sample_rate_hz);
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%03d.wav", i);
    save_wav((fs::path(dir) / name).string(), clip);
  }
}

}  // namespace deepsc
