#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "deepsc/baseline.hpp"
#include "deepsc/channel.hpp"
#include "deepsc/harness.hpp"
#include "deepsc/metrics.hpp"
#include "deepsc/model.hpp"
#include "deepsc/speech.hpp"

namespace py = pybind11;
using namespace deepsc;

namespace {

Tensor tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
  std::vector<float> data(a.data(), a.data() + a.size());
  return Tensor::from_data(shape, std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

ChannelSpec make_spec(const std::string& family, double snr_db, double rician_k,
                      std::uint64_t seed, bool per_symbol) {
  ChannelSpec spec;
  spec.family = channel_family_from_string(family);
  spec.snr_db = snr_db;
  spec.rician_k = rician_k;
  spec.seed = seed;
  spec.fading_granularity =
      per_symbol ? FadingGranularity::PerSymbol : FadingGranularity::PerClip;
  return spec;
}

}  // namespace

PYBIND11_MODULE(_deepscs, m) {
  m.doc() = "Semantic speech transceiver (DeepSC-S) with a classical telephony baseline";

  // ---- metrics
  m.def("mse", [](std::vector<float> ref, std::vector<float> deg) { return mse(ref, deg); });
  m.def("sdr_db",
        [](std::vector<float> ref, std::vector<float> deg) { return sdr_db(ref, deg); });
  m.def(
      "segmental_snr_db",
      [](std::vector<float> ref, std::vector<float> deg, int seg_len) {
        return segmental_snr_db(ref, deg, seg_len);
      },
      py::arg("ref"), py::arg("deg"), py::arg("seg_len") = 256);

  // ---- A-law / turbo / QAM
  m.def("alaw_encode", [](float s) { return alaw::encode(s); });
  m.def("alaw_decode", [](int code) { return alaw::decode(static_cast<std::uint8_t>(code)); });

  py::class_<TurboCodec>(m, "TurboCodec")
      .def(py::init<int, int>(), py::arg("block_length") = 512, py::arg("iterations") = 5)
      .def_property_readonly("block_length", &TurboCodec::block_length)
      .def_property_readonly("coded_length", &TurboCodec::coded_length)
      .def("encode",
           [](const TurboCodec& c, std::vector<std::uint8_t> bits) { return c.encode(bits); })
      .def(
          "decode_sova",
          [](const TurboCodec& c, std::vector<double> llrs, int iterations) {
            return iterations > 0 ? c.decode_sova(llrs, iterations) : c.decode_sova(llrs);
          },
          py::arg("llrs"), py::arg("iterations") = 0);

  m.def("qam64_modulate", [](std::vector<std::uint8_t> bits) {
    const auto r = Qam64::modulate(bits);
    return py::make_tuple(r.iq, r.pad_bits);
  });
  m.def("qam64_demodulate_hard",
        [](std::vector<float> iq) { return Qam64::demodulate_hard(iq); });

  // ---- channel
  py::class_<ChannelRealization>(m, "ChannelRealization")
      .def_readonly("sigma2", &ChannelRealization::sigma2)
      .def_readonly("h_re", &ChannelRealization::h_re)
      .def_readonly("h_im", &ChannelRealization::h_im);
  m.def(
      "sample_channel",
      [](const std::string& family, double snr_db, double rician_k, std::uint64_t seed,
         bool per_symbol, int batch, std::int64_t symbols) {
        return sample_channel(make_spec(family, snr_db, rician_k, seed, per_symbol), batch,
                              symbols);
      },
      py::arg("family"), py::arg("snr_db"), py::arg("rician_k") = 1.0, py::arg("seed") = 0,
      py::arg("per_symbol") = false, py::arg("batch") = 1, py::arg("symbols") = 1024);
  m.def("apply_channel", [](const ChannelRealization& real, std::vector<float> x) {
    std::vector<float> y(x.size());
    apply_channel(real, x, y);
    return y;
  });
  m.def("equalize", [](const ChannelRealization& real, std::vector<float> y) {
    equalize_inplace(real, y);
    return y;
  });
  m.def("measure_snr_db",
        [](const ChannelRealization& real, std::vector<float> x, std::vector<float> y) {
          return measure_snr_db(x, y, real);
        });

  // ---- speech pipeline
  py::class_<SpeechClip>(m, "SpeechClip")
      .def(py::init<>())
      .def_readwrite("samples", &SpeechClip::samples)
      .def_readwrite("sample_rate_hz", &SpeechClip::sample_rate_hz)
      .def_readwrite("source_id", &SpeechClip::source_id);
  m.def("load_wav", &load_wav);
  m.def("save_wav", &save_wav);
  m.def("resample_to_8k", &resample_to_8k);
  m.def("make_synth_clip", &make_synth_clip, py::arg("seed"), py::arg("n_samples"),
        py::arg("sample_rate_hz") = 8000);
  m.def("write_synth_dataset", &write_synth_dataset);
  m.def("frame", [](const std::vector<std::vector<float>>& clips, int W, int F, int L) {
    std::vector<SpeechClip> cs;
    for (const auto& s : clips) {
      SpeechClip c;
      c.samples = s;
      cs.push_back(std::move(c));
    }
    return array_from_tensor(frame_clips(cs, W, F, L).data);
  });
  m.def("deframe", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& m) {
    return deframe(tensor_from_array(m));
  });

  // ---- model
  py::class_<ModelHyper>(m, "ModelHyper")
      .def(py::init<>())
      .def_readwrite("D", &ModelHyper::D)
      .def_readwrite("N", &ModelHyper::N)
      .def_readwrite("F", &ModelHyper::F)
      .def_readwrite("L", &ModelHyper::L)
      .def_readwrite("blocks", &ModelHyper::blocks)
      .def_readwrite("r", &ModelHyper::r);

  py::class_<DeepSCSModel>(m, "DeepSCSModel")
      .def(py::init<const ModelHyper&, std::uint64_t>(), py::arg("hyper"), py::arg("init_seed"))
      .def_property_readonly("hyper", &DeepSCSModel::hyper)
      .def_property_readonly("num_parameters", &DeepSCSModel::num_parameters)
      .def("param_hash", &DeepSCSModel::param_hash)
      .def("save", &DeepSCSModel::save)
      .def_static("load", &DeepSCSModel::load)
      .def("encode",
           [](const DeepSCSModel& model,
              const py::array_t<float, py::array::c_style | py::array::forcecast>& m) {
             return array_from_tensor(model.encode(tensor_from_array(m)).symbols);
           })
      .def(
          "forward",
          [](const DeepSCSModel& model,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& m,
             const ChannelRealization& real, bool equalize_rx) {
            return array_from_tensor(model.forward(tensor_from_array(m), real, equalize_rx));
          },
          py::arg("m"), py::arg("realization"), py::arg("equalize") = true);

  // ---- baseline chain
  m.def(
      "baseline_transmit",
      [](const SpeechClip& clip, const std::string& family, double snr_db, double rician_k,
         std::uint64_t seed) {
        const BaselineResult r =
            baseline_transmit(clip, make_spec(family, snr_db, rician_k, seed, false), seed);
        return py::make_tuple(r.recovered, r.n_symbols);
      },
      py::arg("clip"), py::arg("family"), py::arg("snr_db"), py::arg("rician_k") = 1.0,
      py::arg("seed") = 0);

  // ---- harness
  m.def("train_and_eval_smoke", [](const std::string& train_dir, const std::string& test_dir,
                                   const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.train_dir = train_dir;
    cfg.test_dir = test_dir;
    cfg.out_dir = out_dir;
    cfg.hyper = ModelHyper{.D = 8, .N = 4, .F = 4, .L = 32, .blocks = 1, .r = 4};
    cfg.train.batch = 2;
    cfg.train.max_epochs = 2;
    cfg.eval.snr_grid = {0, 8};
    cfg.eval.trials = 1;
    const TrainResult tr = train(cfg, cfg.train.channel, out_dir + "/model.ckpt");
    const EvalReport report =
        evaluate_checkpoint(cfg, out_dir + "/model.ckpt", to_string(cfg.train.channel));
    write_results_csv(out_dir + "/results.csv", report);
    return report.rows.size();
  });
}
